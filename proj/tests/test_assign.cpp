#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "relrep/assign.hpp"
#include "relrep/targets.hpp"

using namespace relrep;

namespace {

TargetSpace space_from_rows(const Eigen::MatrixXd& rows) {
    TargetSpace s;
    s.D = static_cast<int>(rows.cols());
    s.targets = rows;
    s.centroids = rows;
    s.owner.resize(static_cast<std::size_t>(rows.rows()));
    for (int i = 0; i < rows.rows(); ++i) s.owner[static_cast<std::size_t>(i)] = i;
    return s;
}

Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& emb, const Eigen::MatrixXd& tgt) {
    const int n = static_cast<int>(emb.rows());
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) c(i, j) = (emb.row(i) - tgt.row(j)).norm();
    return c;
}

}  // namespace

TEST(InitAssignment, SingleSlotIdentity) {
    Assignment a = init_assignment(1, 42);
    ASSERT_EQ(a.size(), 1);
    EXPECT_EQ(a.perm[0], 0);
}

TEST(InitAssignment, BijectionAndDeterminism) {
    Assignment a = init_assignment(9, 7);
    Assignment b = init_assignment(9, 7);
    EXPECT_EQ(a.perm, b.perm);
    EXPECT_TRUE(is_bijection(a));
    EXPECT_THROW(init_assignment(0, 1), std::invalid_argument);
}

TEST(InitAssignment, UniformOverPermutations) {
    std::map<std::vector<int>, int> counts;
    const int draws = 10000;
    for (int s = 0; s < draws; ++s) counts[init_assignment(5, static_cast<std::uint64_t>(s)).perm]++;
    EXPECT_EQ(counts.size(), 120u);
    const double p = 1.0 / 120.0;
    const double mean = draws * p;
    const double sd = std::sqrt(draws * p * (1.0 - p));
    for (const auto& [perm, c] : counts) {
        EXPECT_GE(c, mean - 3.0 * sd);
        EXPECT_LE(c, mean + 3.0 * sd);
    }
}

TEST(AssignmentCost, MatchesHandComputation) {
    Eigen::MatrixXd emb(2, 2), tgt(2, 2);
    emb << 0, 0, 1, 0;
    tgt << 0, 3, 1, 4;
    Assignment a;
    a.perm = {1, 0};
    // slot 0 -> target 1 at distance sqrt(1+16), slot 1 -> target 0 at sqrt(1+9)
    double want = std::sqrt(17.0) + std::sqrt(10.0);
    EXPECT_NEAR(assignment_cost(emb, space_from_rows(tgt), a), want, 1e-12);
}

TEST(LocalUpdate, OptimalAssignmentUnchanged) {
    Rng rng(3);
    Eigen::MatrixXd pts = oracle::random_matrix(6, 3, rng);
    TargetSpace space = space_from_rows(pts);
    Assignment a;
    a.perm = {0, 1, 2, 3, 4, 5};
    Assignment out = local_update_pass(pts, space, a, 200, 9);
    EXPECT_EQ(out.perm, a.perm);
    EXPECT_NEAR(out.cost, 0.0, 1e-12);
}

TEST(LocalUpdate, FixesCrossedPair) {
    Eigen::MatrixXd emb(2, 2);
    emb << 0, 0, 10, 0;
    Eigen::MatrixXd tgt(2, 2);
    tgt << 10, 0, 0, 0;  // target 0 sits at slot 1's point and vice versa
    TargetSpace space = space_from_rows(tgt);
    Assignment crossed;
    crossed.perm = {1, 0};
    Assignment fixed = local_update_pass(emb, space, crossed, 1, 4);
    EXPECT_EQ(fixed.perm, (std::vector<int>{1, 0})) << "already optimal, must stay";

    Assignment bad;
    bad.perm = {0, 1};
    Assignment repaired = local_update_pass(emb, space, bad, 1, 4);
    EXPECT_EQ(repaired.perm, (std::vector<int>{1, 0}));
    EXPECT_NEAR(repaired.cost, 0.0, 1e-12);
}

TEST(LocalUpdate, CostNeverIncreasesAcrossPasses) {
    Rng rng(21);
    Eigen::MatrixXd emb = oracle::random_matrix(8, 4, rng);
    Eigen::MatrixXd tgt = oracle::random_matrix(8, 4, rng);
    TargetSpace space = space_from_rows(tgt);
    Assignment a = init_assignment(8, 5);
    double prev = assignment_cost(emb, space, a);
    for (int pass = 0; pass < 12; ++pass) {
        a = local_update_pass(emb, space, a, 20, 100 + static_cast<std::uint64_t>(pass));
        EXPECT_TRUE(is_bijection(a));
        EXPECT_LE(a.cost, prev + 1e-12);
        prev = a.cost;
    }
    double opt = oracle::hungarian_bruteforce(cost_matrix(emb, tgt));
    EXPECT_GE(a.cost, opt - 1e-9);
}

TEST(LocalUpdate, DeterministicAndErrors) {
    Rng rng(31);
    Eigen::MatrixXd emb = oracle::random_matrix(5, 2, rng);
    Eigen::MatrixXd tgt = oracle::random_matrix(5, 2, rng);
    TargetSpace space = space_from_rows(tgt);
    Assignment a = init_assignment(5, 1);
    Assignment x = local_update_pass(emb, space, a, 30, 77);
    Assignment y = local_update_pass(emb, space, a, 30, 77);
    EXPECT_EQ(x.perm, y.perm);
    EXPECT_DOUBLE_EQ(x.cost, y.cost);

    Assignment wrong;
    wrong.perm = {0, 1, 2};
    EXPECT_THROW(local_update_pass(emb, space, wrong, 10, 0), std::invalid_argument);
    EXPECT_THROW(local_update_pass(emb, space, a, -1, 0), std::invalid_argument);
}

TEST(LocalUpdate, NearsHungarianOnMostInstances) {
    int ok = 0;
    const int trials = 25;
    for (int t = 0; t < trials; ++t) {
        Rng rng(500 + static_cast<std::uint64_t>(t));
        Eigen::MatrixXd emb = oracle::random_matrix(8, 4, rng);
        Eigen::MatrixXd tgt = oracle::random_matrix(8, 4, rng);
        TargetSpace space = space_from_rows(tgt);
        Assignment a = init_assignment(8, 900 + static_cast<std::uint64_t>(t));
        for (int pass = 0; pass < 50; ++pass)
            a = local_update_pass(emb, space, a, 16, derive_seed(3000 + static_cast<std::uint64_t>(t), 1, static_cast<std::uint64_t>(pass)));
        double opt = oracle::hungarian_bruteforce(cost_matrix(emb, tgt));
        if (a.cost <= 1.10 * opt + 1e-12) ++ok;
    }
    EXPECT_GE(ok, 22) << ok << "/" << trials;
}

TEST(Hungarian, HandCases) {
    Eigen::MatrixXd favor_identity = Eigen::MatrixXd::Ones(3, 3);
    favor_identity(0, 0) = favor_identity(1, 1) = favor_identity(2, 2) = 0.0;
    EXPECT_EQ(hungarian_exact(favor_identity), (std::vector<int>{0, 1, 2}));

    Eigen::MatrixXd two(2, 2);
    two << 1, 2, 2, 1;
    std::vector<int> perm = hungarian_exact(two);
    EXPECT_EQ(perm, (std::vector<int>{0, 1}));

    Eigen::MatrixXd one(1, 1);
    one << 5.0;
    EXPECT_EQ(hungarian_exact(one), (std::vector<int>{0}));
}

TEST(Hungarian, MatchesFactorialScan) {
    for (int t = 0; t < 20; ++t) {
        Rng rng(42 + static_cast<std::uint64_t>(t));
        Eigen::MatrixXd cost = oracle::random_matrix(6, 6, rng, 0.0, 10.0);
        std::vector<int> perm = hungarian_exact(cost);
        Assignment wrapped;
        wrapped.perm = perm;
        EXPECT_TRUE(is_bijection(wrapped));
        double got = 0.0;
        for (int i = 0; i < 6; ++i) got += cost(i, perm[static_cast<std::size_t>(i)]);
        double want = oracle::hungarian_bruteforce(cost);
        EXPECT_NEAR(got, want, 1e-9);
    }
}

TEST(Hungarian, Errors) {
    Eigen::MatrixXd rect = Eigen::MatrixXd::Zero(2, 3);
    EXPECT_THROW(hungarian_exact(rect), std::invalid_argument);
    Eigen::MatrixXd huge = Eigen::MatrixXd::Zero(65, 65);
    EXPECT_THROW(hungarian_exact(huge), std::invalid_argument);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(hungarian_exact(bad), std::invalid_argument);
}
