#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "relrep/common.hpp"
#include "relrep/neighbors.hpp"

namespace relrep {

struct Group {
    int seed = -1;
    std::vector<int> members;  // growth order, seed first
    double compactness = 0.0;  // max pairwise member distance
};

struct GroupSet {
    std::vector<Group> groups;
    Eigen::MatrixXi membership;  // |groups| x N, one row per group

    int num_groups() const { return static_cast<int>(groups.size()); }
};

struct CompactnessBaseline {
    std::vector<double> thresholds;  // index h-2 holds the size-h threshold
    int h_max = 0;
    int num_random_groups = 0;
    double p = 0.0;

    double threshold(int h) const {
        if (h < 2 || h > h_max) throw std::invalid_argument("baseline: size out of calibrated range");
        return thresholds[static_cast<std::size_t>(h - 2)];
    }
};

inline double group_compactness(const EmbeddedSet& set, const std::vector<int>& members) {
    double worst = 0.0;
    for (std::size_t a = 0; a < members.size(); ++a)
        for (std::size_t b = a + 1; b < members.size(); ++b)
            worst = std::max(worst, (set.row(members[a]) - set.row(members[b])).norm());
    return worst;
}

// For each size h in [2, h_max], draws num_random_groups uniform h-subsets and
// records the p-th percentile of their compactness.
inline CompactnessBaseline calibrate_baseline(const EmbeddedSet& set, int h_max,
                                              int num_random_groups, double p,
                                              std::uint64_t seed) {
    const int n = static_cast<int>(set.rows());
    if (h_max > n) throw std::invalid_argument("calibrate_baseline: h_max exceeds dataset size");
    if (h_max < 2) throw std::invalid_argument("calibrate_baseline: h_max must be >= 2");
    if (num_random_groups < 100) throw std::invalid_argument("calibrate_baseline: need >= 100 random groups");
    if (!(p > 0.0) || p > 100.0) throw std::invalid_argument("calibrate_baseline: p must be in (0, 100]");

    CompactnessBaseline base;
    base.h_max = h_max;
    base.num_random_groups = num_random_groups;
    base.p = p;
    base.thresholds.resize(static_cast<std::size_t>(h_max - 1));

    for (int h = 2; h <= h_max; ++h) {
        Rng rng(derive_seed(seed, 0x67726f75ULL, static_cast<std::uint64_t>(h)));
        std::vector<double> nus(static_cast<std::size_t>(num_random_groups));
        for (int r = 0; r < num_random_groups; ++r) {
            auto idx = sample_indices_without_replacement(n, h, rng);
            nus[static_cast<std::size_t>(r)] = group_compactness(set, idx);
        }
        base.thresholds[static_cast<std::size_t>(h - 2)] = percentile(std::move(nus), p);
    }
    return base;
}

// Grows the seed's group one nearest neighbor at a time while compactness
// stays strictly below the size threshold (compactness 0 always passes). The
// first violating append is rolled back and growth stops.
inline std::optional<Group> build_group(const EmbeddedSet& set, int seed_index,
                                        const CompactnessBaseline& baseline) {
    const int n = static_cast<int>(set.rows());
    if (seed_index < 0 || seed_index >= n) throw std::invalid_argument("build_group: seed index out of range");
    if (n < 2) return std::nullopt;

    const int reach = std::min(baseline.h_max - 1, n - 1);
    NeighborList nn = knn(set, seed_index, reach);

    std::vector<int> members{seed_index};
    double nu = 0.0;
    std::vector<double> to_new;
    for (int r = 0; r < reach; ++r) {
        int cand = nn.neighbors[static_cast<std::size_t>(r)];
        double cand_nu = nu;
        for (int m : members) cand_nu = std::max(cand_nu, (set.row(m) - set.row(cand)).norm());
        double thr = baseline.threshold(static_cast<int>(members.size()) + 1);
        if (!(cand_nu < thr || cand_nu == 0.0)) break;
        members.push_back(cand);
        nu = cand_nu;
    }

    if (members.size() < 2) return std::nullopt;
    Group g;
    g.seed = seed_index;
    g.members = std::move(members);
    g.compactness = nu;
    return g;
}

inline GroupSet extract_groups(const EmbeddedSet& set, const CompactnessBaseline& baseline) {
    const int n = static_cast<int>(set.rows());
    GroupSet gs;
    std::map<std::vector<int>, std::size_t> seen;  // sorted members -> group slot
    for (int i = 0; i < n; ++i) {
        auto g = build_group(set, i, baseline);
        if (!g) continue;
        std::vector<int> key = g->members;
        std::sort(key.begin(), key.end());
        if (seen.count(key)) continue;
        seen.emplace(std::move(key), gs.groups.size());
        gs.groups.push_back(std::move(*g));
    }
    gs.membership = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(gs.groups.size()), n);
    for (std::size_t g = 0; g < gs.groups.size(); ++g)
        for (int m : gs.groups[g].members)
            gs.membership(static_cast<Eigen::Index>(g), m) = 1;
    return gs;
}

// fraction of samples belonging to at least one group
inline double coverage(const GroupSet& gs, int num_samples) {
    if (num_samples < 1) throw std::invalid_argument("coverage: need at least one sample");
    std::vector<char> hit(static_cast<std::size_t>(num_samples), 0);
    for (const auto& g : gs.groups)
        for (int m : g.members) hit[static_cast<std::size_t>(m)] = 1;
    int covered = 0;
    for (char h : hit) covered += h;
    return static_cast<double>(covered) / num_samples;
}

inline std::string to_text(const GroupSet& gs) {
    std::ostringstream out;
    for (const auto& g : gs.groups) {
        for (std::size_t i = 0; i < g.members.size(); ++i) {
            if (i) out << ' ';
            out << g.members[i];
        }
        out << '\n';
    }
    return out.str();
}

inline GroupSet group_set_from_text(const std::string& text, const EmbeddedSet& set) {
    GroupSet gs;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Group g;
        int id;
        while (ls >> id) g.members.push_back(id);
        if (g.members.size() < 2) throw std::runtime_error("group line with fewer than 2 members");
        g.seed = g.members[0];
        g.compactness = group_compactness(set, g.members);
        gs.groups.push_back(std::move(g));
    }
    const int n = static_cast<int>(set.rows());
    gs.membership = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(gs.groups.size()), n);
    for (std::size_t g = 0; g < gs.groups.size(); ++g)
        for (int m : gs.groups[g].members) {
            if (m < 0 || m >= n) throw std::runtime_error("group member index out of range");
            gs.membership(static_cast<Eigen::Index>(g), m) = 1;
        }
    return gs;
}

}  // namespace relrep
