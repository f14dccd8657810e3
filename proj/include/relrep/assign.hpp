#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "relrep/common.hpp"
#include "relrep/neighbors.hpp"
#include "relrep/targets.hpp"

namespace relrep {

struct Assignment {
    std::vector<int> perm;  // slot -> target index, a bijection
    double cost = std::numeric_limits<double>::quiet_NaN();  // NaN until embeddings were seen

    int size() const { return static_cast<int>(perm.size()); }
};

inline bool is_bijection(const Assignment& a) {
    std::vector<char> used(a.perm.size(), 0);
    for (int t : a.perm) {
        if (t < 0 || t >= a.size() || used[static_cast<std::size_t>(t)]) return false;
        used[static_cast<std::size_t>(t)] = 1;
    }
    return true;
}

inline Assignment init_assignment(int num_slots, std::uint64_t seed) {
    if (num_slots < 1) throw std::invalid_argument("init_assignment: num_slots must be >= 1");
    Assignment a;
    a.perm.resize(static_cast<std::size_t>(num_slots));
    std::iota(a.perm.begin(), a.perm.end(), 0);
    Rng rng(derive_seed(seed, 0x61736e69ULL));
    shuffle_inplace(a.perm, rng);
    return a;
}

inline double assignment_cost(const EmbeddedSet& embeddings, const TargetSpace& targets,
                              const Assignment& a) {
    double cost = 0.0;
    for (int i = 0; i < a.size(); ++i)
        cost += (embeddings.row(i) - targets.targets.row(a.perm[static_cast<std::size_t>(i)])).norm();
    return cost;
}

// num_proposals random slot-pair swaps, each kept only when it strictly
// lowers the summed slot-to-target distance. Embeddings are one row per slot.
inline Assignment local_update_pass(const EmbeddedSet& embeddings, const TargetSpace& targets,
                                    Assignment a, int num_proposals, std::uint64_t seed) {
    const int n = a.size();
    if (static_cast<int>(embeddings.rows()) != n || targets.num_targets() != n)
        throw std::invalid_argument("local_update_pass: size mismatch");
    if (num_proposals < 0) throw std::invalid_argument("local_update_pass: negative proposal count");

    Rng rng(derive_seed(seed, 0x73776170ULL));
    if (n >= 2) {
        for (int s = 0; s < num_proposals; ++s) {
            int i = uniform_index(rng, n);
            int j = uniform_index(rng, n - 1);
            if (j >= i) ++j;
            int ti = a.perm[static_cast<std::size_t>(i)];
            int tj = a.perm[static_cast<std::size_t>(j)];
            double before = (embeddings.row(i) - targets.targets.row(ti)).norm() +
                            (embeddings.row(j) - targets.targets.row(tj)).norm();
            double after = (embeddings.row(i) - targets.targets.row(tj)).norm() +
                           (embeddings.row(j) - targets.targets.row(ti)).norm();
            if (after < before) std::swap(a.perm[static_cast<std::size_t>(i)], a.perm[static_cast<std::size_t>(j)]);
        }
    }
    a.cost = assignment_cost(embeddings, targets, a);
    return a;
}

// Exact minimum-cost assignment via shortest augmenting paths. Kept small on
// purpose: this is a reference solver for tests, not a training-path routine.
inline std::vector<int> hungarian_exact(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw std::invalid_argument("hungarian_exact: matrix must be square");
    if (n < 1 || n > 64) throw std::invalid_argument("hungarian_exact: n must be in [1, 64]");
    if (!cost.allFinite()) throw std::invalid_argument("hungarian_exact: non-finite entries");

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            int i0 = p[static_cast<std::size_t>(j0)], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> perm(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j) perm[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return perm;
}

}  // namespace relrep
