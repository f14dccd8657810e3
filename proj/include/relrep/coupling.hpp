#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "relrep/common.hpp"
#include "relrep/grouping.hpp"
#include "relrep/neighbors.hpp"
#include "relrep/partition.hpp"

namespace relrep {

// transitivity constraint: anchor ~ positive through a shared group,
// positive vs negative reliably dissimilar, positive and negative living in
// the other subset
struct Triplet {
    int anchor = -1;
    int positive = -1;
    int negative = -1;
    int subset_m = -1;
    int subset_n = -1;
};

namespace detail {

inline std::vector<std::vector<char>> sample_subset_membership(const GroupSet& groups,
                                                               const Partition& part,
                                                               int num_samples) {
    const int K = static_cast<int>(part.subsets.size());
    std::vector<std::vector<char>> in_subset(
        static_cast<std::size_t>(K), std::vector<char>(static_cast<std::size_t>(num_samples), 0));
    for (int k = 0; k < K; ++k)
        for (int g : part.subsets[static_cast<std::size_t>(k)])
            for (int m : groups.groups[static_cast<std::size_t>(g)].members)
                in_subset[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)] = 1;
    return in_subset;
}

}  // namespace detail

// For every ordered subset pair (m, n) collects triplets (i, j, k): i and j
// share a group while i is exclusive to m's samples and j, k exclusive to
// n's; k is at or beyond the dissim_percentile of j's distance distribution.
// Each anchor keeps at most per_anchor_cap triplets, sampled deterministically.
inline std::vector<std::vector<Triplet>> mine_triplets(const GroupSet& groups,
                                                       const Partition& part,
                                                       const EmbeddedSet& set,
                                                       int per_anchor_cap,
                                                       double dissim_percentile,
                                                       std::uint64_t seed) {
    const int n_samples = static_cast<int>(set.rows());
    const int K = static_cast<int>(part.subsets.size());
    if (per_anchor_cap < 1) throw std::invalid_argument("mine_triplets: per_anchor_cap must be >= 1");
    if (!(dissim_percentile > 0.0) || dissim_percentile > 100.0)
        throw std::invalid_argument("mine_triplets: dissim_percentile must be in (0, 100]");
    if (groups.membership.cols() != n_samples)
        throw std::invalid_argument("mine_triplets: groups and set disagree on sample count");

    auto in_subset = detail::sample_subset_membership(groups, part, n_samples);
    std::vector<std::vector<Triplet>> out(static_cast<std::size_t>(K));
    if (K < 2 || n_samples < 3) return out;

    std::vector<double> dissim_threshold(static_cast<std::size_t>(n_samples),
                                         std::numeric_limits<double>::quiet_NaN());
    auto threshold_of = [&](int j) {
        auto& cached = dissim_threshold[static_cast<std::size_t>(j)];
        if (std::isnan(cached)) {
            std::vector<double> dists;
            dists.reserve(static_cast<std::size_t>(n_samples - 1));
            for (int u = 0; u < n_samples; ++u)
                if (u != j) dists.push_back((set.row(j) - set.row(u)).norm());
            cached = percentile(std::move(dists), dissim_percentile);
        }
        return cached;
    };

    for (int m = 0; m < K; ++m) {
        for (int n = 0; n < K; ++n) {
            if (n == m) continue;
            const auto& in_m = in_subset[static_cast<std::size_t>(m)];
            const auto& in_n = in_subset[static_cast<std::size_t>(n)];

            std::vector<int> negatives;
            for (int u = 0; u < n_samples; ++u)
                if (in_n[static_cast<std::size_t>(u)] && !in_m[static_cast<std::size_t>(u)])
                    negatives.push_back(u);
            if (negatives.empty()) continue;

            // anchor -> exclusive positives reachable through any shared group
            std::vector<std::pair<int, std::vector<int>>> anchors;
            {
                std::map<int, std::set<int>> pos_by_anchor;
                for (const auto& g : groups.groups) {
                    for (int i : g.members) {
                        if (!in_m[static_cast<std::size_t>(i)] || in_n[static_cast<std::size_t>(i)]) continue;
                        for (int j : g.members) {
                            if (j == i) continue;
                            if (!in_n[static_cast<std::size_t>(j)] || in_m[static_cast<std::size_t>(j)]) continue;
                            pos_by_anchor[i].insert(j);
                        }
                    }
                }
                for (auto& [i, js] : pos_by_anchor)
                    anchors.emplace_back(i, std::vector<int>(js.begin(), js.end()));
            }

            for (auto& [i, js] : anchors) {
                std::vector<Triplet> candidates;
                for (int j : js) {
                    double thr = threshold_of(j);
                    for (int k : negatives) {
                        if (k == j) continue;
                        if ((set.row(j) - set.row(k)).norm() < thr) continue;
                        Triplet t;
                        t.anchor = i;
                        t.positive = j;
                        t.negative = k;
                        t.subset_m = m;
                        t.subset_n = n;
                        candidates.push_back(t);
                    }
                }
                if (static_cast<int>(candidates.size()) > per_anchor_cap) {
                    Rng rng(derive_seed(seed, 0x74726970ULL, static_cast<std::uint64_t>(m),
                                        static_cast<std::uint64_t>(i)));
                    auto keep = sample_indices_without_replacement(
                        static_cast<int>(candidates.size()), per_anchor_cap, rng);
                    std::sort(keep.begin(), keep.end());
                    std::vector<Triplet> kept;
                    kept.reserve(keep.size());
                    for (int idx : keep) kept.push_back(candidates[static_cast<std::size_t>(idx)]);
                    candidates = std::move(kept);
                }
                auto& sink = out[static_cast<std::size_t>(m)];
                sink.insert(sink.end(), candidates.begin(), candidates.end());
            }
        }
    }
    return out;
}

}  // namespace relrep
