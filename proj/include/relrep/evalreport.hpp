#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "relrep/common.hpp"
#include "relrep/grouping.hpp"
#include "relrep/neighbors.hpp"

namespace relrep {

// Labels enter the library only through this header (and the analyze tool
// built on it); training code never sees them.

inline double knn_accuracy(const EmbeddedSet& embeddings, const std::vector<int>& labels, int k) {
    const int n = static_cast<int>(embeddings.rows());
    if (labels.empty()) throw std::invalid_argument("knn_accuracy: labels required");
    if (static_cast<int>(labels.size()) != n) throw std::invalid_argument("knn_accuracy: label count mismatch");
    if (k < 1 || k >= n) throw std::invalid_argument("knn_accuracy: k must be in [1, n-1]");

    int correct = 0;
    for (int i = 0; i < n; ++i) {
        NeighborList nn = knn(embeddings, i, k);
        std::map<int, int> votes;
        for (int j : nn.neighbors) ++votes[labels[static_cast<std::size_t>(j)]];
        int best_label = -1, best_count = -1;
        for (const auto& [label, count] : votes)
            if (count > best_count) { best_count = count; best_label = label; }
        if (best_label == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / n;
}

inline double single_group_correctness(const Group& g, const std::vector<int>& labels) {
    std::map<int, int> counts;
    for (int m : g.members) ++counts[labels[static_cast<std::size_t>(m)]];
    int modal = 0;
    for (const auto& [label, count] : counts) modal = std::max(modal, count);
    return static_cast<double>(modal) / static_cast<double>(g.members.size());
}

// per group size h, mean fraction of members carrying the group's modal label
inline std::map<int, double> group_correctness(const GroupSet& groups, const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("group_correctness: labels required");
    std::map<int, double> sums;
    std::map<int, int> counts;
    for (const auto& g : groups.groups) {
        int h = static_cast<int>(g.members.size());
        sums[h] += single_group_correctness(g, labels);
        ++counts[h];
    }
    std::map<int, double> out;
    for (const auto& [h, sum] : sums) out[h] = sum / counts[h];
    return out;
}

inline double group_correctness_overall(const GroupSet& groups, const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("group_correctness: labels required");
    if (groups.groups.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& g : groups.groups) sum += single_group_correctness(g, labels);
    return sum / static_cast<double>(groups.groups.size());
}

// fraction of samples belonging to at least one group of size exactly h
inline std::map<int, double> coverage_by_size(const GroupSet& groups, int num_samples) {
    std::map<int, std::vector<char>> hit;
    for (const auto& g : groups.groups) {
        auto& mask = hit[static_cast<int>(g.members.size())];
        if (mask.empty()) mask.assign(static_cast<std::size_t>(num_samples), 0);
        for (int m : g.members) mask[static_cast<std::size_t>(m)] = 1;
    }
    std::map<int, double> out;
    for (const auto& [h, mask] : hit) {
        int covered = 0;
        for (char c : mask) covered += c;
        out[h] = static_cast<double>(covered) / num_samples;
    }
    return out;
}

// NMI between labels and connected components of overlapping groups, over
// covered samples only; 0 when either side is degenerate
inline double nmi_grouped(const GroupSet& groups, const std::vector<int>& labels, int num_samples) {
    if (labels.empty()) throw std::invalid_argument("nmi_grouped: labels required");
    const int ng = groups.num_groups();
    if (ng == 0) return 0.0;

    std::vector<int> parent(static_cast<std::size_t>(ng));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };

    std::vector<int> owner(static_cast<std::size_t>(num_samples), -1);
    for (int g = 0; g < ng; ++g) {
        for (int m : groups.groups[static_cast<std::size_t>(g)].members) {
            int& o = owner[static_cast<std::size_t>(m)];
            if (o < 0) o = g;
            else parent[static_cast<std::size_t>(find(o))] = find(g);
        }
    }

    std::map<std::pair<int, int>, int> joint;
    std::map<int, int> cx, cy;
    int covered = 0;
    for (int i = 0; i < num_samples; ++i) {
        if (owner[static_cast<std::size_t>(i)] < 0) continue;
        int y = find(owner[static_cast<std::size_t>(i)]);
        int x = labels[static_cast<std::size_t>(i)];
        ++joint[{x, y}];
        ++cx[x];
        ++cy[y];
        ++covered;
    }
    if (covered == 0 || cx.size() < 2 || cy.size() < 2) return 0.0;

    const double n = static_cast<double>(covered);
    double hx = 0.0, hy = 0.0, mi = 0.0;
    for (const auto& [x, c] : cx) hx -= (c / n) * std::log(c / n);
    for (const auto& [y, c] : cy) hy -= (c / n) * std::log(c / n);
    for (const auto& [xy, c] : joint) {
        double pxy = c / n;
        double px = cx[xy.first] / n;
        double py = cy[xy.second] / n;
        mi += pxy * std::log(pxy / (px * py));
    }
    if (hx <= 0.0 || hy <= 0.0) return 0.0;
    return mi / std::sqrt(hx * hy);
}

namespace detail {

inline std::vector<double> sorted_distances_from(const EmbeddedSet& emb, int query) {
    const int n = static_cast<int>(emb.rows());
    std::vector<std::pair<double, int>> cand;
    cand.reserve(static_cast<std::size_t>(n - 1));
    for (int i = 0; i < n; ++i)
        if (i != query) cand.emplace_back((emb.row(query) - emb.row(i)).norm(), i);
    std::sort(cand.begin(), cand.end());
    std::vector<double> out(cand.size());
    for (std::size_t i = 0; i < cand.size(); ++i) out[i] = cand[i].first;
    return out;
}

}  // namespace detail

struct RatioCurve {
    std::vector<double> mean_ratio;  // index r: mean over queries of d_{r+1} / d_{r+2}
    long long reliable_pairs = 0;    // ratios strictly below 0.95
};

inline RatioCurve nn_ratio_curve(const EmbeddedSet& embeddings) {
    const int n = static_cast<int>(embeddings.rows());
    if (n < 3) throw std::invalid_argument("nn_ratio_curve: need at least 3 points");
    RatioCurve curve;
    curve.mean_ratio.assign(static_cast<std::size_t>(n - 2), 0.0);
    for (int q = 0; q < n; ++q) {
        auto d = detail::sorted_distances_from(embeddings, q);
        for (int r = 0; r + 1 < static_cast<int>(d.size()); ++r) {
            double ratio = d[static_cast<std::size_t>(r + 1)] > 0.0
                               ? d[static_cast<std::size_t>(r)] / d[static_cast<std::size_t>(r + 1)]
                               : 1.0;
            curve.mean_ratio[static_cast<std::size_t>(r)] += ratio;
            if (ratio < 0.95) ++curve.reliable_pairs;
        }
    }
    for (double& v : curve.mean_ratio) v /= n;
    return curve;
}

inline std::vector<double> sorted_similarity_curve(const EmbeddedSet& embeddings, int query) {
    const int n = static_cast<int>(embeddings.rows());
    if (query < 0 || query >= n) throw std::invalid_argument("sorted_similarity_curve: query out of range");
    if (n < 2) throw std::invalid_argument("sorted_similarity_curve: need at least 2 points");
    return detail::sorted_distances_from(embeddings, query);
}

// Smallest grid variance at which a neighbor's rank w.r.t. the query changes
// in at least half of the Monte-Carlo perturbations; +inf when none does.
// Output index r corresponds to the r-th nearest baseline neighbor.
inline std::vector<double> rank_stability_under_noise(const EmbeddedSet& embeddings, int query,
                                                      const std::vector<double>& noise_grid,
                                                      std::uint64_t seed, int trials = 20) {
    const int n = static_cast<int>(embeddings.rows());
    if (noise_grid.empty()) throw std::invalid_argument("rank_stability_under_noise: empty grid");
    if (!std::is_sorted(noise_grid.begin(), noise_grid.end()))
        throw std::invalid_argument("rank_stability_under_noise: grid must ascend");
    if (query < 0 || query >= n) throw std::invalid_argument("rank_stability_under_noise: query out of range");
    if (n < 3) throw std::invalid_argument("rank_stability_under_noise: need at least 3 points");
    if (trials < 1) throw std::invalid_argument("rank_stability_under_noise: trials must be >= 1");

    auto rank_of = [&](const EmbeddedSet& pts) {
        std::vector<std::pair<double, int>> cand;
        cand.reserve(static_cast<std::size_t>(n - 1));
        for (int i = 0; i < n; ++i)
            if (i != query) cand.emplace_back((pts.row(query) - pts.row(i)).norm(), i);
        std::sort(cand.begin(), cand.end());
        std::vector<int> rank(static_cast<std::size_t>(n), -1);
        for (std::size_t r = 0; r < cand.size(); ++r) rank[static_cast<std::size_t>(cand[r].second)] = static_cast<int>(r);
        return rank;
    };

    std::vector<int> base_rank = rank_of(embeddings);
    std::vector<int> neighbor_at_rank(static_cast<std::size_t>(n - 1), -1);
    for (int i = 0; i < n; ++i)
        if (i != query) neighbor_at_rank[static_cast<std::size_t>(base_rank[static_cast<std::size_t>(i)])] = i;

    std::vector<double> flip(static_cast<std::size_t>(n - 1), std::numeric_limits<double>::infinity());
    for (std::size_t gi = 0; gi < noise_grid.size(); ++gi) {
        double var = noise_grid[gi];
        if (var < 0.0) throw std::invalid_argument("rank_stability_under_noise: negative variance");
        std::vector<int> flips(static_cast<std::size_t>(n - 1), 0);
        if (var > 0.0) {
            double sd = std::sqrt(var);
            for (int t = 0; t < trials; ++t) {
                Rng rng(derive_seed(seed, 0x6e6f6973ULL, static_cast<std::uint64_t>(gi),
                                    static_cast<std::uint64_t>(t)));
                std::normal_distribution<double> gauss(0.0, 1.0);
                EmbeddedSet noisy = embeddings;
                for (Eigen::Index i = 0; i < noisy.rows(); ++i)
                    for (Eigen::Index j = 0; j < noisy.cols(); ++j) noisy(i, j) += sd * gauss(rng);
                std::vector<int> r = rank_of(noisy);
                for (int i = 0; i < n; ++i)
                    if (i != query && r[static_cast<std::size_t>(i)] != base_rank[static_cast<std::size_t>(i)])
                        ++flips[static_cast<std::size_t>(base_rank[static_cast<std::size_t>(i)])];
            }
        }
        for (std::size_t r = 0; r < flip.size(); ++r)
            if (std::isinf(flip[r]) && 2 * flips[r] >= trials) flip[r] = var;
    }
    return flip;
}

// ---- figure data files ----

namespace detail {

inline std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

}  // namespace detail

inline void write_fig2_csv(const std::string& path, const RatioCurve& curve) {
    auto out = detail::open_csv(path);
    out << "rank,mean_ratio\n";
    for (std::size_t r = 0; r < curve.mean_ratio.size(); ++r)
        out << (r + 1) << ',' << format_g9(curve.mean_ratio[r]) << '\n';
}

inline void write_fig3_csv(const std::string& path, const std::vector<double>& sorted_dists) {
    auto out = detail::open_csv(path);
    out << "rank,distance\n";
    for (std::size_t r = 0; r < sorted_dists.size(); ++r)
        out << (r + 1) << ',' << format_g9(sorted_dists[r]) << '\n';
}

inline void write_fig4_csv(const std::string& path, const std::vector<double>& flip_sigma2) {
    auto out = detail::open_csv(path);
    out << "rank,min_sigma2\n";
    for (std::size_t r = 0; r < flip_sigma2.size(); ++r)
        out << (r + 1) << ',' << format_g9(flip_sigma2[r]) << '\n';
}

inline void write_fig5a_csv(const std::string& path, const std::map<int, double>& correctness,
                            const std::map<int, double>& coverage) {
    auto out = detail::open_csv(path);
    out << "h,correctness,coverage\n";
    for (const auto& [h, c] : correctness) {
        auto cov = coverage.find(h);
        out << h << ',' << format_g9(c) << ','
            << format_g9(cov == coverage.end() ? 0.0 : cov->second) << '\n';
    }
}

inline void write_fig5b_csv(const std::string& path, const std::vector<double>& data_distances,
                            const std::vector<double>& target_distances) {
    auto out = detail::open_csv(path);
    out << "source,distance\n";
    for (double d : data_distances) out << "data," << format_g9(d) << '\n';
    for (double d : target_distances) out << "targets," << format_g9(d) << '\n';
}

struct Fig7Row {
    int iteration;
    int h;
    double correctness;
};

inline void write_fig7_csv(const std::string& path, const std::vector<Fig7Row>& rows) {
    auto out = detail::open_csv(path);
    out << "iteration,h,correctness\n";
    for (const auto& r : rows)
        out << r.iteration << ',' << r.h << ',' << format_g9(r.correctness) << '\n';
}

struct Fig8Row {
    int iteration;
    double overall;
    double per_subset_mean;
};

inline void write_fig8_csv(const std::string& path, const std::vector<Fig8Row>& rows) {
    auto out = detail::open_csv(path);
    out << "iteration,overall,per_subset_mean\n";
    for (const auto& r : rows)
        out << r.iteration << ',' << format_g9(r.overall) << ',' << format_g9(r.per_subset_mean) << '\n';
}

}  // namespace relrep
