#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "relrep/common.hpp"
#include "relrep/grouping.hpp"
#include "relrep/neighbors.hpp"

namespace relrep {

struct TargetSpace {
    int D = 0;
    Eigen::MatrixXd centroids;  // one unit-norm row per group
    Eigen::MatrixXd targets;    // one row per (group, member) slot
    std::vector<int> owner;     // slot -> group position within the subset
    double sigma2 = 0.0;

    int num_targets() const { return static_cast<int>(targets.rows()); }
    int num_centroids() const { return static_cast<int>(centroids.rows()); }
};

namespace detail {

inline Eigen::RowVectorXd sphere_point(int D, Rng& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::RowVectorXd v(D);
    double norm = 0.0;
    do {
        for (int j = 0; j < D; ++j) v(j) = gauss(rng);
        norm = v.norm();
    } while (norm < 1e-12);
    return v / norm;
}

}  // namespace detail

inline Eigen::MatrixXd sample_sphere(int D, int count, std::uint64_t seed) {
    if (D < 2) throw std::invalid_argument("sample_sphere: D must be >= 2");
    if (count < 1) throw std::invalid_argument("sample_sphere: count must be >= 1");
    Rng rng(derive_seed(seed, 0x73706872ULL));
    Eigen::MatrixXd out(count, D);
    for (int i = 0; i < count; ++i) out.row(i) = detail::sphere_point(D, rng);
    return out;
}

// One unit-sphere centroid per group, then per-slot targets drawn
// N(centroid, sigma2 * I) in group order. sigma2 = 0 copies centroids exactly.
inline TargetSpace build_target_space(const std::vector<Group>& subset_groups, int D,
                                      double sigma2, std::uint64_t seed) {
    if (subset_groups.empty()) throw std::invalid_argument("build_target_space: empty subset");
    if (D < 2) throw std::invalid_argument("build_target_space: D must be >= 2");
    if (sigma2 < 0.0) throw std::invalid_argument("build_target_space: sigma2 must be >= 0");

    Rng rng(derive_seed(seed, 0x74676574ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int L = static_cast<int>(subset_groups.size());
    int slots = 0;
    for (const auto& g : subset_groups) slots += static_cast<int>(g.members.size());

    TargetSpace space;
    space.D = D;
    space.sigma2 = sigma2;
    space.centroids.resize(L, D);
    for (int l = 0; l < L; ++l) space.centroids.row(l) = detail::sphere_point(D, rng);

    space.targets.resize(slots, D);
    space.owner.resize(static_cast<std::size_t>(slots));
    const double sd = std::sqrt(sigma2);
    int t = 0;
    for (int l = 0; l < L; ++l) {
        for (std::size_t m = 0; m < subset_groups[static_cast<std::size_t>(l)].members.size(); ++m, ++t) {
            for (int j = 0; j < D; ++j) space.targets(t, j) = space.centroids(l, j) + sd * gauss(rng);
            space.owner[static_cast<std::size_t>(t)] = l;
        }
    }
    return space;
}

namespace detail {

// every pair (i<j), thinned by a fixed stride when the count exceeds cap
inline std::vector<double> all_pair_distances(const Eigen::MatrixXd& pts, std::size_t cap = 2000000) {
    const int n = static_cast<int>(pts.rows());
    std::size_t total = static_cast<std::size_t>(n) * (n - 1) / 2;
    std::size_t stride = total > cap ? (total + cap - 1) / cap : 1;
    std::vector<double> out;
    out.reserve(total / stride + 1);
    std::size_t c = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++c)
            if (c % stride == 0) out.push_back((pts.row(i) - pts.row(j)).norm());
    return out;
}

inline void normalize_unit_mean(std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (mean > 0.0)
        for (double& x : v) x /= mean;
}

}  // namespace detail

// two-sample Kolmogorov-Smirnov sup-distance of sorted empirical CDFs
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double sup = 0.0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        sup = std::max(sup, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return sup;
}

// KS distance between pooled pairwise distances of grouped data samples and of
// the sampled targets, both scaled to unit mean first.
inline double distance_distribution_match(const EmbeddedSet& set, const GroupSet& groups,
                                          const TargetSpace& space) {
    if (groups.groups.empty()) throw std::invalid_argument("distance_distribution_match: no groups");
    if (space.num_targets() < 2) throw std::invalid_argument("distance_distribution_match: fewer than 2 targets");

    std::vector<char> hit(static_cast<std::size_t>(set.rows()), 0);
    for (const auto& g : groups.groups)
        for (int m : g.members) hit[static_cast<std::size_t>(m)] = 1;
    std::vector<int> covered;
    for (int i = 0; i < static_cast<int>(hit.size()); ++i)
        if (hit[static_cast<std::size_t>(i)]) covered.push_back(i);
    if (covered.size() < 2) throw std::invalid_argument("distance_distribution_match: fewer than 2 grouped samples");

    Eigen::MatrixXd sub(static_cast<Eigen::Index>(covered.size()), set.cols());
    for (std::size_t i = 0; i < covered.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = set.row(covered[i]);

    auto da = detail::all_pair_distances(sub);
    auto db = detail::all_pair_distances(space.targets);
    detail::normalize_unit_mean(da);
    detail::normalize_unit_mean(db);
    return ks_statistic(std::move(da), std::move(db));
}

// Modes of the histogram over [min, max]. Raw counts pass through a 3-bin
// box filter first; a lone sample next to an empty tail bin would otherwise
// register as a full peak. A candidate is then a strict local maximum of the
// smoothed heights (flat runs merged, counted once), and it becomes a mode
// only when it rises clearly above the deepest valley separating it from
// higher terrain: prominence is height minus the best saddle toward a
// strictly higher peak, and peaks below min_prominence * height are dropped.
inline int count_histogram_modes(const std::vector<double>& values, int num_bins = 50,
                                 double min_prominence = 0.5) {
    if (values.empty()) throw std::invalid_argument("count_histogram_modes: empty input");
    if (num_bins < 1) throw std::invalid_argument("count_histogram_modes: num_bins must be >= 1");
    if (min_prominence < 0.0 || min_prominence > 1.0)
        throw std::invalid_argument("count_histogram_modes: min_prominence must be in [0, 1]");
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (lo == hi) return 1;

    std::vector<long> counts(static_cast<std::size_t>(num_bins), 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / (hi - lo) * num_bins);
        if (b >= num_bins) b = num_bins - 1;
        if (b < 0) b = 0;
        ++counts[static_cast<std::size_t>(b)];
    }

    std::vector<double> h(static_cast<std::size_t>(num_bins), 0.0);
    for (int b = 0; b < num_bins; ++b) {
        double sum = 0.0;
        int m = 0;
        for (int k = std::max(0, b - 1); k <= std::min(num_bins - 1, b + 1); ++k, ++m)
            sum += static_cast<double>(counts[static_cast<std::size_t>(k)]);
        h[static_cast<std::size_t>(b)] = sum / m;
    }

    struct Peak {
        int left, right;  // plateau span
        double height;
    };
    std::vector<Peak> peaks;
    int i = 0;
    while (i < num_bins) {
        int j = i;
        while (j + 1 < num_bins && h[static_cast<std::size_t>(j + 1)] == h[static_cast<std::size_t>(i)]) ++j;
        double left = (i == 0) ? -1.0 : h[static_cast<std::size_t>(i - 1)];
        double right = (j == num_bins - 1) ? -1.0 : h[static_cast<std::size_t>(j + 1)];
        if (h[static_cast<std::size_t>(i)] > left && h[static_cast<std::size_t>(i)] > right)
            peaks.push_back({i, j, h[static_cast<std::size_t>(i)]});
        i = j + 1;
    }

    int modes = 0;
    for (const auto& p : peaks) {
        bool has_higher = false;
        double best_saddle = 0.0;  // highest saddle toward a strictly higher peak
        double run_min = p.height;
        for (int b = p.left - 1; b >= 0; --b) {
            run_min = std::min(run_min, h[static_cast<std::size_t>(b)]);
            if (h[static_cast<std::size_t>(b)] > p.height) {
                best_saddle = has_higher ? std::max(best_saddle, run_min) : run_min;
                has_higher = true;
                break;
            }
        }
        run_min = p.height;
        for (int b = p.right + 1; b < num_bins; ++b) {
            run_min = std::min(run_min, h[static_cast<std::size_t>(b)]);
            if (h[static_cast<std::size_t>(b)] > p.height) {
                best_saddle = has_higher ? std::max(best_saddle, run_min) : run_min;
                has_higher = true;
                break;
            }
        }
        double prominence = has_higher ? p.height - best_saddle : p.height;
        if (prominence >= min_prominence * p.height) ++modes;
    }
    return modes;
}

}  // namespace relrep
