#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "relrep/common.hpp"

namespace relrep {

// Rows are samples throughout this header.
using EmbeddedSet = Eigen::MatrixXd;

struct NeighborList {
    int query = -1;
    std::vector<int> neighbors;     // ascending distance, ties by smaller index
    std::vector<double> distances;  // matching, nondecreasing
};

inline double pairwise_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                                const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("pairwise_distance: dimension mismatch");
    return (a - b).norm();
}

inline Eigen::MatrixXd distance_matrix(const EmbeddedSet& points) {
    const int n = static_cast<int>(points.rows());
    Eigen::MatrixXd dist(n, n);
    for (int i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            double dij = (points.row(i) - points.row(j)).norm();
            dist(i, j) = dij;
            dist(j, i) = dij;
        }
    }
    return dist;
}

inline NeighborList knn(const EmbeddedSet& set, int query, int k) {
    const int n = static_cast<int>(set.rows());
    if (query < 0 || query >= n) throw std::invalid_argument("knn: query index out of range");
    if (k < 1 || k > n - 1) throw std::invalid_argument("knn: k must be in [1, n-1]");

    std::vector<std::pair<double, int>> cand;
    cand.reserve(static_cast<std::size_t>(n - 1));
    for (int i = 0; i < n; ++i) {
        if (i == query) continue;
        cand.emplace_back((set.row(query) - set.row(i)).norm(), i);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());

    NeighborList out;
    out.query = query;
    out.neighbors.resize(static_cast<std::size_t>(k));
    out.distances.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        out.neighbors[static_cast<std::size_t>(i)] = cand[static_cast<std::size_t>(i)].second;
        out.distances[static_cast<std::size_t>(i)] = cand[static_cast<std::size_t>(i)].first;
    }
    return out;
}

// Nearest-rank percentile, p in (0, 100]. For p = 100 this is the maximum.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (!(p > 0.0) || p > 100.0) throw std::invalid_argument("percentile: p must be in (0, 100]");
    std::sort(values.begin(), values.end());
    const int n = static_cast<int>(values.size());
    int rank = static_cast<int>(std::ceil(p / 100.0 * n));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return values[static_cast<std::size_t>(rank - 1)];
}

}  // namespace relrep
