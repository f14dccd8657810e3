#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "relrep/common.hpp"
#include "relrep/grouping.hpp"
#include "relrep/neighbors.hpp"

namespace relrep {

struct PartitionInstance {
    Eigen::MatrixXd S;       // mean inter-group distances, symmetric
    Eigen::MatrixXi C;       // group x sample membership
    int K = 0;
    int groups_per_subset = 0;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double norm_exponent = 1.0;

    int num_groups() const { return static_cast<int>(S.rows()); }
};

struct Partition {
    Eigen::MatrixXi A;                     // group x subset, binary
    std::vector<std::vector<int>> subsets; // ascending group indices per subset
    double objective = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> trace;             // objective after init and each accepted move
};

inline PartitionInstance build_instance(const EmbeddedSet& set, const GroupSet& groups,
                                        int K, int groups_per_subset,
                                        double lambda1, double lambda2,
                                        double norm_exponent = 1.0) {
    const int g = groups.num_groups();
    if (K < 1) throw std::invalid_argument("build_instance: K must be >= 1");
    if (g < K) throw std::invalid_argument("build_instance: fewer groups than subsets");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("build_instance: negative lambda");
    if (!(norm_exponent > 0.0)) throw std::invalid_argument("build_instance: norm_exponent must be > 0");

    PartitionInstance inst;
    inst.K = K;
    inst.groups_per_subset = groups_per_subset;
    inst.lambda1 = lambda1;
    inst.lambda2 = lambda2;
    inst.norm_exponent = norm_exponent;
    inst.C = groups.membership;

    Eigen::MatrixXd dist = distance_matrix(set);
    inst.S.resize(g, g);
    for (int a = 0; a < g; ++a) {
        const auto& ga = groups.groups[static_cast<std::size_t>(a)].members;
        for (int b = a; b < g; ++b) {
            const auto& gb = groups.groups[static_cast<std::size_t>(b)].members;
            double sum = 0.0;
            for (int i : ga)
                for (int j : gb) sum += dist(i, j);
            double mean = sum / (static_cast<double>(ga.size()) * static_cast<double>(gb.size()));
            inst.S(a, b) = mean;
            inst.S(b, a) = mean;
        }
    }
    return inst;
}

// Value to MINIMIZE. The within-subset mutual-distance mass enters negated so
// minimizing drives subsets toward mutually distant groups; the lambda terms
// reward covering many sample slots.
inline double partition_objective(const PartitionInstance& inst, const Eigen::MatrixXi& A) {
    const int g = inst.num_groups();
    if (A.rows() != g || A.cols() != inst.K) throw std::invalid_argument("partition_objective: shape mismatch");
    for (int i = 0; i < g; ++i)
        for (int k = 0; k < inst.K; ++k)
            if (A(i, k) != 0 && A(i, k) != 1) throw std::invalid_argument("partition_objective: non-binary entry");

    Eigen::MatrixXd Ad = A.cast<double>();
    double trace_full = (Ad.transpose() * inst.S * Ad).trace();
    double trace_diag = (Ad.transpose() * inst.S.diagonal().asDiagonal() * Ad).trace();

    Eigen::MatrixXd counts = Ad.transpose() * inst.C.cast<double>();  // K x N per-subset slot counts
    const double p = inst.norm_exponent;
    double l1_term = 0.0;
    for (int k = 0; k < inst.K; ++k)
        for (int i = 0; i < counts.cols(); ++i)
            l1_term += std::pow(counts(k, i), p);
    double l2_term = 0.0;
    Eigen::RowVectorXd total = counts.colwise().sum();
    for (int i = 0; i < total.size(); ++i) l2_term += std::pow(total(i), p);

    return -(trace_full - trace_diag) - inst.lambda1 * l1_term - inst.lambda2 * l2_term;
}

namespace detail {

// Incremental solver state. R(g,k) caches sum of S(g, u) over u assigned to k.
struct PartitionSearch {
    const PartitionInstance& inst;
    Eigen::MatrixXi A;
    Eigen::MatrixXd R;
    std::vector<std::vector<int>> cols;  // members per subset
    std::vector<int> where;              // subset of each group, -1 if unassigned
    std::vector<double> slot_weight;     // per-group sample count through C
    double objective;

    explicit PartitionSearch(const PartitionInstance& instance)
        : inst(instance),
          A(Eigen::MatrixXi::Zero(instance.num_groups(), instance.K)),
          R(Eigen::MatrixXd::Zero(instance.num_groups(), instance.K)),
          cols(static_cast<std::size_t>(instance.K)),
          where(static_cast<std::size_t>(instance.num_groups()), -1),
          slot_weight(static_cast<std::size_t>(instance.num_groups()), 0.0),
          objective(0.0) {
        for (int g = 0; g < inst.num_groups(); ++g)
            slot_weight[static_cast<std::size_t>(g)] = inst.C.row(g).sum();
    }

    bool flat_norm() const { return inst.norm_exponent == 1.0; }

    void assign(int g, int k) {
        objective += add_delta(g, k);
        A(g, k) = 1;
        where[static_cast<std::size_t>(g)] = k;
        cols[static_cast<std::size_t>(k)].push_back(g);
        R.col(k) += inst.S.col(g);
    }

    void unassign(int g) {
        int k = where[static_cast<std::size_t>(g)];
        A(g, k) = 0;
        where[static_cast<std::size_t>(g)] = -1;
        auto& col = cols[static_cast<std::size_t>(k)];
        col.erase(std::find(col.begin(), col.end(), g));
        R.col(k) -= inst.S.col(g);
        objective -= add_delta(g, k);
    }

    // objective change from adding unassigned g to subset k
    double add_delta(int g, int k) const {
        double dtrace = 2.0 * R(g, k);
        double dlam;
        if (flat_norm()) {
            dlam = (inst.lambda1 + inst.lambda2) * slot_weight[static_cast<std::size_t>(g)];
        } else {
            dlam = lambda_delta_add(g, k);
        }
        return -dtrace - dlam;
    }

    double lambda_delta_add(int g, int k) const {
        const double p = inst.norm_exponent;
        double d1 = 0.0, d2 = 0.0;
        for (int i = 0; i < inst.C.cols(); ++i) {
            if (!inst.C(g, i)) continue;
            double ck = subset_count(k, i);
            double ct = total_count(i);
            d1 += std::pow(ck + 1.0, p) - std::pow(ck, p);
            d2 += std::pow(ct + 1.0, p) - std::pow(ct, p);
        }
        return inst.lambda1 * d1 + inst.lambda2 * d2;
    }

    double subset_count(int k, int i) const {
        double c = 0.0;
        for (int g : cols[static_cast<std::size_t>(k)]) c += inst.C(g, i);
        return c;
    }
    double total_count(int i) const {
        double c = 0.0;
        for (int k = 0; k < inst.K; ++k) c += subset_count(k, i);
        return c;
    }

    // objective change from replacing assigned g with unassigned h in subset k
    double replace_delta(int g, int k, int h) const {
        double dtrace = 2.0 * (R(h, k) - inst.S(h, g)) - 2.0 * (R(g, k) - inst.S(g, g));
        if (flat_norm()) {
            double dlam = (inst.lambda1 + inst.lambda2) *
                          (slot_weight[static_cast<std::size_t>(h)] - slot_weight[static_cast<std::size_t>(g)]);
            return -dtrace - dlam;
        }
        PartitionSearch& self = const_cast<PartitionSearch&>(*this);
        double before = objective;
        self.unassign(g);
        self.assign(h, k);
        double after = objective;
        self.unassign(h);
        self.assign(g, k);
        return after - before;
    }

    // objective change from swapping g (subset k) with h (subset kp)
    double swap_delta(int g, int k, int h, int kp) const {
        double dk = 2.0 * (R(h, k) - inst.S(h, g)) - 2.0 * (R(g, k) - inst.S(g, g));
        double dkp = 2.0 * (R(g, kp) - inst.S(g, h)) - 2.0 * (R(h, kp) - inst.S(h, h));
        if (flat_norm()) return -(dk + dkp);
        PartitionSearch& self = const_cast<PartitionSearch&>(*this);
        double before = objective;
        self.unassign(g);
        self.unassign(h);
        self.assign(g, kp);
        self.assign(h, k);
        double after = objective;
        self.unassign(g);
        self.unassign(h);
        self.assign(g, k);
        self.assign(h, kp);
        return after - before;
    }

    void apply_replace(int g, int k, int h) {
        unassign(g);
        assign(h, k);
    }
    void apply_swap(int g, int k, int h, int kp) {
        unassign(g);
        unassign(h);
        assign(h, k);
        assign(g, kp);
    }

    std::vector<int> unassigned() const {
        std::vector<int> out;
        for (int g = 0; g < inst.num_groups(); ++g)
            if (where[static_cast<std::size_t>(g)] < 0) out.push_back(g);
        return out;
    }
};

inline void greedy_init(PartitionSearch& s) {
    const int total = s.inst.K * s.inst.groups_per_subset;
    for (int step = 0; step < total; ++step) {
        double best = std::numeric_limits<double>::infinity();
        int best_g = -1, best_k = -1;
        for (int g = 0; g < s.inst.num_groups(); ++g) {
            if (s.where[static_cast<std::size_t>(g)] >= 0) continue;
            for (int k = 0; k < s.inst.K; ++k) {
                if (static_cast<int>(s.cols[static_cast<std::size_t>(k)].size()) >= s.inst.groups_per_subset)
                    continue;
                double d = s.add_delta(g, k);
                if (d < best - 1e-15) {
                    best = d;
                    best_g = g;
                    best_k = k;
                }
            }
        }
        s.assign(best_g, best_k);
    }
}

inline void random_init(PartitionSearch& s, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(s.inst.num_groups()));
    std::iota(order.begin(), order.end(), 0);
    shuffle_inplace(order, rng);
    int pos = 0;
    for (int k = 0; k < s.inst.K; ++k)
        for (int j = 0; j < s.inst.groups_per_subset; ++j)
            s.assign(order[static_cast<std::size_t>(pos++)], k);
}

inline void local_search(PartitionSearch& s, std::vector<double>& trace) {
    constexpr double kGain = -1e-12;
    bool improved = true;
    while (improved) {
        improved = false;
        auto free_groups = s.unassigned();
        for (int k = 0; k < s.inst.K && !free_groups.empty(); ++k) {
            auto col = s.cols[static_cast<std::size_t>(k)];
            for (int g : col) {
                for (int h : free_groups) {
                    if (s.replace_delta(g, k, h) < kGain) {
                        s.apply_replace(g, k, h);
                        trace.push_back(s.objective);
                        improved = true;
                        free_groups = s.unassigned();
                        break;
                    }
                }
            }
        }
        for (int k = 0; k < s.inst.K; ++k) {
            for (int kp = k + 1; kp < s.inst.K; ++kp) {
                auto ck = s.cols[static_cast<std::size_t>(k)];
                for (int g : ck) {
                    auto ckp = s.cols[static_cast<std::size_t>(kp)];
                    for (int h : ckp) {
                        if (s.swap_delta(g, k, h, kp) < kGain) {
                            s.apply_swap(g, k, h, kp);
                            trace.push_back(s.objective);
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

inline Partition solve_partition(const PartitionInstance& inst, int restarts, std::uint64_t seed) {
    const int g = inst.num_groups();
    if (inst.K < 1 || inst.groups_per_subset < 1)
        throw std::invalid_argument("solve_partition: K and groups_per_subset must be >= 1");
    if (inst.groups_per_subset > g || inst.K * inst.groups_per_subset > g)
        throw std::invalid_argument("solve_partition: infeasible constraint (groups_per_subset too large)");
    if (restarts < 1) throw std::invalid_argument("solve_partition: restarts must be >= 1");

    Partition best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        detail::PartitionSearch s(inst);
        Rng rng(derive_seed(seed, 0x70617274ULL, static_cast<std::uint64_t>(r)));
        std::vector<double> trace;
        if (r == 0) detail::greedy_init(s);
        else detail::random_init(s, rng);
        trace.push_back(s.objective);
        detail::local_search(s, trace);
        if (s.objective < best_obj - 1e-15) {
            best_obj = s.objective;
            best.A = s.A;
            best.objective = s.objective;
            best.trace = std::move(trace);
        }
    }

    best.subsets.assign(static_cast<std::size_t>(inst.K), {});
    for (int k = 0; k < inst.K; ++k)
        for (int i = 0; i < g; ++i)
            if (best.A(i, k)) best.subsets[static_cast<std::size_t>(k)].push_back(i);
    return best;
}

inline std::string to_text(const Partition& part) {
    std::ostringstream out;
    for (const auto& subset : part.subsets) {
        for (std::size_t i = 0; i < subset.size(); ++i) {
            if (i) out << ' ';
            out << subset[i];
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace relrep
