#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "relrep/assign.hpp"
#include "relrep/common.hpp"
#include "relrep/coupling.hpp"
#include "relrep/dataset.hpp"
#include "relrep/embednet.hpp"
#include "relrep/evalreport.hpp"
#include "relrep/grouping.hpp"
#include "relrep/neighbors.hpp"
#include "relrep/partition.hpp"
#include "relrep/targets.hpp"

namespace relrep {

struct PipelineConfig {
    int T = 4;
    int K = 3;
    double p = 3.0;                  // compactness percentile
    int D = 32;                      // target dimension
    double sigma2 = 0.0025;          // target hub variance
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double gamma = 0.2;              // triplet margin
    double norm_exponent = 1.0;
    int groups_per_subset = 0;       // 0 = largest balanced value
    double dissim_percentile = 90.0;
    int per_anchor_cap = 5;
    double transfer_weight = 1.0;
    std::vector<int> hidden_sizes{64, 64};
    int h_max = 32;
    int num_random_groups = 500;
    int restarts = 8;
    std::uint64_t seed = 0;
    SgdConfig sgd;

    void validate() const {
        if (T < 0) throw std::invalid_argument("config: T must be >= 0");
        if (K < 1) throw std::invalid_argument("config: K must be >= 1");
        if (!(p > 0.0) || p > 100.0) throw std::invalid_argument("config: p must be in (0, 100]");
        if (D < 2) throw std::invalid_argument("config: D must be >= 2");
        if (sigma2 < 0.0) throw std::invalid_argument("config: sigma2 must be >= 0");
        if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("config: lambdas must be >= 0");
        if (gamma < 0.0) throw std::invalid_argument("config: gamma must be >= 0");
        if (!(norm_exponent > 0.0)) throw std::invalid_argument("config: norm_exponent must be > 0");
        if (groups_per_subset < 0) throw std::invalid_argument("config: groups_per_subset must be >= 0");
        if (!(dissim_percentile > 0.0) || dissim_percentile > 100.0)
            throw std::invalid_argument("config: dissim_percentile must be in (0, 100]");
        if (per_anchor_cap < 1) throw std::invalid_argument("config: per_anchor_cap must be >= 1");
        if (transfer_weight < 0.0) throw std::invalid_argument("config: transfer_weight must be >= 0");
        for (int h : hidden_sizes)
            if (h < 1) throw std::invalid_argument("config: hidden sizes must be >= 1");
        if (h_max < 2) throw std::invalid_argument("config: h_max must be >= 2");
        if (num_random_groups < 100) throw std::invalid_argument("config: num_random_groups must be >= 100");
        if (restarts < 1) throw std::invalid_argument("config: restarts must be >= 1");
        sgd.validate();
    }
};

namespace detail {

inline std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
    std::vector<int> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        try {
            out.push_back(std::stoi(cur));
        } catch (const std::exception&) {
            throw std::runtime_error("config: cannot parse value for " + key);
        }
    }
    if (out.empty()) throw std::runtime_error("config: empty list for " + key);
    return out;
}

}  // namespace detail

// flat key=value file, one per line, '#' starts a comment; unknown keys error
inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);

    PipelineConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key=value");
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t\r");
            auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key=value");

        auto as_double = [&](const std::string& k) {
            try {
                std::size_t used = 0;
                double v = std::stod(value, &used);
                if (used != value.size()) throw std::invalid_argument("trailing");
                return v;
            } catch (const std::exception&) {
                throw std::runtime_error("config: cannot parse value for " + k);
            }
        };
        auto as_int = [&](const std::string& k) {
            try {
                std::size_t used = 0;
                int v = std::stoi(value, &used);
                if (used != value.size()) throw std::invalid_argument("trailing");
                return v;
            } catch (const std::exception&) {
                throw std::runtime_error("config: cannot parse value for " + k);
            }
        };

        if (key == "T") cfg.T = as_int(key);
        else if (key == "K") cfg.K = as_int(key);
        else if (key == "p") cfg.p = as_double(key);
        else if (key == "D") cfg.D = as_int(key);
        else if (key == "sigma2") cfg.sigma2 = as_double(key);
        else if (key == "lambda1") cfg.lambda1 = as_double(key);
        else if (key == "lambda2") cfg.lambda2 = as_double(key);
        else if (key == "gamma") cfg.gamma = as_double(key);
        else if (key == "norm_exponent") cfg.norm_exponent = as_double(key);
        else if (key == "groups_per_subset") cfg.groups_per_subset = as_int(key);
        else if (key == "dissim_percentile") cfg.dissim_percentile = as_double(key);
        else if (key == "per_anchor_cap") cfg.per_anchor_cap = as_int(key);
        else if (key == "transfer_weight") cfg.transfer_weight = as_double(key);
        else if (key == "hidden_sizes") cfg.hidden_sizes = detail::parse_int_list(value, key);
        else if (key == "h_max") cfg.h_max = as_int(key);
        else if (key == "num_random_groups") cfg.num_random_groups = as_int(key);
        else if (key == "restarts") cfg.restarts = as_int(key);
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
        else if (key == "learning_rate") cfg.sgd.learning_rate = as_double(key);
        else if (key == "momentum") cfg.sgd.momentum = as_double(key);
        else if (key == "epochs_per_reassign") cfg.sgd.epochs_per_reassign = as_int(key);
        else if (key == "batch_size") cfg.sgd.batch_size = as_int(key);
        else if (key == "max_epochs") cfg.sgd.max_epochs = as_int(key);
        else if (key == "rel_improve_tol") cfg.sgd.rel_improve_tol = as_double(key);
        else if (key == "assign_proposals_factor") cfg.sgd.assign_proposals_factor = as_int(key);
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

struct IterationMetrics {
    int iteration = 0;
    double coverage_overall = 0.0;
    std::vector<double> coverage_per_subset;
    double coverage_per_subset_mean = 0.0;
    double group_correctness_mean = std::numeric_limits<double>::quiet_NaN();
    std::map<int, double> correctness_by_size;
    double partition_objective = 0.0;
    double loss_local_mean = 0.0;
    double loss_transfer_mean = 0.0;
};

struct IterationState {
    int iteration = 0;
    EmbedNet phi;
    GroupSet groups;
    Partition partition;
    std::vector<EmbedNet> refined_nets;
    int promoted_subset = -1;
    IterationMetrics metrics;
};

namespace detail {

enum SeedStage : std::uint64_t {
    seed_init_net = 1,
    seed_init_targets = 2,
    seed_init_assign = 3,
    seed_init_train = 4,
    seed_baseline = 10,
    seed_partition = 11,
    seed_local_targets = 12,
    seed_local_assign = 13,
    seed_local_train = 14,
    seed_mine = 15,
    seed_refine_targets = 16,
    seed_refine_assign = 17,
    seed_refine_train = 18,
    seed_promote = 19,
};

struct SubsetSlots {
    std::vector<Group> groups;    // groups of this subset, ascending group index
    std::vector<int> sample_ids;  // slot -> dataset sample, group-major
};

inline SubsetSlots collect_subset_slots(const GroupSet& gs, const Partition& part, int k) {
    SubsetSlots s;
    for (int g : part.subsets[static_cast<std::size_t>(k)]) {
        const Group& grp = gs.groups[static_cast<std::size_t>(g)];
        s.groups.push_back(grp);
        for (int m : grp.members) s.sample_ids.push_back(m);
    }
    return s;
}

inline std::vector<double> subset_coverage(const GroupSet& gs, const Partition& part, int num_samples) {
    std::vector<double> out;
    for (std::size_t k = 0; k < part.subsets.size(); ++k) {
        std::vector<char> hit(static_cast<std::size_t>(num_samples), 0);
        for (int g : part.subsets[k])
            for (int m : gs.groups[static_cast<std::size_t>(g)].members) hit[static_cast<std::size_t>(m)] = 1;
        int covered = 0;
        for (char c : hit) covered += c;
        out.push_back(static_cast<double>(covered) / num_samples);
    }
    return out;
}

}  // namespace detail

// Trains the initial representation against one uniform sphere target per
// sample, no grouping involved.
inline EmbedNet train_init(const Dataset& data, const PipelineConfig& cfg) {
    cfg.validate();
    const int n = data.size();
    EmbedNet net = make_embednet(data.dim(), cfg.hidden_sizes, cfg.D,
                                 derive_seed(cfg.seed, detail::seed_init_net));
    if (cfg.sgd.max_epochs == 0) return net;

    TargetSpace space;
    space.D = cfg.D;
    space.sigma2 = 0.0;
    space.targets = sample_sphere(cfg.D, n, derive_seed(cfg.seed, detail::seed_init_targets));
    space.centroids = space.targets;
    space.owner.resize(static_cast<std::size_t>(n));
    std::iota(space.owner.begin(), space.owner.end(), 0);

    std::vector<int> slot_ids(static_cast<std::size_t>(n));
    std::iota(slot_ids.begin(), slot_ids.end(), 0);
    Assignment a = init_assignment(n, derive_seed(cfg.seed, detail::seed_init_assign));

    Eigen::MatrixXd samples = data.vectors.transpose();
    TrainResult res = train_local(net, samples, slot_ids, space, std::move(a), cfg.sgd,
                                  derive_seed(cfg.seed, detail::seed_init_train));
    return std::move(res.net);
}

inline IterationState run_iteration(const EmbedNet& phi, int iteration, const Dataset& data,
                                    const PipelineConfig& cfg) {
    cfg.validate();
    const int n = data.size();
    const std::uint64_t t = static_cast<std::uint64_t>(iteration);
    Eigen::MatrixXd samples = data.vectors.transpose();

    IterationState state;
    state.iteration = iteration;

    EmbeddedSet embedded = embed_dataset(phi, data.vectors);
    int h_max = std::min(cfg.h_max, n);
    CompactnessBaseline baseline =
        calibrate_baseline(embedded, h_max, cfg.num_random_groups, cfg.p,
                           derive_seed(cfg.seed, detail::seed_baseline, t));
    state.groups = extract_groups(embedded, baseline);
    const int ng = state.groups.num_groups();
    if (ng == 0)
        throw std::runtime_error("iteration " + std::to_string(iteration) +
                                 ": no compact groups extracted; raise p or lower dataset noise");
    if (ng < cfg.K)
        throw std::runtime_error("iteration " + std::to_string(iteration) + ": only " +
                                 std::to_string(ng) + " groups for K=" + std::to_string(cfg.K) +
                                 " subsets; raise p or lower dataset noise");

    int gps = cfg.groups_per_subset > 0 ? cfg.groups_per_subset : std::max(1, ng / cfg.K);
    if (gps * cfg.K > ng)
        throw std::runtime_error("iteration " + std::to_string(iteration) +
                                 ": groups_per_subset too large for " + std::to_string(ng) + " groups");

    PartitionInstance inst = build_instance(embedded, state.groups, cfg.K, gps, cfg.lambda1,
                                            cfg.lambda2, cfg.norm_exponent);
    state.partition = solve_partition(inst, cfg.restarts, derive_seed(cfg.seed, detail::seed_partition, t));

    std::vector<detail::SubsetSlots> slots;
    std::vector<EmbedNet> local_nets;
    for (int k = 0; k < cfg.K; ++k) {
        slots.push_back(detail::collect_subset_slots(state.groups, state.partition, k));
        const auto& sk = slots.back();
        const std::uint64_t ku = static_cast<std::uint64_t>(k);
        TargetSpace space = build_target_space(sk.groups, cfg.D, cfg.sigma2,
                                               derive_seed(cfg.seed, detail::seed_local_targets, t, ku));
        Assignment a = init_assignment(static_cast<int>(sk.sample_ids.size()),
                                       derive_seed(cfg.seed, detail::seed_local_assign, t, ku));
        TrainResult res = train_local(phi, samples, sk.sample_ids, space, std::move(a), cfg.sgd,
                                      derive_seed(cfg.seed, detail::seed_local_train, t, ku));
        local_nets.push_back(std::move(res.net));
    }

    auto mined = mine_triplets(state.groups, state.partition, embedded, cfg.per_anchor_cap,
                               cfg.dissim_percentile, derive_seed(cfg.seed, detail::seed_mine, t));

    double local_loss_sum = 0.0, transfer_loss_sum = 0.0;
    long slot_count = 0, triplet_count = 0;
    for (int k = 0; k < cfg.K; ++k) {
        const auto& sk = slots[static_cast<std::size_t>(k)];
        const std::uint64_t ku = static_cast<std::uint64_t>(k);
        TargetSpace space = build_target_space(sk.groups, cfg.D, cfg.sigma2,
                                               derive_seed(cfg.seed, detail::seed_refine_targets, t, ku));
        Assignment a = init_assignment(static_cast<int>(sk.sample_ids.size()),
                                       derive_seed(cfg.seed, detail::seed_refine_assign, t, ku));
        std::vector<TripletIdx> trip;
        for (const Triplet& tr : mined[static_cast<std::size_t>(k)])
            trip.push_back({tr.anchor, tr.positive, tr.negative});
        TrainResult res = train_refine(local_nets[static_cast<std::size_t>(k)], samples,
                                       sk.sample_ids, space, std::move(a), trip, cfg.gamma,
                                       cfg.transfer_weight, cfg.sgd,
                                       derive_seed(cfg.seed, detail::seed_refine_train, t, ku));

        Eigen::MatrixXd slot_inputs(samples.rows(), static_cast<Eigen::Index>(sk.sample_ids.size()));
        for (std::size_t c = 0; c < sk.sample_ids.size(); ++c)
            slot_inputs.col(static_cast<Eigen::Index>(c)) = samples.col(sk.sample_ids[c]);
        local_loss_sum += local_loss(res.net, slot_inputs, space, res.assignment);
        transfer_loss_sum += triplet_loss(res.net, samples, trip, cfg.gamma);
        slot_count += static_cast<long>(sk.sample_ids.size());
        triplet_count += static_cast<long>(trip.size());

        state.refined_nets.push_back(std::move(res.net));
    }

    {
        Rng rng(derive_seed(cfg.seed, detail::seed_promote, t));
        state.promoted_subset = uniform_index(rng, cfg.K);
    }
    state.phi = state.refined_nets[static_cast<std::size_t>(state.promoted_subset)];

    IterationMetrics& m = state.metrics;
    m.iteration = iteration;
    m.coverage_overall = coverage(state.groups, n);
    m.coverage_per_subset = detail::subset_coverage(state.groups, state.partition, n);
    double cov_sum = 0.0;
    for (double c : m.coverage_per_subset) cov_sum += c;
    m.coverage_per_subset_mean = cov_sum / static_cast<double>(m.coverage_per_subset.size());
    if (data.has_labels()) {
        m.group_correctness_mean = group_correctness_overall(state.groups, data.labels);
        m.correctness_by_size = group_correctness(state.groups, data.labels);
    }
    m.partition_objective = state.partition.objective;
    m.loss_local_mean = slot_count > 0 ? local_loss_sum / static_cast<double>(slot_count) : 0.0;
    m.loss_transfer_mean = triplet_count > 0 ? transfer_loss_sum / static_cast<double>(triplet_count) : 0.0;
    return state;
}

struct RunResult {
    EmbedNet phi_init;
    EmbedNet phi;
    std::vector<IterationMetrics> metrics;
};

inline void write_metrics_csv(const std::string& path, const std::vector<IterationMetrics>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "iteration,coverage_overall,coverage_per_subset_mean,group_correctness_mean,"
           "partition_objective,loss_local_mean,loss_transfer_mean\n";
    for (const auto& m : rows)
        out << m.iteration << ',' << format_g9(m.coverage_overall) << ','
            << format_g9(m.coverage_per_subset_mean) << ',' << format_g9(m.group_correctness_mean)
            << ',' << format_g9(m.partition_objective) << ',' << format_g9(m.loss_local_mean) << ','
            << format_g9(m.loss_transfer_mean) << '\n';
}

// Full training run; writes phi_init.ckpt, phi_iterN.ckpt, metrics.csv and the
// per-iteration figure data into out_dir.
inline RunResult run(const Dataset& data, const PipelineConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    auto ckpt = [&](const std::string& name) {
        return (std::filesystem::path(out_dir) / name).string();
    };

    RunResult res;
    res.phi_init = train_init(data, cfg);
    save_checkpoint(res.phi_init, ckpt("phi_init.ckpt"));
    res.phi = res.phi_init;

    std::vector<Fig7Row> fig7;
    std::vector<Fig8Row> fig8;
    for (int it = 1; it <= cfg.T; ++it) {
        IterationState state = run_iteration(res.phi, it, data, cfg);
        res.phi = state.phi;
        save_checkpoint(res.phi, ckpt("phi_iter" + std::to_string(it) + ".ckpt"));
        res.metrics.push_back(state.metrics);
        for (const auto& [h, c] : state.metrics.correctness_by_size) fig7.push_back({it, h, c});
        fig8.push_back({it, state.metrics.coverage_overall, state.metrics.coverage_per_subset_mean});
    }

    write_metrics_csv(ckpt("metrics.csv"), res.metrics);
    write_fig7_csv(ckpt("fig7_correctness.csv"), fig7);
    write_fig8_csv(ckpt("fig8_coverage.csv"), fig8);
    return res;
}

}  // namespace relrep
