#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "relrep/pipeline.hpp"

using namespace relrep;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string write_file(const std::string& name, const std::string& content) {
    std::string path = temp_path(name);
    std::ofstream out(path);
    out << content;
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

bool nets_equal(const EmbedNet& a, const EmbedNet& b) {
    if (a.W.size() != b.W.size()) return false;
    for (std::size_t l = 0; l < a.W.size(); ++l)
        if (!(a.W[l] == b.W[l]) || !(a.b[l] == b.b[l])) return false;
    return true;
}

// two far-apart tight pairs; with h_max=2 extraction yields exactly those pairs
Dataset two_pair_dataset() {
    Dataset d;
    d.vectors.resize(4, 2);
    d.vectors << 0.0, 0.0,
                 1.0, 0.0,
                 1e6, 0.0,
                 1e6 + 2.0, 0.0;
    return d;
}

PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.T = 1;
    cfg.K = 2;
    cfg.p = 5.0;
    cfg.D = 4;
    cfg.hidden_sizes = {16};
    cfg.h_max = 8;
    cfg.num_random_groups = 100;
    cfg.restarts = 2;
    cfg.sgd.max_epochs = 6;
    return cfg;
}

}  // namespace

TEST(Config, DefaultsValidate) {
    EXPECT_NO_THROW(PipelineConfig{}.validate());
}

TEST(Config, LoadParsesEveryKey) {
    std::string path = write_file("relrep_cfg_full.cfg",
        "# full sweep\n"
        "T = 2\n"
        "K=2\n"
        "p=5.5\n"
        "D=8\n"
        "sigma2=0.01   # hub spread\n"
        "lambda1=0.5\n"
        "lambda2=1.5\n"
        "gamma=0.3\n"
        "norm_exponent=2\n"
        "groups_per_subset=4\n"
        "dissim_percentile=80\n"
        "per_anchor_cap=3\n"
        "transfer_weight=0.7\n"
        "hidden_sizes=32,16\n"
        "h_max=12\n"
        "num_random_groups=150\n"
        "restarts=4\n"
        "seed=99\n"
        "\n"
        "learning_rate=0.005\n"
        "momentum=0.8\n"
        "epochs_per_reassign=2\n"
        "batch_size=32\n"
        "max_epochs=20\n"
        "rel_improve_tol=1e-5\n"
        "assign_proposals_factor=3\n");
    PipelineConfig cfg = load_config(path);
    EXPECT_EQ(cfg.T, 2);
    EXPECT_EQ(cfg.K, 2);
    EXPECT_DOUBLE_EQ(cfg.p, 5.5);
    EXPECT_EQ(cfg.D, 8);
    EXPECT_DOUBLE_EQ(cfg.sigma2, 0.01);
    EXPECT_DOUBLE_EQ(cfg.lambda1, 0.5);
    EXPECT_DOUBLE_EQ(cfg.lambda2, 1.5);
    EXPECT_DOUBLE_EQ(cfg.gamma, 0.3);
    EXPECT_DOUBLE_EQ(cfg.norm_exponent, 2.0);
    EXPECT_EQ(cfg.groups_per_subset, 4);
    EXPECT_DOUBLE_EQ(cfg.dissim_percentile, 80.0);
    EXPECT_EQ(cfg.per_anchor_cap, 3);
    EXPECT_DOUBLE_EQ(cfg.transfer_weight, 0.7);
    ASSERT_EQ(cfg.hidden_sizes.size(), 2u);
    EXPECT_EQ(cfg.hidden_sizes[0], 32);
    EXPECT_EQ(cfg.hidden_sizes[1], 16);
    EXPECT_EQ(cfg.h_max, 12);
    EXPECT_EQ(cfg.num_random_groups, 150);
    EXPECT_EQ(cfg.restarts, 4);
    EXPECT_EQ(cfg.seed, 99u);
    EXPECT_DOUBLE_EQ(cfg.sgd.learning_rate, 0.005);
    EXPECT_DOUBLE_EQ(cfg.sgd.momentum, 0.8);
    EXPECT_EQ(cfg.sgd.epochs_per_reassign, 2);
    EXPECT_EQ(cfg.sgd.batch_size, 32);
    EXPECT_EQ(cfg.sgd.max_epochs, 20);
    EXPECT_DOUBLE_EQ(cfg.sgd.rel_improve_tol, 1e-5);
    EXPECT_EQ(cfg.sgd.assign_proposals_factor, 3);
}

TEST(Config, LastDuplicateWins) {
    PipelineConfig cfg = load_config(write_file("relrep_cfg_dup.cfg", "K=2\nK=5\n"));
    EXPECT_EQ(cfg.K, 5);
}

TEST(Config, LoadErrors) {
    EXPECT_THROW(load_config(temp_path("relrep_cfg_missing.cfg")), std::runtime_error);

    try {
        load_config(write_file("relrep_cfg_noeq.cfg", "T=1\nbogus line\n"));
        FAIL() << "expected throw";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }

    EXPECT_THROW(load_config(write_file("relrep_cfg_badint.cfg", "K=abc\n")), std::runtime_error);
    EXPECT_THROW(load_config(write_file("relrep_cfg_trail.cfg", "K=3x\n")), std::runtime_error);
    EXPECT_THROW(load_config(write_file("relrep_cfg_emptyval.cfg", "K=\n")), std::runtime_error);

    try {
        load_config(write_file("relrep_cfg_unknown.cfg", "zzz=1\n"));
        FAIL() << "expected throw";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("unknown key 'zzz'"), std::string::npos);
    }

    // parses fine, fails validation
    EXPECT_THROW(load_config(write_file("relrep_cfg_badk.cfg", "K=0\n")), std::invalid_argument);
}

TEST(Config, ValidateCatchesEveryField) {
    auto expect_bad = [](PipelineConfig cfg) { EXPECT_THROW(cfg.validate(), std::invalid_argument); };
    PipelineConfig cfg;
    cfg.T = -1; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.K = 0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.p = 0.0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.p = 101.0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.D = 1; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.sigma2 = -1.0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.lambda1 = -0.5; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.lambda2 = -0.5; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.gamma = -0.1; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.norm_exponent = 0.0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.groups_per_subset = -1; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.dissim_percentile = 0.0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.dissim_percentile = 100.5; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.per_anchor_cap = 0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.transfer_weight = -1.0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.hidden_sizes = {64, 0}; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.h_max = 1; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.num_random_groups = 99; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.restarts = 0; expect_bad(cfg); cfg = PipelineConfig{};
    cfg.sgd.momentum = 1.0; expect_bad(cfg);
}

TEST(TrainInit, ZeroEpochBudgetReturnsRawNet) {
    Dataset data = gen_synthetic({2, 10, 3, 0.2, 4});
    PipelineConfig cfg = small_config();
    cfg.sgd.max_epochs = 0;
    EmbedNet net = train_init(data, cfg);
    EmbedNet raw = make_embednet(3, cfg.hidden_sizes, cfg.D, derive_seed(cfg.seed, 1));
    EXPECT_TRUE(nets_equal(net, raw));
}

TEST(TrainInit, DeterministicAndActuallyTrains) {
    Dataset data = gen_synthetic({2, 10, 3, 0.2, 4});
    PipelineConfig cfg = small_config();
    EmbedNet a = train_init(data, cfg);
    EmbedNet b = train_init(data, cfg);
    EXPECT_TRUE(nets_equal(a, b));
    EmbedNet raw = make_embednet(3, cfg.hidden_sizes, cfg.D, derive_seed(cfg.seed, 1));
    EXPECT_FALSE(nets_equal(a, raw));
}

TEST(TrainInit, LinearNetApproachesSphereTargets) {
    // one-hot inputs let a linear layer place every sample freely
    Dataset data;
    data.vectors = Eigen::MatrixXd::Identity(4, 4);
    PipelineConfig cfg;
    cfg.D = 3;
    cfg.hidden_sizes = {};
    cfg.num_random_groups = 100;
    cfg.sgd.learning_rate = 0.05;
    cfg.sgd.max_epochs = 300;
    cfg.sgd.rel_improve_tol = -1e300;
    cfg.seed = 6;

    EmbedNet raw = make_embednet(4, {}, 3, derive_seed(cfg.seed, 1));
    TargetSpace space;
    space.D = 3;
    space.targets = sample_sphere(3, 4, derive_seed(cfg.seed, 2));
    space.centroids = space.targets;
    space.owner = {0, 1, 2, 3};
    Assignment a0 = init_assignment(4, derive_seed(cfg.seed, 3));
    double initial = local_loss(raw, data.vectors.transpose(), space, a0);

    EmbedNet trained = train_init(data, cfg);
    Eigen::MatrixXd emb = embed_dataset(trained, data.vectors);
    // every embedding should have reached the unit sphere
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(emb.row(i).norm(), 1.0, 0.05);
    double final_best = 0.0;
    for (int i = 0; i < 4; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int t = 0; t < 4; ++t)
            best = std::min(best, (emb.row(i) - space.targets.row(t)).squaredNorm());
        final_best += best;
    }
    EXPECT_LT(final_best, 0.1 * initial);
}

TEST(RunIteration, StateAndMetricsOnClusteredData) {
    Dataset data = gen_synthetic({4, 30, 6, 0.1, 11});
    PipelineConfig cfg = small_config();
    cfg.seed = 3;
    PipelineConfig init_cfg = cfg;
    init_cfg.sgd.max_epochs = 0;
    EmbedNet phi = train_init(data, init_cfg);

    IterationState state = run_iteration(phi, 1, data, cfg);
    EXPECT_EQ(state.iteration, 1);
    const int ng = state.groups.num_groups();
    ASSERT_GE(ng, cfg.K);
    ASSERT_EQ(state.partition.subsets.size(), 2u);
    int gps = std::max(1, ng / cfg.K);
    for (const auto& s : state.partition.subsets) EXPECT_EQ(static_cast<int>(s.size()), gps);

    ASSERT_EQ(state.refined_nets.size(), 2u);
    ASSERT_GE(state.promoted_subset, 0);
    ASSERT_LT(state.promoted_subset, 2);
    EXPECT_TRUE(nets_equal(state.phi,
                           state.refined_nets[static_cast<std::size_t>(state.promoted_subset)]));

    const IterationMetrics& m = state.metrics;
    EXPECT_EQ(m.iteration, 1);
    EXPECT_GT(m.coverage_overall, 0.0);
    EXPECT_LE(m.coverage_overall, 1.0);
    ASSERT_EQ(m.coverage_per_subset.size(), 2u);
    EXPECT_NEAR(m.coverage_per_subset_mean,
                (m.coverage_per_subset[0] + m.coverage_per_subset[1]) / 2.0, 1e-12);
    EXPECT_GE(m.group_correctness_mean, 0.0);
    EXPECT_LE(m.group_correctness_mean, 1.0);
    EXPECT_FALSE(m.correctness_by_size.empty());
    EXPECT_DOUBLE_EQ(m.partition_objective, state.partition.objective);
    EXPECT_TRUE(std::isfinite(m.partition_objective));
    EXPECT_GE(m.loss_local_mean, 0.0);
    EXPECT_TRUE(std::isfinite(m.loss_local_mean));
    EXPECT_GE(m.loss_transfer_mean, 0.0);

    IterationState again = run_iteration(phi, 1, data, cfg);
    EXPECT_TRUE(nets_equal(again.phi, state.phi));
    EXPECT_EQ(again.promoted_subset, state.promoted_subset);
    EXPECT_EQ(again.metrics.loss_local_mean, state.metrics.loss_local_mean);
    EXPECT_EQ(again.metrics.partition_objective, state.metrics.partition_objective);
}

TEST(RunIteration, UnlabeledDataLeavesCorrectnessUnset) {
    Dataset data = gen_synthetic({4, 30, 6, 0.1, 11});
    data.labels.clear();
    data.label_names.clear();
    PipelineConfig cfg = small_config();
    PipelineConfig init_cfg = cfg;
    init_cfg.sgd.max_epochs = 0;
    EmbedNet phi = train_init(data, init_cfg);
    IterationState state = run_iteration(phi, 1, data, cfg);
    EXPECT_TRUE(std::isnan(state.metrics.group_correctness_mean));
    EXPECT_TRUE(state.metrics.correctness_by_size.empty());
}

TEST(RunIteration, ReportsWhenNoGroupsSurvive) {
    Dataset data;
    data.vectors.resize(2, 2);
    data.vectors << 0.0, 0.0, 1.0, 1.0;
    PipelineConfig cfg = small_config();
    cfg.K = 1;
    EmbedNet phi = make_embednet(2, cfg.hidden_sizes, cfg.D, 0);
    try {
        run_iteration(phi, 1, data, cfg);
        FAIL() << "expected throw";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("no compact groups"), std::string::npos);
    }
}

TEST(RunIteration, ReportsWhenTooFewGroupsForK) {
    Dataset data = two_pair_dataset();
    PipelineConfig cfg = small_config();
    cfg.K = 3;
    cfg.h_max = 2;
    cfg.p = 90.0;
    EmbedNet phi = make_embednet(2, {4}, cfg.D, 0);
    cfg.hidden_sizes = {4};
    try {
        run_iteration(phi, 1, data, cfg);
        FAIL() << "expected throw";
    } catch (const std::runtime_error& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("groups for K=3"), std::string::npos) << msg;
    }
}

TEST(RunIteration, ReportsOversizedGroupsPerSubset) {
    Dataset data = two_pair_dataset();
    PipelineConfig cfg = small_config();
    cfg.K = 2;
    cfg.groups_per_subset = 2;
    cfg.h_max = 2;
    cfg.p = 90.0;
    cfg.hidden_sizes = {4};
    EmbedNet phi = make_embednet(2, {4}, cfg.D, 0);
    try {
        run_iteration(phi, 1, data, cfg);
        FAIL() << "expected throw";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("groups_per_subset too large"), std::string::npos);
    }
}

TEST(MetricsCsv, RowsAreExact) {
    std::vector<IterationMetrics> rows(1);
    rows[0].iteration = 1;
    rows[0].coverage_overall = 0.5;
    rows[0].coverage_per_subset_mean = 0.25;
    rows[0].partition_objective = -3.0;
    rows[0].loss_local_mean = 0.1;
    rows[0].loss_transfer_mean = 0.0;
    std::string path = temp_path("relrep_metrics_hand.csv");
    write_metrics_csv(path, rows);
    EXPECT_EQ(slurp(path),
              "iteration,coverage_overall,coverage_per_subset_mean,group_correctness_mean,"
              "partition_objective,loss_local_mean,loss_transfer_mean\n"
              "1,0.5,0.25,nan,-3,0.1,0\n");
}

TEST(Run, ZeroIterationsWritesInitOnly) {
    Dataset data = gen_synthetic({2, 8, 3, 0.2, 9});
    PipelineConfig cfg = small_config();
    cfg.T = 0;
    std::string dir = temp_path("relrep_run_t0");
    std::filesystem::remove_all(dir);
    RunResult res = run(data, cfg, dir);
    EXPECT_TRUE(nets_equal(res.phi, res.phi_init));
    EXPECT_TRUE(res.metrics.empty());
    EXPECT_TRUE(std::filesystem::exists(dir + "/phi_init.ckpt"));
    EXPECT_FALSE(std::filesystem::exists(dir + "/phi_iter1.ckpt"));
    EXPECT_EQ(slurp(dir + "/metrics.csv"),
              "iteration,coverage_overall,coverage_per_subset_mean,group_correctness_mean,"
              "partition_objective,loss_local_mean,loss_transfer_mean\n");
    EXPECT_EQ(slurp(dir + "/fig7_correctness.csv"), "iteration,h,correctness\n");
    EXPECT_EQ(slurp(dir + "/fig8_coverage.csv"), "iteration,overall,per_subset_mean\n");
}

TEST(Run, RepeatedRunsAreByteIdentical) {
    Dataset data = gen_synthetic({3, 20, 4, 0.1, 15});
    PipelineConfig cfg = small_config();
    cfg.h_max = 6;
    cfg.sgd.max_epochs = 4;
    std::string dir_a = temp_path("relrep_run_a");
    std::string dir_b = temp_path("relrep_run_b");
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    RunResult ra = run(data, cfg, dir_a);
    RunResult rb = run(data, cfg, dir_b);
    EXPECT_TRUE(nets_equal(ra.phi, rb.phi));
    for (const char* name : {"metrics.csv", "phi_init.ckpt", "phi_iter1.ckpt",
                             "fig7_correctness.csv", "fig8_coverage.csv"}) {
        SCOPED_TRACE(name);
        std::string a = slurp(dir_a + "/" + name);
        ASSERT_FALSE(a.empty());
        EXPECT_EQ(a, slurp(dir_b + "/" + name));
    }
    ASSERT_EQ(ra.metrics.size(), 1u);
}

TEST(Run, SingleSubsetSkipsTransferLoss) {
    Dataset data = gen_synthetic({3, 20, 4, 0.1, 15});
    PipelineConfig cfg = small_config();
    cfg.K = 1;
    cfg.h_max = 6;
    cfg.sgd.max_epochs = 4;
    std::string dir = temp_path("relrep_run_k1");
    std::filesystem::remove_all(dir);
    RunResult res = run(data, cfg, dir);
    ASSERT_EQ(res.metrics.size(), 1u);
    EXPECT_DOUBLE_EQ(res.metrics[0].loss_transfer_mean, 0.0);
    EXPECT_TRUE(std::filesystem::exists(dir + "/phi_iter1.ckpt"));
}
