#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relrep/dataset.hpp"
#include "relrep/evalreport.hpp"
#include "relrep/pipeline.hpp"

namespace {

relrep::DatasetFormat format_for(const std::string& path, const std::string& format) {
    if (format == "csv") return relrep::DatasetFormat::csv;
    if (format == "raw_f32") return relrep::DatasetFormat::raw_f32;
    return std::filesystem::path(path).extension() == ".csv" ? relrep::DatasetFormat::csv
                                                             : relrep::DatasetFormat::raw_f32;
}

relrep::GroupSet extract_with_defaults(const relrep::EmbeddedSet& embedded, double p, int h_max,
                                       int num_random_groups, std::uint64_t seed) {
    int hm = std::min<int>(h_max, static_cast<int>(embedded.rows()));
    auto baseline = relrep::calibrate_baseline(embedded, hm, num_random_groups, p, seed);
    return relrep::extract_groups(embedded, baseline);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reliable-relation representation learning on vector datasets"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "generate a synthetic labeled dataset");
    int classes = 10, per_class = 200, dim = 16;
    double cluster_std = 0.3;
    std::uint64_t gen_seed = 0;
    std::string gen_out, gen_format = "auto";
    gen->add_option("--classes", classes, "number of classes")->check(CLI::Range(2, 1'000'000));
    gen->add_option("--per-class", per_class, "samples per class")->check(CLI::Range(2, 1'000'000));
    gen->add_option("--dim", dim, "input dimension")->check(CLI::Range(1, 1'000'000));
    gen->add_option("--std", cluster_std, "cluster standard deviation");
    gen->add_option("--seed", gen_seed, "rng seed");
    gen->add_option("--out", gen_out, "output file")->required();
    gen->add_option("--format", gen_format, "csv, raw_f32 or auto (by extension)")
        ->check(CLI::IsMember({"csv", "raw_f32", "auto"}));

    auto* run = app.add_subcommand("run", "train a representation end to end");
    std::string run_data, run_config, run_out_dir, run_format = "auto";
    run->add_option("--data", run_data, "dataset file")->required();
    run->add_option("--config", run_config, "key=value config file")->required();
    run->add_option("--out-dir", run_out_dir, "output directory")->required();
    run->add_option("--format", run_format, "csv, raw_f32 or auto (by extension)")
        ->check(CLI::IsMember({"csv", "raw_f32", "auto"}));

    auto* eval = app.add_subcommand("eval", "kNN accuracy and NMI for a checkpoint");
    std::string eval_data, eval_ckpt, eval_format = "auto";
    int eval_k = 10;
    double eval_p = 3.0;
    int eval_h_max = 32, eval_random_groups = 500;
    std::uint64_t eval_seed = 0;
    eval->add_option("--data", eval_data, "labeled dataset file")->required();
    eval->add_option("--checkpoint", eval_ckpt, "network checkpoint")->required();
    eval->add_option("--k", eval_k, "neighbors for the kNN vote")->check(CLI::Range(1, 1'000'000));
    eval->add_option("--format", eval_format, "csv, raw_f32 or auto (by extension)")
        ->check(CLI::IsMember({"csv", "raw_f32", "auto"}));
    eval->add_option("--p", eval_p, "compactness percentile for the NMI grouping");
    eval->add_option("--h-max", eval_h_max, "largest group size for the NMI grouping");
    eval->add_option("--num-random-groups", eval_random_groups, "calibration sample count");
    eval->add_option("--seed", eval_seed, "rng seed for the NMI grouping");

    auto* analyze = app.add_subcommand("analyze", "write figure-data csv files for a checkpoint");
    std::string an_data, an_ckpt, an_out_dir, an_format = "auto";
    double an_p = 3.0, an_sigma2 = 0.0025;
    int an_h_max = 32, an_random_groups = 500, an_query = 0;
    std::uint64_t an_seed = 0;
    analyze->add_option("--data", an_data, "dataset file")->required();
    analyze->add_option("--checkpoint", an_ckpt, "network checkpoint")->required();
    analyze->add_option("--out-dir", an_out_dir, "output directory")->required();
    analyze->add_option("--format", an_format, "csv, raw_f32 or auto (by extension)")
        ->check(CLI::IsMember({"csv", "raw_f32", "auto"}));
    analyze->add_option("--p", an_p, "compactness percentile");
    analyze->add_option("--h-max", an_h_max, "largest group size");
    analyze->add_option("--num-random-groups", an_random_groups, "calibration sample count");
    analyze->add_option("--sigma2", an_sigma2, "target hub variance");
    analyze->add_option("--query", an_query, "query sample for the per-query figures");
    analyze->add_option("--seed", an_seed, "rng seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            relrep::SyntheticSpec spec;
            spec.num_classes = classes;
            spec.samples_per_class = per_class;
            spec.dim = dim;
            spec.cluster_std = cluster_std;
            spec.seed = gen_seed;
            relrep::Dataset data = relrep::gen_synthetic(spec);
            relrep::save_dataset(data, gen_out, format_for(gen_out, gen_format));
            std::cout << "wrote " << data.size() << " samples (" << classes << " classes, dim "
                      << dim << ") to " << gen_out << "\n";
        } else if (*run) {
            relrep::Dataset data = relrep::load_dataset(run_data, format_for(run_data, run_format));
            relrep::PipelineConfig cfg = relrep::load_config(run_config);
            relrep::RunResult res = relrep::run(data, cfg, run_out_dir);
            std::cout << "finished " << cfg.T << " iterations; checkpoints and metrics.csv in "
                      << run_out_dir << "\n";
            for (const auto& m : res.metrics)
                std::cout << "iteration " << m.iteration << ": coverage "
                          << relrep::format_g9(m.coverage_overall) << ", local loss "
                          << relrep::format_g9(m.loss_local_mean) << "\n";
        } else if (*eval) {
            relrep::Dataset data = relrep::load_dataset(eval_data, format_for(eval_data, eval_format));
            if (!data.has_labels()) throw std::runtime_error("eval requires a labeled dataset");
            relrep::EmbedNet net = relrep::load_checkpoint(eval_ckpt);
            relrep::EmbeddedSet embedded = relrep::embed_dataset(net, data.vectors);
            double acc = relrep::knn_accuracy(embedded, data.labels, eval_k);
            relrep::GroupSet groups =
                extract_with_defaults(embedded, eval_p, eval_h_max, eval_random_groups, eval_seed);
            double nmi = relrep::nmi_grouped(groups, data.labels, data.size());
            std::cout << "knn_accuracy=" << relrep::format_g9(acc) << "\n";
            std::cout << "nmi=" << relrep::format_g9(nmi) << "\n";
        } else if (*analyze) {
            relrep::Dataset data = relrep::load_dataset(an_data, format_for(an_data, an_format));
            relrep::EmbedNet net = relrep::load_checkpoint(an_ckpt);
            relrep::EmbeddedSet embedded = relrep::embed_dataset(net, data.vectors);
            if (an_query < 0 || an_query >= data.size())
                throw std::runtime_error("query index out of range");
            std::filesystem::create_directories(an_out_dir);
            auto path = [&](const char* name) {
                return (std::filesystem::path(an_out_dir) / name).string();
            };

            relrep::write_fig2_csv(path("fig2_ratio.csv"), relrep::nn_ratio_curve(embedded));
            relrep::write_fig3_csv(path("fig3_sorted.csv"),
                                   relrep::sorted_similarity_curve(embedded, an_query));
            const std::vector<double> noise_grid{0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
            relrep::write_fig4_csv(path("fig4_noise.csv"),
                                   relrep::rank_stability_under_noise(embedded, an_query,
                                                                      noise_grid, an_seed));

            relrep::GroupSet groups =
                extract_with_defaults(embedded, an_p, an_h_max, an_random_groups, an_seed);
            if (groups.num_groups() == 0)
                throw std::runtime_error("no compact groups extracted; raise --p");
            if (data.has_labels()) {
                relrep::write_fig5a_csv(path("fig5a_correctness_coverage.csv"),
                                        relrep::group_correctness(groups, data.labels),
                                        relrep::coverage_by_size(groups, data.size()));
            } else {
                relrep::write_fig5a_csv(path("fig5a_correctness_coverage.csv"), {}, {});
                std::cerr << "note: dataset has no labels, fig5a has no rows\n";
            }

            relrep::TargetSpace space = relrep::build_target_space(
                groups.groups, static_cast<int>(embedded.cols()), an_sigma2, an_seed);
            std::vector<char> hit(static_cast<std::size_t>(data.size()), 0);
            for (const auto& g : groups.groups)
                for (int m : g.members) hit[static_cast<std::size_t>(m)] = 1;
            std::vector<int> covered;
            for (int i = 0; i < data.size(); ++i)
                if (hit[static_cast<std::size_t>(i)]) covered.push_back(i);
            Eigen::MatrixXd sub(static_cast<Eigen::Index>(covered.size()), embedded.cols());
            for (std::size_t i = 0; i < covered.size(); ++i)
                sub.row(static_cast<Eigen::Index>(i)) = embedded.row(covered[i]);
            auto data_dists = relrep::detail::all_pair_distances(sub, 20000);
            auto target_dists = relrep::detail::all_pair_distances(space.targets, 20000);
            relrep::write_fig5b_csv(path("fig5b_distances.csv"), data_dists, target_dists);
            std::cout << "wrote figure data to " << an_out_dir << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
