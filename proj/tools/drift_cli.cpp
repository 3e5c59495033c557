// Command-line front end: pretrain / train / verify / metrics / compare.
// Exit codes: 0 success, 2 verification failure, 3 aborted training.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "drift/experiment.hpp"
#include "drift/mdp.hpp"
#include "drift/theory.hpp"

namespace {

drift::ExperimentConfig load_config(const std::string& path, const std::string& preset) {
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config: " + path);
        nlohmann::json j;
        in >> j;
        return drift::ExperimentConfig::from_json(j);
    }
    if (preset == "four_peak") return drift::four_peak_config();
    return drift::default_config();
}

std::vector<drift::Vec> read_vectors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<drift::Vec> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        drift::Vec row;
        double v;
        while (ss >> v) row.push_back(v);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-chain denoising policies under group-relative RL fine-tuning,\n"
                 "with diversity-preserving training mechanisms and a diversity metric suite"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", preset = "default";
    uint64_t seed = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON");
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--preset", preset, "built-in config when --config is absent")
            ->check(CLI::IsMember({"default", "four_peak"}));
        cmd->add_option_function<uint64_t>(
            "--seed", [&](uint64_t s) { seed = s; seed_set = true; }, "override run seed");
    };

    CLI::App* cmd_pretrain = app.add_subcommand("pretrain", "pretrain the chain policy only");
    add_common(cmd_pretrain);

    CLI::App* cmd_train = app.add_subcommand("train", "full run: pretrain, fine-tune, evaluate");
    add_common(cmd_train);

    CLI::App* cmd_verify =
        app.add_subcommand("verify", "run the theory checks and shaping-invariance certification");
    std::string verify_out;
    uint64_t verify_seed = 7;
    int verify_mdps = 50;
    cmd_verify->add_option("--out", verify_out, "write the JSON report here");
    cmd_verify->add_option("--seed", verify_seed, "seed for random instances");
    cmd_verify->add_option("--mdps", verify_mdps, "number of random MDPs to certify");

    CLI::App* cmd_metrics = app.add_subcommand("metrics", "diversity metrics for a vector set");
    std::string metrics_input, metrics_reference, metrics_out;
    int metrics_groups = 1, metrics_k = 10;
    double metrics_bandwidth = 0.0;
    std::string enc_kind = "identity", enc2_kind = "identity";
    int enc_dim = 2, enc2_dim = 2;
    uint64_t enc_seed = 1, enc2_seed = 2;
    std::string enc_path, enc2_path;
    cmd_metrics->add_option("--input", metrics_input, "one vector per line, whitespace-separated")
        ->required();
    cmd_metrics->add_option("--groups", metrics_groups,
                            "split the input evenly into this many prompt buckets");
    cmd_metrics->add_option("--reference", metrics_reference, "reference set for recall");
    cmd_metrics->add_option("--k", metrics_k, "recall neighborhood size");
    cmd_metrics->add_option("--bandwidth", metrics_bandwidth,
                            "Vendi RBF bandwidth (0 = median heuristic)");
    cmd_metrics->add_option("--encoder", enc_kind, "identity|random_projection|external_table");
    cmd_metrics->add_option("--encoder-dim", enc_dim, "projection output dim");
    cmd_metrics->add_option("--encoder-seed", enc_seed, "projection seed");
    cmd_metrics->add_option("--encoder-path", enc_path, "embeddings file for external_table");
    cmd_metrics->add_option("--encoder2", enc2_kind, "second encoder slot");
    cmd_metrics->add_option("--encoder2-dim", enc2_dim, "second slot projection dim");
    cmd_metrics->add_option("--encoder2-seed", enc2_seed, "second slot seed");
    cmd_metrics->add_option("--encoder2-path", enc2_path, "second slot embeddings file");
    cmd_metrics->add_option("--out", metrics_out, "write the JSON report here");

    CLI::App* cmd_compare = app.add_subcommand("compare", "gain report between two run dirs");
    std::string baseline_dir, candidate_dir, compare_out;
    cmd_compare->add_option("--baseline", baseline_dir, "baseline run directory")->required();
    cmd_compare->add_option("--candidate", candidate_dir, "candidate run directory")->required();
    cmd_compare->add_option("--out", compare_out, "write the JSON report here");

    CLI::App* cmd_config = app.add_subcommand("config", "print a config with all defaults");
    std::string config_preset = "default";
    cmd_config->add_option("--preset", config_preset, "default|four_peak")
        ->check(CLI::IsMember({"default", "four_peak"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_config->parsed()) {
            const auto cfg = config_preset == "four_peak" ? drift::four_peak_config()
                                                          : drift::default_config();
            std::cout << cfg.to_json().dump(2) << "\n";
            return 0;
        }

        if (cmd_pretrain->parsed() || cmd_train->parsed()) {
            drift::ExperimentConfig cfg = load_config(config_path, preset);
            if (seed_set) cfg.run_seed = seed;

            if (cmd_pretrain->parsed()) {
                const auto init = drift::GaussianChainPolicy::zero_init(cfg.spec,
                                                                        cfg.policy_noise_scale);
                const auto pre = drift::pretrain(init, cfg.landscape, cfg.prompts,
                                                 cfg.pretrain_steps, cfg.run_seed, cfg.pretrain_lr);
                std::filesystem::create_directories(out_dir);
                std::ofstream pol(out_dir + "/pretrained_policy.json");
                pol << pre.policy.to_json().dump(2) << "\n";
                nlohmann::json rep;
                rep["coverage_ok"] = pre.coverage_ok;
                rep["mode_fractions"] = pre.mode_fractions;
                std::ofstream repf(out_dir + "/pretrain_report.json");
                repf << rep.dump(2) << "\n";
                std::cout << rep.dump(2) << "\n";
                if (!pre.coverage_ok)
                    std::cerr << "warning: some active modes fell below 5% coverage\n";
                return 0;
            }

            const drift::RunResult result = drift::run_experiment(cfg, out_dir);
            std::cout << "run " << (result.status == drift::RunResult::Status::ok ? "ok" : "aborted")
                      << ", epochs=" << result.epochs.size()
                      << ", checkpoints=" << result.pareto.size() << ", artifacts in " << out_dir
                      << "\n";
            return result.status == drift::RunResult::Status::ok ? 0 : 3;
        }

        if (cmd_verify->parsed()) {
            const drift::TheorySuiteReport theory = drift::run_theory_suite(verify_seed);

            // Shaping invariance over random tabular instances.
            drift::Rng rng(drift::stream_key({verify_seed, drift::kStreamInstanceGen}));
            int equal_count = 0;
            double worst_q = 0.0;
            const double gammas[] = {0.5, 0.9, 0.99};
            const double lambdas[] = {-2.0, 0.0, 0.5, 2.0};
            for (int i = 0; i < verify_mdps; ++i) {
                const int S = 2 + rng.uniform_int(19);
                const int A = 2 + rng.uniform_int(4);
                const auto mdp = drift::random_mdp(S, A, gammas[rng.uniform_int(3)], rng);
                const auto pot = drift::random_potential(S, rng);
                const double lambda = lambdas[rng.uniform_int(4)];
                const auto report = drift::certify_invariance(mdp, pot, lambda, 1e-10);
                if (report.optimal_sets_equal) ++equal_count;
                worst_q = std::max(worst_q, report.q_residual);
            }

            nlohmann::json j = theory.details();
            j["shaping_invariance"] = {{"instances", verify_mdps},
                                       {"optimal_sets_equal", equal_count},
                                       {"max_q_residual", worst_q},
                                       {"passed", equal_count == verify_mdps && worst_q <= 1e-8}};
            const bool ok =
                theory.all_passed && equal_count == verify_mdps && worst_q <= 1e-8;
            j["all_passed"] = ok;
            std::cout << j.dump(2) << "\n";
            if (!verify_out.empty()) {
                std::ofstream out(verify_out);
                out << j.dump(2) << "\n";
            }
            return ok ? 0 : 2;
        }

        if (cmd_metrics->parsed()) {
            const std::vector<drift::Vec> rows = read_vectors(metrics_input);
            if (rows.size() < 2) throw std::runtime_error("need at least two input vectors");
            if (metrics_groups < 1 || rows.size() % metrics_groups != 0)
                throw std::runtime_error("--groups must evenly divide the input rows");
            const int input_dim = static_cast<int>(rows.front().size());

            drift::EncoderConfig ec1{enc_kind, enc_dim, enc_seed, enc_path};
            drift::EncoderConfig ec2{enc2_kind, enc2_dim, enc2_seed, enc2_path};
            const drift::Encoder e1 = ec1.build(input_dim);
            const drift::Encoder e2 = ec2.build(input_dim);

            std::vector<std::vector<drift::Vec>> buckets(metrics_groups);
            const size_t per = rows.size() / metrics_groups;
            for (size_t i = 0; i < rows.size(); ++i) buckets[i / per].push_back(rows[i]);

            const double bandwidth = metrics_bandwidth > 0.0
                                         ? metrics_bandwidth
                                         : drift::median_pairwise_distance(rows, e1);
            nlohmann::json j;
            j["dreamsim_style"] = drift::set_diversity(buckets, e1);
            j["clip_style"] = drift::clip_style_diversity(buckets, e2);
            j["vendi"] = drift::vendi_score(rows, e1, bandwidth);
            j["vendi_bandwidth"] = bandwidth;
            if (!metrics_reference.empty()) {
                const auto reference = read_vectors(metrics_reference);
                j["recall"] = drift::generalized_recall(reference, rows, metrics_k);
            } else {
                j["recall"] = nullptr;
            }
            std::cout << j.dump(2) << "\n";
            if (!metrics_out.empty()) {
                std::ofstream out(metrics_out);
                out << j.dump(2) << "\n";
            }
            return 0;
        }

        if (cmd_compare->parsed()) {
            const auto baseline = drift::load_pareto_csv(baseline_dir + "/pareto.csv");
            const auto candidate = drift::load_pareto_csv(candidate_dir + "/pareto.csv");
            const drift::GainReport report = drift::compare_runs(baseline, candidate);
            std::cout << report.to_json().dump(2) << "\n";
            if (!compare_out.empty()) {
                std::ofstream out(compare_out);
                out << report.to_json().dump(2) << "\n";
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
