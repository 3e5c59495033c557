#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drift/diversity.hpp"
#include "drift/grpo.hpp"
#include "drift/mechanisms.hpp"
#include "drift/policy.hpp"

#include <nlohmann/json_fwd.hpp>

namespace drift {

struct EncoderConfig {
    std::string kind = "identity";  // identity | random_projection | external_table
    int dim = 2;                    // output dim for random_projection
    uint64_t seed = 1;
    std::string path;               // embeddings file for external_table

    Encoder build(int input_dim) const;
};

struct EvalConfig {
    int num_eval_prompts = 4;
    int samples_per_prompt = 40;
    int recall_k = 10;
    // 0 means: pin automatically to the median pairwise distance of the
    // pretrained policy's eval samples, then reuse that bandwidth for every
    // checkpoint of the run so Vendi scores stay comparable over training.
    double vendi_bandwidth = 0.0;
    EncoderConfig encoder;       // primary (perceptual-style) slot
    EncoderConfig clip_encoder;  // secondary (semantic-style) slot
};

struct ExperimentConfig {
    uint64_t run_seed = 42;
    int epochs = 200;
    int eval_every = 10;
    DenoisingMDPSpec spec;
    double policy_noise_scale = 0.7;
    RewardLandscape landscape;
    std::vector<PromptEmbedding> prompts;
    GRPOConfig grpo;
    DriftConfig drift;
    MechanismToggles toggles;
    int pretrain_steps = 4000;
    double pretrain_lr = 0.05;
    EvalConfig eval;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Stock setup: six fixed modes, four prompts each activating 2-4 of them.
ExperimentConfig default_config();

/// Collapse testbed: four equal-height peaks active for every prompt.
ExperimentConfig four_peak_config();

/// One evaluation checkpoint on the reward-diversity plane.
struct ParetoRecord {
    int checkpoint_epoch = 0;
    double mean_reward = 0.0;
    double dreamsim_style_diversity = 0.0;
    double clip_style_diversity = 0.0;
    double recall = 0.0;
    double vendi = 0.0;
};

struct RunResult {
    enum class Status { ok, aborted };
    Status status = Status::ok;
    std::vector<EpochStats> epochs;
    std::vector<ParetoRecord> pareto;
    GaussianChainPolicy pretrained;  // the frozen reference policy
    GaussianChainPolicy final_policy;
    double vendi_bandwidth_used = 0.0;
};

/// Deterministic end-to-end run: pretrain, fine-tune with the configured
/// mechanisms, evaluate at the checkpoint cadence. When out_dir is non-empty
/// writes epochs.csv, pareto.csv, final_policy.json and config_echo.json.
/// A non-finite training signal aborts the run, keeping the last good policy.
RunResult run_experiment(const ExperimentConfig& config, const std::string& out_dir = "");

void write_run_artifacts(const RunResult& result, const ExperimentConfig& config,
                         const std::string& out_dir);

std::vector<ParetoRecord> load_pareto_csv(const std::string& path);
std::vector<EpochStats> load_epochs_csv(const std::string& path);

/// Matched-checkpoint comparison on the Pareto plane. The baseline anchor is
/// its maximum-reward record; the compared candidate record must meet or
/// exceed the anchor on the matching axis (reward for DG, primary diversity
/// for RG) and the closest such record is used, so reported gains are
/// conservative. Candidates that never reach the anchor give "no_overlap".
struct GainReport {
    std::string dg_status = "no_overlap";
    std::string rg_status = "no_overlap";
    double dg_dreamsim = 0.0;  // percent
    double dg_clip = 0.0;
    double dg_recall = 0.0;
    double dg_vendi = 0.0;
    double rg = 0.0;           // percent, matched on the primary diversity axis
    double matched_reward_baseline = 0.0;
    double matched_reward_candidate = 0.0;

    nlohmann::json to_json() const;
};

GainReport compare_runs(const std::vector<ParetoRecord>& baseline,
                        const std::vector<ParetoRecord>& candidate);

/// Matched-reward record pair used for paired-seed diversity comparisons:
/// anchor = baseline's maximum-reward record, candidate = its lowest-reward
/// record with reward >= anchor - tolerance. Returns false when the
/// candidate never gets within tolerance of the anchor.
bool matched_reward_pair(const std::vector<ParetoRecord>& baseline,
                         const std::vector<ParetoRecord>& candidate, double tolerance,
                         ParetoRecord& baseline_out, ParetoRecord& candidate_out);

}  // namespace drift
