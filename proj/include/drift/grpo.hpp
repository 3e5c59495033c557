#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "drift/diversity.hpp"
#include "drift/mechanisms.hpp"
#include "drift/policy.hpp"

namespace drift {

struct GRPOConfig {
    int group_size = 8;
    double clip_epsilon = 1e-4;
    double kl_beta = 0.001;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-4;
    double max_grad_norm = 1.0;
    int samples_per_epoch = 256;
    int gradient_updates_per_epoch = 4;
    double std_floor = 1e-8;

    void validate() const;
};

/// G rollouts sharing one prompt, with rewards and (once computed) the
/// advantage vector driving the surrogate.
struct Group {
    std::vector<Trajectory> trajectories;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

/// Which of the training interventions are active for a run.
struct MechanismToggles {
    bool selection = false;
    bool prompt_noise = false;
    bool shaping = false;
    bool kl = false;
};

/// Rolls out `count` trajectories for one prompt under the behavior policy.
/// Each trajectory draws from the substream keyed by
/// (run_seed, train tag, prompt_id, sample_index_begin + i).
Group rollout_group(const GaussianChainPolicy& policy, const RewardLandscape& landscape,
                    const PromptEmbedding& prompt, int count, uint64_t run_seed,
                    uint64_t sample_index_begin, const StepConditioner& conditioner = nullptr);

/// Group-relative advantages: (r_i - mean) / max(population std, std_floor).
/// Zero-spread groups map to all-zero advantages.
std::vector<double> compute_advantages(const std::vector<double>& rewards,
                                       double std_floor = 1e-8);

struct SurrogateResult {
    double loss = 0.0;
    Vec grad;               // d loss / d params
    double clip_fraction = 0.0;
    double mean_kl = 0.0;
};

/// Clipped importance-weighted surrogate over one group:
///   loss = -(1/G) sum_i sum_t min(rho*A_i, clip(rho, 1-eps, 1+eps)*A_i)
///          + kl_beta * (1/G) sum_i sum_t KL_t
/// The gradient is analytic, with zero flow through clipped-and-worse terms.
/// Behavior log-densities come from the trajectories' stored step_logps.
SurrogateResult clipped_surrogate(const GaussianChainPolicy& policy,
                                  const GaussianChainPolicy& ref_policy, const Group& group,
                                  const GRPOConfig& config);

struct AdamState {
    Vec m;
    Vec v;
    long step = 0;

    void init(size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
};

/// Global-norm clip followed by one AdamW step (decoupled weight decay).
/// Returns the pre-clip gradient norm.
double adam_update(Vec& params, Vec grad, const GRPOConfig& config, AdamState& state);

struct EpochStats {
    int epoch = 0;
    double mean_reward = 0.0;
    double mean_kl = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;
    double mean_intrinsic_reward = 0.0;
    double intrinsic_clip_fraction = 0.0;
    std::string selection_mode = "off";
};

struct TrainingAbort : std::runtime_error {
    int epoch;
    int update;
    TrainingAbort(const std::string& what, int epoch_, int update_)
        : std::runtime_error(what), epoch(epoch_), update(update_) {}
};

/// One epoch: sample samples_per_epoch trajectories grouped per prompt
/// (routed through selection / prompt noise / shaping when toggled), then
/// gradient_updates_per_epoch AdamW steps against the epoch-start behavior
/// snapshot. sample_counters holds one running rollout index per prompt and
/// persists across epochs so substreams never repeat.
EpochStats train_epoch(GaussianChainPolicy& policy, const GaussianChainPolicy& ref_policy,
                       const std::vector<PromptEmbedding>& prompts,
                       const RewardLandscape& landscape, const GRPOConfig& grpo_config,
                       const DriftConfig& drift_config, const MechanismToggles& toggles,
                       const Encoder& intrinsic_encoder, uint64_t run_seed, int epoch_index,
                       AdamState& adam, std::vector<uint64_t>& sample_counters);

}  // namespace drift
