#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "drift/mdp.hpp"
#include "drift/rng.hpp"

#include <nlohmann/json_fwd.hpp>

namespace drift {

using Vec = std::vector<double>;

struct PromptEmbedding {
    Vec e;
    int prompt_id = 0;
};

/// One denoising rollout x_T ... x_0. states[0] is x_T; step i is the
/// transition states[i] -> states[i+1] with log-density step_logps[i] under
/// the behavior policy, conditioned on step_embeddings[i] (the clean prompt
/// embedding unless prompt noise was active during the rollout).
struct Trajectory {
    std::vector<Vec> states;          // horizon + 1
    std::vector<double> step_logps;   // horizon
    std::vector<Vec> step_embeddings; // horizon
    PromptEmbedding prompt;
    double terminal_reward = 0.0;
    uint64_t rng_seed = 0;
};

/// Per-step override of the conditioning embedding during a rollout. Draws
/// from the trajectory's own stream so replay stays bit-identical.
using StepConditioner = std::function<Vec(const PromptEmbedding&, int step, Rng&)>;

/// Reverse-process policy with one affine mean map per step:
/// mu(x, c, step) = W_step * [x (+) c] + b_step, transition noise N(0, sigma_step^2 I).
/// Parameters are packed per step as W row-major followed by b.
class GaussianChainPolicy {
public:
    GaussianChainPolicy() = default;
    GaussianChainPolicy(const DenoisingMDPSpec& spec, Vec noise_scales);

    /// Zero-initialized parameters, constant noise scale.
    static GaussianChainPolicy zero_init(const DenoisingMDPSpec& spec, double noise_scale);

    const DenoisingMDPSpec& spec() const { return spec_; }
    const Vec& params() const { return params_; }
    Vec& mutable_params() { return params_; }
    const Vec& noise_scales() const { return noise_scales_; }
    double sigma(int step) const { return noise_scales_[step]; }
    size_t param_count() const { return params_.size(); }
    size_t step_param_offset(int step) const;
    size_t step_param_size() const;

    Vec mean(const Vec& x, const Vec& embedding, int step) const;

    nlohmann::json to_json() const;
    static GaussianChainPolicy from_json(const nlohmann::json& j);

private:
    DenoisingMDPSpec spec_;
    Vec params_;
    Vec noise_scales_;
};

Trajectory sample_trajectory(const GaussianChainPolicy& policy, const PromptEmbedding& prompt,
                             uint64_t seed, const StepConditioner& conditioner = nullptr);

/// Exact Gaussian log-density of the realized transition at one step.
double step_log_prob(const GaussianChainPolicy& policy, const Vec& x_next, const Vec& x,
                     const Vec& embedding, int step);

/// Sum over steps of step_log_prob, conditioning on the trajectory's stored
/// per-step embeddings. Valid for any parameters sharing the spec.
double trajectory_log_prob(const GaussianChainPolicy& policy, const Trajectory& traj);

/// Analytic gradient of trajectory_log_prob with respect to the parameters.
Vec log_prob_grad(const GaussianChainPolicy& policy, const Trajectory& traj);

/// Adds coeff * grad of log pi(x_next | x, embedding, step) into grad_out.
void accumulate_step_score(const GaussianChainPolicy& policy, const Vec& x_next, const Vec& x,
                           const Vec& embedding, int step, double coeff, Vec& grad_out);

/// Closed-form KL between the step kernels of two policies sharing spec and
/// noise scales: ||mu_theta - mu_ref||^2 / (2 sigma_t^2).
double step_kl(const GaussianChainPolicy& policy, const GaussianChainPolicy& ref, const Vec& x,
               const Vec& embedding, int step);

/// Adds coeff * grad_theta of step_kl into grad_out.
void accumulate_step_kl_grad(const GaussianChainPolicy& policy, const GaussianChainPolicy& ref,
                             const Vec& x, const Vec& embedding, int step, double coeff,
                             Vec& grad_out);

/// Analytic multimodal reward field: equal-height Gaussian bumps, one mask of
/// active modes per prompt id, values in [0, 1].
struct RewardLandscape {
    std::vector<Vec> mode_centers;
    double mode_width = 1.0;
    std::vector<std::vector<int>> active_modes_per_prompt;

    const std::vector<int>& active_modes(int prompt_id) const;
    void validate(int state_dim) const;
};

double evaluate_reward(const RewardLandscape& landscape, const Vec& x0,
                       const PromptEmbedding& prompt);

/// Index into mode_centers of the active mode nearest to x0.
int nearest_mode(const RewardLandscape& landscape, const Vec& x0, const PromptEmbedding& prompt);

struct PretrainResult {
    GaussianChainPolicy policy;
    bool coverage_ok = true;
    // fraction of probe samples landing nearest each active mode, per prompt
    std::vector<std::vector<double>> mode_fractions;
};

/// Supervised denoising regression toward the landscape's modes: noisy
/// interpolation paths from N(0,I) to mode-centered targets, each step's
/// affine map regressed onto the next state along the path. Returns the
/// input policy unchanged when steps == 0. Coverage shortfalls set
/// coverage_ok = false rather than throwing.
PretrainResult pretrain(const GaussianChainPolicy& policy, const RewardLandscape& landscape,
                        const std::vector<PromptEmbedding>& prompts, int steps, uint64_t seed,
                        double learning_rate = 0.05);

}  // namespace drift
