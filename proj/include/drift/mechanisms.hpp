#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drift/diversity.hpp"
#include "drift/policy.hpp"
#include "drift/rng.hpp"

namespace drift {

enum class SelectionMode { off, concentrated, contrasted };

std::string to_string(SelectionMode mode);
SelectionMode selection_mode_from_string(const std::string& s);

struct DriftConfig {
    double shaping_lambda = 0.5;
    double intrinsic_clip_sigma = 1.0;
    double noise_scale = 0.05;   // s in the perturbation, applied to the noise term
    double anneal_tau1 = 0.4;
    double anneal_tau2 = 1.0;
    double rescale_psi = 1.0;
    SelectionMode selection_mode = SelectionMode::off;
    int pool_multiplier = 2;     // candidate pool is pool_multiplier * G; fixed at 2
    // Orientation of normalized time in the annealing schedule. Default maps
    // t_norm = step/T with t_norm = 0 at x_T (gamma = 1, clean prompt early,
    // full mixing late); invert_time flips it for sensitivity checks.
    bool invert_time = false;

    void validate() const;
};

/// Outcome of picking G samples from the 2G candidate pool.
struct SelectionResult {
    std::vector<int> chosen_indices;  // G distinct indices, ascending
    int reference_index = -1;
    double score = 0.0;               // minimized s_i or maximized t_i
};

/// D_ij = |r_i - r_j|; symmetric, zero diagonal. Pool length must be even
/// and at least 4.
std::vector<double> reward_distance_matrix(const std::vector<double>& rewards);

/// Reference = candidate with minimal summed distance to its G-1 nearest
/// neighbors; batch = reference plus those neighbors. Ties break low-index.
SelectionResult select_concentrated(const std::vector<double>& rewards, int group_size);

/// Mirror image: maximal summed distance to the G-1 farthest neighbors.
SelectionResult select_contrasted(const std::vector<double>& rewards, int group_size);

/// Piecewise-linear annealing: 1 below tau1, 0 above tau2, linear between.
double anneal_gamma(double t_norm, double tau1, double tau2);

/// Scalar mean/std pooled over every component of the clean prompt set.
struct PromptStats {
    double mean = 0.0;
    double std_dev = 0.0;
};

PromptStats prompt_stats(const std::vector<PromptEmbedding>& prompts);

struct PerturbResult {
    Vec embedding;
    bool rescale_fallback = false;  // set when the noisy embedding had zero spread
};

/// sqrt(gamma)*e + s*sqrt(1-gamma)*n, then the statistics-preserving rescale
/// mixed in with weight psi. Always draws dim(e) normals so the stream
/// layout is independent of the schedule position.
PerturbResult perturb_prompt(const Vec& e, double t_norm, const DriftConfig& config,
                             const PromptStats& stats, Rng& rng);
PerturbResult perturb_prompt(const Vec& e, double t_norm, const DriftConfig& config,
                             const PromptStats& stats, uint64_t seed);

/// Rollout hook injecting annealed prompt noise at every step.
StepConditioner make_prompt_noiser(const DriftConfig& config, const PromptStats& stats,
                                   int horizon);

/// Intrinsic reward per sample: clip(gamma^T * d(x_0^i), 0, sigma), where
/// d(x_0^i) is the intra-group diversity of the terminal sample. Only
/// terminal diversities are evaluated; the stepwise shaping sum telescopes
/// to this value with d(x_T) = 0.
std::vector<double> intrinsic_trajectory_reward(const std::vector<Trajectory>& group,
                                                double discount_gamma, const Encoder& encoder,
                                                const DriftConfig& config);

/// Both sides of the telescoping identity for a potential sequence
/// d(x_T) ... d(x_0): the explicit discounted stepwise sum and
/// gamma^T d(x_0) - d(x_T). Callers assert equality.
struct TelescopingResult {
    double stepwise_sum = 0.0;
    double closed_form = 0.0;
};

TelescopingResult telescoping_check(const std::vector<double>& potentials_along_trajectory,
                                    double discount_gamma);

/// Decoupled advantage merge: A + lambda * A_int, elementwise.
std::vector<double> merge_advantages(const std::vector<double>& advantages,
                                     const std::vector<double>& intrinsic_advantages,
                                     double lambda);

}  // namespace drift
