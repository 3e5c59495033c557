#include "drift/grpo.hpp"

#include <algorithm>
#include <cmath>

namespace drift {

void GRPOConfig::validate() const {
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
    if (!(clip_epsilon > 0.0)) throw std::invalid_argument("clip_epsilon must be positive");
    if (kl_beta < 0.0) throw std::invalid_argument("kl_beta must be non-negative");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
    if (!(std_floor > 0.0)) throw std::invalid_argument("std_floor must be positive");
    if (samples_per_epoch < group_size)
        throw std::invalid_argument("samples_per_epoch must cover at least one group");
    if (gradient_updates_per_epoch < 1)
        throw std::invalid_argument("gradient_updates_per_epoch must be >= 1");
}

Group rollout_group(const GaussianChainPolicy& policy, const RewardLandscape& landscape,
                    const PromptEmbedding& prompt, int count, uint64_t run_seed,
                    uint64_t sample_index_begin, const StepConditioner& conditioner) {
    Group group;
    group.trajectories.reserve(count);
    group.rewards.reserve(count);
    for (int i = 0; i < count; ++i) {
        const uint64_t key =
            stream_key({run_seed, kStreamTrain, static_cast<uint64_t>(prompt.prompt_id),
                        sample_index_begin + static_cast<uint64_t>(i)});
        Trajectory traj = sample_trajectory(policy, prompt, key, conditioner);
        traj.terminal_reward = evaluate_reward(landscape, traj.states.back(), prompt);
        group.rewards.push_back(traj.terminal_reward);
        group.trajectories.push_back(std::move(traj));
    }
    return group;
}

std::vector<double> compute_advantages(const std::vector<double>& rewards, double std_floor) {
    const size_t n = rewards.size();
    if (n < 2) throw std::invalid_argument("advantages need at least 2 rewards");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(n));
    const double denom = std::max(std_dev, std_floor);
    std::vector<double> adv(n);
    for (size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / denom;
    return adv;
}

SurrogateResult clipped_surrogate(const GaussianChainPolicy& policy,
                                  const GaussianChainPolicy& ref_policy, const Group& group,
                                  const GRPOConfig& config) {
    config.validate();
    const int T = policy.spec().horizon;
    const int g = static_cast<int>(group.trajectories.size());
    if (g < 1) throw std::invalid_argument("empty group");
    if (group.advantages.size() != static_cast<size_t>(g))
        throw std::invalid_argument("group advantages not computed");
    for (const auto& traj : group.trajectories)
        if (static_cast<int>(traj.states.size()) != T + 1)
            throw std::invalid_argument("group horizon does not match policy");

    SurrogateResult result;
    result.grad.assign(policy.param_count(), 0.0);
    const double inv_g = 1.0 / g;
    const double lo = 1.0 - config.clip_epsilon;
    const double hi = 1.0 + config.clip_epsilon;
    long clipped_terms = 0;
    double kl_total = 0.0;

    for (int i = 0; i < g; ++i) {
        const Trajectory& traj = group.trajectories[i];
        const double advantage = group.advantages[i];
        for (int step = 0; step < T; ++step) {
            const Vec& x = traj.states[step];
            const Vec& x_next = traj.states[step + 1];
            const Vec& emb = traj.step_embeddings[step];

            const double logp_new = step_log_prob(policy, x_next, x, emb, step);
            const double ratio = std::exp(logp_new - traj.step_logps[step]);
            const double unclipped = ratio * advantage;
            const double clipped = std::clamp(ratio, lo, hi) * advantage;

            if (unclipped <= clipped) {
                result.loss -= inv_g * unclipped;
                accumulate_step_score(policy, x_next, x, emb, step, -inv_g * advantage * ratio,
                                      result.grad);
            } else {
                // clipped-and-worse: constant in theta, no gradient flow
                result.loss -= inv_g * clipped;
                ++clipped_terms;
            }

            const double kl = step_kl(policy, ref_policy, x, emb, step);
            kl_total += kl;
            if (config.kl_beta > 0.0) {
                result.loss += config.kl_beta * inv_g * kl;
                accumulate_step_kl_grad(policy, ref_policy, x, emb, step,
                                        config.kl_beta * inv_g, result.grad);
            }
        }
    }

    result.clip_fraction = static_cast<double>(clipped_terms) / (static_cast<double>(g) * T);
    result.mean_kl = kl_total / (static_cast<double>(g) * T);
    return result;
}

double adam_update(Vec& params, Vec grad, const GRPOConfig& config, AdamState& state) {
    if (state.m.size() != params.size()) state.init(params.size());

    double norm_sq = 0.0;
    for (double gi : grad) norm_sq += gi * gi;
    const double norm = std::sqrt(norm_sq);
    if (config.max_grad_norm > 0.0 && norm > config.max_grad_norm) {
        const double scale = config.max_grad_norm / norm;
        for (double& gi : grad) gi *= scale;
    }

    state.step += 1;
    const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = config.adam_beta1 * state.m[i] + (1.0 - config.adam_beta1) * grad[i];
        state.v[i] = config.adam_beta2 * state.v[i] + (1.0 - config.adam_beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= config.learning_rate *
                     (m_hat / (std::sqrt(v_hat) + config.adam_eps) + config.weight_decay * params[i]);
    }
    return norm;
}

EpochStats train_epoch(GaussianChainPolicy& policy, const GaussianChainPolicy& ref_policy,
                       const std::vector<PromptEmbedding>& prompts,
                       const RewardLandscape& landscape, const GRPOConfig& grpo_config,
                       const DriftConfig& drift_config, const MechanismToggles& toggles,
                       const Encoder& intrinsic_encoder, uint64_t run_seed, int epoch_index,
                       AdamState& adam, std::vector<uint64_t>& sample_counters) {
    grpo_config.validate();
    drift_config.validate();
    if (prompts.empty()) throw std::invalid_argument("no prompts");
    if (sample_counters.size() != prompts.size())
        throw std::invalid_argument("one sample counter per prompt required");
    if (toggles.selection && drift_config.selection_mode == SelectionMode::off)
        throw std::invalid_argument("selection toggle requires a selection mode");

    const int G = grpo_config.group_size;
    const int num_groups = grpo_config.samples_per_epoch / G;
    const GaussianChainPolicy behavior = policy;  // theta_old snapshot for this epoch

    StepConditioner conditioner = nullptr;
    if (toggles.prompt_noise)
        conditioner = make_prompt_noiser(drift_config, prompt_stats(prompts),
                                         policy.spec().horizon);

    EpochStats stats;
    stats.epoch = epoch_index;
    stats.selection_mode =
        toggles.selection ? to_string(drift_config.selection_mode) : to_string(SelectionMode::off);

    std::vector<Group> groups;
    groups.reserve(num_groups);
    double reward_sum = 0.0;
    double intrinsic_sum = 0.0;
    long intrinsic_clipped = 0;
    long intrinsic_count = 0;

    for (int gi = 0; gi < num_groups; ++gi) {
        const size_t prompt_index = static_cast<size_t>(gi) % prompts.size();
        const PromptEmbedding& prompt = prompts[prompt_index];
        const int rollout_count = toggles.selection ? drift_config.pool_multiplier * G : G;

        Group pool = rollout_group(behavior, landscape, prompt, rollout_count, run_seed,
                                   sample_counters[prompt_index], conditioner);
        sample_counters[prompt_index] += static_cast<uint64_t>(rollout_count);

        Group group;
        if (toggles.selection) {
            const SelectionResult sel =
                drift_config.selection_mode == SelectionMode::concentrated
                    ? select_concentrated(pool.rewards, G)
                    : select_contrasted(pool.rewards, G);
            for (int idx : sel.chosen_indices) {
                group.trajectories.push_back(std::move(pool.trajectories[idx]));
                group.rewards.push_back(pool.rewards[idx]);
            }
        } else {
            group = std::move(pool);
        }

        group.advantages = compute_advantages(group.rewards, grpo_config.std_floor);
        for (double r : group.rewards) reward_sum += r;

        if (toggles.shaping) {
            const std::vector<double> intrinsic = intrinsic_trajectory_reward(
                group.trajectories, policy.spec().discount_gamma, intrinsic_encoder, drift_config);
            const std::vector<double> intrinsic_adv =
                compute_advantages(intrinsic, grpo_config.std_floor);
            group.advantages = merge_advantages(group.advantages, intrinsic_adv,
                                                drift_config.shaping_lambda);
            for (double ri : intrinsic) {
                intrinsic_sum += ri;
                ++intrinsic_count;
                // a sample sits exactly at the bound only when it was clamped
                if (ri >= drift_config.intrinsic_clip_sigma) ++intrinsic_clipped;
            }
        }
        groups.push_back(std::move(group));
    }

    stats.mean_reward = reward_sum / (static_cast<double>(num_groups) * G);
    if (intrinsic_count > 0) {
        stats.mean_intrinsic_reward = intrinsic_sum / static_cast<double>(intrinsic_count);
        stats.intrinsic_clip_fraction =
            static_cast<double>(intrinsic_clipped) / static_cast<double>(intrinsic_count);
    }

    GRPOConfig effective = grpo_config;
    if (!toggles.kl) effective.kl_beta = 0.0;

    double kl_acc = 0.0, clip_acc = 0.0, norm_acc = 0.0;
    for (int update = 0; update < grpo_config.gradient_updates_per_epoch; ++update) {
        Vec grad(policy.param_count(), 0.0);
        double loss = 0.0;
        double kl_mean = 0.0, clip_mean = 0.0;
        for (const Group& group : groups) {
            const SurrogateResult sr = clipped_surrogate(policy, ref_policy, group, effective);
            loss += sr.loss;
            kl_mean += sr.mean_kl;
            clip_mean += sr.clip_fraction;
            for (size_t i = 0; i < grad.size(); ++i) grad[i] += sr.grad[i];
        }
        const double inv_groups = 1.0 / static_cast<double>(groups.size());
        loss *= inv_groups;
        for (double& gi : grad) gi *= inv_groups;
        if (!std::isfinite(loss))
            throw TrainingAbort("non-finite loss", epoch_index, update);

        norm_acc += adam_update(policy.mutable_params(), std::move(grad), effective, adam);
        kl_acc += kl_mean * inv_groups;
        clip_acc += clip_mean * inv_groups;
    }
    const double inv_updates = 1.0 / grpo_config.gradient_updates_per_epoch;
    stats.mean_kl = kl_acc * inv_updates;
    stats.clip_fraction = clip_acc * inv_updates;
    stats.grad_norm = norm_acc * inv_updates;
    return stats;
}

}  // namespace drift
