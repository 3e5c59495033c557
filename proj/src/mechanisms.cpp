#include "drift/mechanisms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace drift {

std::string to_string(SelectionMode mode) {
    switch (mode) {
        case SelectionMode::off: return "off";
        case SelectionMode::concentrated: return "concentrated";
        case SelectionMode::contrasted: return "contrasted";
    }
    throw std::logic_error("unknown selection mode");
}

SelectionMode selection_mode_from_string(const std::string& s) {
    if (s == "off") return SelectionMode::off;
    if (s == "concentrated") return SelectionMode::concentrated;
    if (s == "contrasted") return SelectionMode::contrasted;
    throw std::invalid_argument("unknown selection mode: " + s);
}

void DriftConfig::validate() const {
    if (!(anneal_tau1 >= 0.0 && anneal_tau1 <= 1.0))
        throw std::invalid_argument("anneal_tau1 must be in [0, 1]");
    if (!(anneal_tau2 > anneal_tau1 && anneal_tau2 <= 1.0))
        throw std::invalid_argument("anneal_tau2 must be in (tau1, 1]");
    if (!(intrinsic_clip_sigma > 0.0))
        throw std::invalid_argument("intrinsic_clip_sigma must be positive");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("noise_scale must be non-negative");
    if (!(rescale_psi >= 0.0 && rescale_psi <= 1.0))
        throw std::invalid_argument("rescale_psi must be in [0, 1]");
    if (pool_multiplier != 2) throw std::invalid_argument("pool_multiplier is fixed at 2");
}

std::vector<double> reward_distance_matrix(const std::vector<double>& rewards) {
    const size_t n = rewards.size();
    if (n < 4 || n % 2 != 0)
        throw std::invalid_argument("reward pool must have even length >= 4");
    std::vector<double> d(n * n, 0.0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            const double v = std::abs(rewards[i] - rewards[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    return d;
}

namespace {

// Indices of the count nearest (or farthest) neighbors of row i, ties broken
// toward the lowest index.
std::vector<int> rank_neighbors(const std::vector<double>& dist, size_t n, size_t i, int count,
                                bool farthest) {
    std::vector<int> order;
    order.reserve(n - 1);
    for (size_t j = 0; j < n; ++j)
        if (j != i) order.push_back(static_cast<int>(j));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double da = dist[i * n + a];
        const double db = dist[i * n + b];
        if (da != db) return farthest ? da > db : da < db;
        return a < b;
    });
    order.resize(count);
    return order;
}

SelectionResult select_by_neighbors(const std::vector<double>& rewards, int group_size,
                                    bool farthest) {
    const size_t n = rewards.size();
    if (group_size < 2) throw std::invalid_argument("group_size must be >= 2");
    if (n != static_cast<size_t>(2 * group_size))
        throw std::invalid_argument("candidate pool must hold exactly 2G rewards");
    const std::vector<double> dist = reward_distance_matrix(rewards);

    int best_index = -1;
    double best_score = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const std::vector<int> nb = rank_neighbors(dist, n, i, group_size - 1, farthest);
        double score = 0.0;
        for (int j : nb) score += dist[i * n + j];
        const bool better =
            best_index < 0 || (farthest ? score > best_score : score < best_score);
        if (better) {
            best_index = static_cast<int>(i);
            best_score = score;
        }
    }

    SelectionResult result;
    result.reference_index = best_index;
    result.score = best_score;
    result.chosen_indices =
        rank_neighbors(dist, n, static_cast<size_t>(best_index), group_size - 1, farthest);
    result.chosen_indices.push_back(best_index);
    std::sort(result.chosen_indices.begin(), result.chosen_indices.end());
    return result;
}

}  // namespace

SelectionResult select_concentrated(const std::vector<double>& rewards, int group_size) {
    return select_by_neighbors(rewards, group_size, /*farthest=*/false);
}

SelectionResult select_contrasted(const std::vector<double>& rewards, int group_size) {
    return select_by_neighbors(rewards, group_size, /*farthest=*/true);
}

double anneal_gamma(double t_norm, double tau1, double tau2) {
    if (!(tau1 < tau2)) throw std::invalid_argument("tau1 must be below tau2");
    if (!(t_norm >= 0.0 && t_norm <= 1.0))
        throw std::invalid_argument("t_norm must be in [0, 1]");
    if (t_norm <= tau1) return 1.0;
    if (t_norm >= tau2) return 0.0;
    return (tau2 - t_norm) / (tau2 - tau1);
}

PromptStats prompt_stats(const std::vector<PromptEmbedding>& prompts) {
    size_t count = 0;
    double sum = 0.0;
    for (const auto& p : prompts)
        for (double x : p.e) {
            sum += x;
            ++count;
        }
    if (count == 0) throw std::invalid_argument("empty prompt set");
    PromptStats stats;
    stats.mean = sum / static_cast<double>(count);
    double var = 0.0;
    for (const auto& p : prompts)
        for (double x : p.e) {
            const double d = x - stats.mean;
            var += d * d;
        }
    stats.std_dev = std::sqrt(var / static_cast<double>(count));
    return stats;
}

PerturbResult perturb_prompt(const Vec& e, double t_norm, const DriftConfig& config,
                             const PromptStats& stats, Rng& rng) {
    config.validate();
    if (config.rescale_psi > 0.0 && !(stats.std_dev > 0.0))
        throw std::invalid_argument("rescaling needs positive clean-prompt std");

    const double gamma = anneal_gamma(t_norm, config.anneal_tau1, config.anneal_tau2);
    const double signal = std::sqrt(gamma);
    const double noise = config.noise_scale * std::sqrt(1.0 - gamma);

    const size_t k = e.size();
    PerturbResult result;
    result.embedding.resize(k);
    for (size_t i = 0; i < k; ++i)
        result.embedding[i] = signal * e[i] + noise * rng.normal();

    if (config.rescale_psi == 0.0) return result;

    double mean = 0.0;
    for (double x : result.embedding) mean += x;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (double x : result.embedding) var += (x - mean) * (x - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(k));

    if (!(std_dev > 0.0)) {
        result.rescale_fallback = true;
        return result;
    }
    const double psi = config.rescale_psi;
    for (size_t i = 0; i < k; ++i) {
        const double rescaled = (result.embedding[i] - mean) / std_dev * stats.std_dev + stats.mean;
        result.embedding[i] = psi * rescaled + (1.0 - psi) * result.embedding[i];
    }
    return result;
}

PerturbResult perturb_prompt(const Vec& e, double t_norm, const DriftConfig& config,
                             const PromptStats& stats, uint64_t seed) {
    Rng rng(seed);
    return perturb_prompt(e, t_norm, config, stats, rng);
}

StepConditioner make_prompt_noiser(const DriftConfig& config, const PromptStats& stats,
                                   int horizon) {
    config.validate();
    return [config, stats, horizon](const PromptEmbedding& prompt, int step, Rng& rng) -> Vec {
        double t_norm = static_cast<double>(step) / horizon;
        if (config.invert_time) t_norm = 1.0 - t_norm;
        return perturb_prompt(prompt.e, t_norm, config, stats, rng).embedding;
    };
}

std::vector<double> intrinsic_trajectory_reward(const std::vector<Trajectory>& group,
                                                double discount_gamma, const Encoder& encoder,
                                                const DriftConfig& config) {
    if (group.size() < 2)
        throw std::invalid_argument("intra-group diversity needs at least 2 trajectories");
    const int T = static_cast<int>(group.front().states.size()) - 1;
    std::vector<Vec> terminals;
    terminals.reserve(group.size());
    for (const auto& traj : group) terminals.push_back(traj.states.back());

    const DiversityMatrix dm = pairwise_diversity(terminals, encoder);
    const double discount = std::pow(discount_gamma, T);
    std::vector<double> rewards(group.size());
    for (size_t i = 0; i < group.size(); ++i)
        rewards[i] =
            std::clamp(discount * dm.per_sample[i], 0.0, config.intrinsic_clip_sigma);
    return rewards;
}

TelescopingResult telescoping_check(const std::vector<double>& potentials_along_trajectory,
                                    double discount_gamma) {
    const size_t len = potentials_along_trajectory.size();
    if (len < 2) throw std::invalid_argument("potential sequence needs length T+1 >= 2");
    const int T = static_cast<int>(len) - 1;

    TelescopingResult result;
    double discount = 1.0;
    for (int t = 0; t < T; ++t) {
        const double step_reward = discount_gamma * potentials_along_trajectory[t + 1] -
                                   potentials_along_trajectory[t];
        result.stepwise_sum += discount * step_reward;
        discount *= discount_gamma;
    }
    result.closed_form = std::pow(discount_gamma, T) * potentials_along_trajectory.back() -
                         potentials_along_trajectory.front();
    return result;
}

std::vector<double> merge_advantages(const std::vector<double>& advantages,
                                     const std::vector<double>& intrinsic_advantages,
                                     double lambda) {
    if (advantages.size() != intrinsic_advantages.size())
        throw std::invalid_argument("advantage vectors differ in length");
    std::vector<double> merged(advantages.size());
    for (size_t i = 0; i < merged.size(); ++i)
        merged[i] = advantages[i] + lambda * intrinsic_advantages[i];
    return merged;
}

}  // namespace drift
