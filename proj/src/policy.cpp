#include "drift/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace drift {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

GaussianChainPolicy::GaussianChainPolicy(const DenoisingMDPSpec& spec, Vec noise_scales)
    : spec_(spec), noise_scales_(std::move(noise_scales)) {
    spec_.validate();
    if (noise_scales_.size() != static_cast<size_t>(spec_.horizon))
        throw std::invalid_argument("noise_scales length must equal horizon");
    for (double s : noise_scales_)
        if (!(s > 0.0)) throw std::invalid_argument("noise scales must be positive");
    params_.assign(static_cast<size_t>(spec_.horizon) * step_param_size(), 0.0);
}

GaussianChainPolicy GaussianChainPolicy::zero_init(const DenoisingMDPSpec& spec,
                                                   double noise_scale) {
    return GaussianChainPolicy(spec, Vec(spec.horizon, noise_scale));
}

size_t GaussianChainPolicy::step_param_size() const {
    const size_t in = static_cast<size_t>(spec_.state_dim) + spec_.prompt_dim;
    return static_cast<size_t>(spec_.state_dim) * in + spec_.state_dim;
}

size_t GaussianChainPolicy::step_param_offset(int step) const {
    return static_cast<size_t>(step) * step_param_size();
}

Vec GaussianChainPolicy::mean(const Vec& x, const Vec& embedding, int step) const {
    const int d = spec_.state_dim;
    const int k = spec_.prompt_dim;
    if (static_cast<int>(x.size()) != d || static_cast<int>(embedding.size()) != k)
        throw std::invalid_argument("mean: dimension mismatch");
    const size_t base = step_param_offset(step);
    const size_t in = static_cast<size_t>(d) + k;
    Vec mu(d, 0.0);
    for (int row = 0; row < d; ++row) {
        const double* w = params_.data() + base + static_cast<size_t>(row) * in;
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += w[j] * x[j];
        for (int j = 0; j < k; ++j) acc += w[d + j] * embedding[j];
        mu[row] = acc;
    }
    const double* b = params_.data() + base + static_cast<size_t>(d) * in;
    for (int row = 0; row < d; ++row) mu[row] += b[row];
    return mu;
}

Trajectory sample_trajectory(const GaussianChainPolicy& policy, const PromptEmbedding& prompt,
                             uint64_t seed, const StepConditioner& conditioner) {
    const DenoisingMDPSpec& spec = policy.spec();
    const int d = spec.state_dim;
    const int T = spec.horizon;

    Rng rng(seed);
    Trajectory traj;
    traj.prompt = prompt;
    traj.rng_seed = seed;
    traj.states.reserve(T + 1);
    traj.step_logps.reserve(T);
    traj.step_embeddings.reserve(T);

    Vec x(d);
    for (int i = 0; i < d; ++i) x[i] = rng.normal();
    traj.states.push_back(x);

    for (int step = 0; step < T; ++step) {
        Vec emb = conditioner ? conditioner(prompt, step, rng) : prompt.e;
        const Vec mu = policy.mean(x, emb, step);
        const double sigma = policy.sigma(step);
        Vec x_next(d);
        double logp = 0.0;
        for (int i = 0; i < d; ++i) {
            const double eps = rng.normal();
            x_next[i] = mu[i] + sigma * eps;
            const double z = (x_next[i] - mu[i]) / sigma;
            logp += -0.5 * (kLog2Pi + z * z) - std::log(sigma);
        }
        traj.step_logps.push_back(logp);
        traj.step_embeddings.push_back(std::move(emb));
        traj.states.push_back(x_next);
        x = traj.states.back();
    }
    return traj;
}

double step_log_prob(const GaussianChainPolicy& policy, const Vec& x_next, const Vec& x,
                     const Vec& embedding, int step) {
    const Vec mu = policy.mean(x, embedding, step);
    const double sigma = policy.sigma(step);
    double logp = 0.0;
    for (size_t i = 0; i < mu.size(); ++i) {
        const double z = (x_next[i] - mu[i]) / sigma;
        logp += -0.5 * (kLog2Pi + z * z) - std::log(sigma);
    }
    return logp;
}

double trajectory_log_prob(const GaussianChainPolicy& policy, const Trajectory& traj) {
    const int T = policy.spec().horizon;
    if (static_cast<int>(traj.states.size()) != T + 1)
        throw std::invalid_argument("trajectory horizon mismatch");
    double total = 0.0;
    for (int step = 0; step < T; ++step)
        total += step_log_prob(policy, traj.states[step + 1], traj.states[step],
                               traj.step_embeddings[step], step);
    return total;
}

void accumulate_step_score(const GaussianChainPolicy& policy, const Vec& x_next, const Vec& x,
                           const Vec& embedding, int step, double coeff, Vec& grad_out) {
    const int d = policy.spec().state_dim;
    const int k = policy.spec().prompt_dim;
    const Vec mu = policy.mean(x, embedding, step);
    const double sigma = policy.sigma(step);
    const double inv_var = 1.0 / (sigma * sigma);
    const size_t base = policy.step_param_offset(step);
    const size_t in = static_cast<size_t>(d) + k;
    for (int row = 0; row < d; ++row) {
        const double resid = coeff * (x_next[row] - mu[row]) * inv_var;
        double* wg = grad_out.data() + base + static_cast<size_t>(row) * in;
        for (int j = 0; j < d; ++j) wg[j] += resid * x[j];
        for (int j = 0; j < k; ++j) wg[d + j] += resid * embedding[j];
        grad_out[base + static_cast<size_t>(d) * in + row] += resid;
    }
}

Vec log_prob_grad(const GaussianChainPolicy& policy, const Trajectory& traj) {
    const int T = policy.spec().horizon;
    if (static_cast<int>(traj.states.size()) != T + 1)
        throw std::invalid_argument("trajectory horizon mismatch");
    Vec grad(policy.param_count(), 0.0);
    for (int step = 0; step < T; ++step)
        accumulate_step_score(policy, traj.states[step + 1], traj.states[step],
                              traj.step_embeddings[step], step, 1.0, grad);
    return grad;
}

double step_kl(const GaussianChainPolicy& policy, const GaussianChainPolicy& ref, const Vec& x,
               const Vec& embedding, int step) {
    if (policy.spec().horizon != ref.spec().horizon ||
        policy.spec().state_dim != ref.spec().state_dim ||
        policy.spec().prompt_dim != ref.spec().prompt_dim)
        throw std::invalid_argument("step_kl: spec mismatch");
    if (policy.sigma(step) != ref.sigma(step))
        throw std::invalid_argument("step_kl: noise scale mismatch");
    const Vec mu = policy.mean(x, embedding, step);
    const Vec mu_ref = ref.mean(x, embedding, step);
    const double sigma = policy.sigma(step);
    double acc = 0.0;
    for (size_t i = 0; i < mu.size(); ++i) {
        const double dmu = mu[i] - mu_ref[i];
        acc += dmu * dmu;
    }
    return acc / (2.0 * sigma * sigma);
}

void accumulate_step_kl_grad(const GaussianChainPolicy& policy, const GaussianChainPolicy& ref,
                             const Vec& x, const Vec& embedding, int step, double coeff,
                             Vec& grad_out) {
    const int d = policy.spec().state_dim;
    const int k = policy.spec().prompt_dim;
    const Vec mu = policy.mean(x, embedding, step);
    const Vec mu_ref = ref.mean(x, embedding, step);
    const double sigma = policy.sigma(step);
    const double inv_var = 1.0 / (sigma * sigma);
    const size_t base = policy.step_param_offset(step);
    const size_t in = static_cast<size_t>(d) + k;
    for (int row = 0; row < d; ++row) {
        const double c = coeff * (mu[row] - mu_ref[row]) * inv_var;
        double* wg = grad_out.data() + base + static_cast<size_t>(row) * in;
        for (int j = 0; j < d; ++j) wg[j] += c * x[j];
        for (int j = 0; j < k; ++j) wg[d + j] += c * embedding[j];
        grad_out[base + static_cast<size_t>(d) * in + row] += c;
    }
}

const std::vector<int>& RewardLandscape::active_modes(int prompt_id) const {
    if (prompt_id < 0 || prompt_id >= static_cast<int>(active_modes_per_prompt.size()))
        throw std::out_of_range("prompt id has no active-mode mask");
    return active_modes_per_prompt[prompt_id];
}

void RewardLandscape::validate(int state_dim) const {
    if (!(mode_width > 0.0)) throw std::invalid_argument("mode_width must be positive");
    if (mode_centers.empty()) throw std::invalid_argument("landscape needs at least one mode");
    for (const Vec& c : mode_centers)
        if (static_cast<int>(c.size()) != state_dim)
            throw std::invalid_argument("mode center dimension mismatch");
    for (const auto& mask : active_modes_per_prompt) {
        if (mask.empty()) throw std::invalid_argument("every prompt needs an active mode");
        for (int m : mask)
            if (m < 0 || m >= static_cast<int>(mode_centers.size()))
                throw std::invalid_argument("active mode index out of range");
    }
}

double evaluate_reward(const RewardLandscape& landscape, const Vec& x0,
                       const PromptEmbedding& prompt) {
    const double inv = 1.0 / (2.0 * landscape.mode_width * landscape.mode_width);
    double best = 0.0;
    for (int m : landscape.active_modes(prompt.prompt_id)) {
        const Vec& c = landscape.mode_centers[m];
        double dist_sq = 0.0;
        for (size_t i = 0; i < c.size(); ++i) {
            const double d = x0[i] - c[i];
            dist_sq += d * d;
        }
        best = std::max(best, std::exp(-dist_sq * inv));
    }
    return best;
}

int nearest_mode(const RewardLandscape& landscape, const Vec& x0, const PromptEmbedding& prompt) {
    double best = std::numeric_limits<double>::infinity();
    int best_mode = -1;
    for (int m : landscape.active_modes(prompt.prompt_id)) {
        const Vec& c = landscape.mode_centers[m];
        double dist_sq = 0.0;
        for (size_t i = 0; i < c.size(); ++i) {
            const double d = x0[i] - c[i];
            dist_sq += d * d;
        }
        if (dist_sq < best) {
            best = dist_sq;
            best_mode = m;
        }
    }
    return best_mode;
}

PretrainResult pretrain(const GaussianChainPolicy& policy, const RewardLandscape& landscape,
                        const std::vector<PromptEmbedding>& prompts, int steps, uint64_t seed,
                        double learning_rate) {
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (prompts.empty()) throw std::invalid_argument("pretrain needs prompts");
    landscape.validate(policy.spec().state_dim);

    PretrainResult result;
    result.policy = policy;
    const int T = policy.spec().horizon;
    const int d = policy.spec().state_dim;

    if (steps > 0) {
        Rng rng(stream_key({seed, kStreamPretrain}));
        GaussianChainPolicy& p = result.policy;
        for (int iter = 0; iter < steps; ++iter) {
            const PromptEmbedding& prompt = prompts[iter % prompts.size()];
            const auto& modes = landscape.active_modes(prompt.prompt_id);
            const Vec& center = landscape.mode_centers[modes[rng.uniform_int(
                static_cast<int>(modes.size()))]];

            // Interpolation path from z ~ N(0,I) toward a sample of the mode,
            // with light per-state jitter so the regression sees noisy pairs.
            Vec z(d), target(d);
            for (int i = 0; i < d; ++i) z[i] = rng.normal();
            for (int i = 0; i < d; ++i)
                target[i] = center[i] + 0.3 * landscape.mode_width * rng.normal();

            Vec x_prev(d), x_cur(d);
            for (int i = 0; i < d; ++i) x_prev[i] = z[i];
            for (int step = 0; step < T; ++step) {
                const double a_next = 1.0 - static_cast<double>(step + 1) / T;  // weight on z
                for (int i = 0; i < d; ++i) {
                    x_cur[i] = a_next * z[i] + (1.0 - a_next) * target[i] + 0.05 * rng.normal();
                }
                // One SGD step on || mu(x_prev, c, step) - x_cur ||^2.
                const Vec mu = p.mean(x_prev, prompt.e, step);
                const size_t base = p.step_param_offset(step);
                const int k = p.spec().prompt_dim;
                const size_t in = static_cast<size_t>(d) + k;
                for (int row = 0; row < d; ++row) {
                    const double resid = learning_rate * (x_cur[row] - mu[row]);
                    double* w = p.mutable_params().data() + base + static_cast<size_t>(row) * in;
                    for (int j = 0; j < d; ++j) w[j] += resid * x_prev[j];
                    for (int j = 0; j < k; ++j) w[d + j] += resid * prompt.e[j];
                    p.mutable_params()[base + static_cast<size_t>(d) * in + row] += resid;
                }
                x_prev = x_cur;
            }
        }
    }

    // Coverage probe: 1000 rollouts spread over the prompts; every active
    // mode should attract at least 5% of its prompt's samples.
    const int probes = 1000;
    result.mode_fractions.resize(prompts.size());
    result.coverage_ok = true;
    for (size_t pi = 0; pi < prompts.size(); ++pi) {
        const auto& modes = landscape.active_modes(prompts[pi].prompt_id);
        std::vector<int> counts(modes.size(), 0);
        const int per_prompt = probes / static_cast<int>(prompts.size());
        for (int s = 0; s < per_prompt; ++s) {
            const uint64_t key = stream_key({seed, kStreamPretrain, 0xc0feULL,
                                             static_cast<uint64_t>(pi), static_cast<uint64_t>(s)});
            const Trajectory traj = sample_trajectory(result.policy, prompts[pi], key);
            const int m = nearest_mode(landscape, traj.states.back(), prompts[pi]);
            for (size_t mi = 0; mi < modes.size(); ++mi)
                if (modes[mi] == m) ++counts[mi];
        }
        result.mode_fractions[pi].resize(modes.size());
        for (size_t mi = 0; mi < modes.size(); ++mi) {
            result.mode_fractions[pi][mi] = static_cast<double>(counts[mi]) / per_prompt;
            if (steps > 0 && result.mode_fractions[pi][mi] < 0.05) result.coverage_ok = false;
        }
    }
    return result;
}

nlohmann::json GaussianChainPolicy::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["spec"] = {{"horizon", spec_.horizon},
                 {"state_dim", spec_.state_dim},
                 {"discount_gamma", spec_.discount_gamma},
                 {"prompt_dim", spec_.prompt_dim}};
    j["noise_scales"] = noise_scales_;
    j["params"] = params_;
    return j;
}

GaussianChainPolicy GaussianChainPolicy::from_json(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1)
        throw std::invalid_argument("unsupported policy format version");
    DenoisingMDPSpec spec;
    spec.horizon = j.at("spec").at("horizon").get<int>();
    spec.state_dim = j.at("spec").at("state_dim").get<int>();
    spec.discount_gamma = j.at("spec").at("discount_gamma").get<double>();
    spec.prompt_dim = j.at("spec").at("prompt_dim").get<int>();
    GaussianChainPolicy p(spec, j.at("noise_scales").get<Vec>());
    Vec params = j.at("params").get<Vec>();
    if (params.size() != p.param_count())
        throw std::invalid_argument("policy params length mismatch");
    p.mutable_params() = std::move(params);
    return p;
}

}  // namespace drift
