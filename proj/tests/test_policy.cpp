#include <doctest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "drift/policy.hpp"

using namespace drift;

namespace {

GaussianChainPolicy random_policy(const DenoisingMDPSpec& spec, double sigma, uint64_t seed,
                                  double scale = 0.3) {
    GaussianChainPolicy p = GaussianChainPolicy::zero_init(spec, sigma);
    Rng rng(stream_key({seed, 0xfeedULL}));
    for (double& w : p.mutable_params()) w = scale * rng.normal();
    return p;
}

PromptEmbedding make_prompt(int id, int dim) {
    PromptEmbedding p;
    p.prompt_id = id;
    p.e.assign(dim, 0.0);
    p.e[id % dim] = 1.0;
    return p;
}

}  // namespace

TEST_CASE("same policy, prompt and seed replay bit-identically") {
    DenoisingMDPSpec spec{6, 2, 1.0, 3};
    const auto policy = random_policy(spec, 0.7, 1);
    const auto prompt = make_prompt(0, 3);
    const Trajectory a = sample_trajectory(policy, prompt, 1234);
    const Trajectory b = sample_trajectory(policy, prompt, 1234);
    REQUIRE(a.states.size() == b.states.size());
    for (size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i] == b.states[i]);
    CHECK(a.step_logps == b.step_logps);
}

TEST_CASE("trajectory shape and finite log-densities") {
    DenoisingMDPSpec spec{10, 2, 1.0, 4};
    const auto policy = random_policy(spec, 0.7, 2);
    const auto prompt = make_prompt(1, 4);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const Trajectory traj = sample_trajectory(policy, prompt, stream_key({seed}));
        REQUIRE(traj.states.size() == 11);
        REQUIRE(traj.step_logps.size() == 10);
        for (double lp : traj.step_logps) CHECK(std::isfinite(lp));
    }
}

TEST_CASE("vanishing noise reduces to the deterministic mean iteration") {
    DenoisingMDPSpec spec{5, 2, 1.0, 3};
    auto policy = random_policy(spec, 1e-8, 3);
    const auto prompt = make_prompt(0, 3);
    const Trajectory traj = sample_trajectory(policy, prompt, 99);
    Vec x = traj.states[0];
    for (int step = 0; step < 5; ++step) {
        x = policy.mean(x, prompt.e, step);
        for (int i = 0; i < 2; ++i)
            CHECK(std::abs(traj.states[step + 1][i] - x[i]) < 1e-6);
        x = traj.states[step + 1];
    }
}

TEST_CASE("zero-parameter unit-noise chain has unit terminal variance") {
    DenoisingMDPSpec spec{2, 1, 1.0, 2};
    const auto policy = GaussianChainPolicy::zero_init(spec, 1.0);
    const auto prompt = make_prompt(0, 2);
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < n; ++s) {
        const Trajectory traj = sample_trajectory(policy, prompt, stream_key({7, (uint64_t)s}));
        const double x0 = traj.states.back()[0];
        sum += x0;
        sum_sq += x0 * x0;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("log-prob gradient matches central finite differences") {
    DenoisingMDPSpec spec{4, 2, 1.0, 3};
    const auto prompt = make_prompt(0, 3);
    double worst = 0.0;
    for (uint64_t trial = 0; trial < 100; ++trial) {
        auto policy = random_policy(spec, 0.5 + 0.01 * (trial % 7), 100 + trial);
        const Trajectory traj =
            sample_trajectory(policy, prompt, stream_key({200, trial}));

        const Vec grad = log_prob_grad(policy, traj);
        const double h = 1e-5;
        double err = 0.0, scale = 0.0;
        for (size_t i = 0; i < policy.param_count(); ++i) {
            const double saved = policy.params()[i];
            policy.mutable_params()[i] = saved + h;
            const double up = trajectory_log_prob(policy, traj);
            policy.mutable_params()[i] = saved - h;
            const double down = trajectory_log_prob(policy, traj);
            policy.mutable_params()[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            err = std::max(err, std::abs(fd - grad[i]));
            scale = std::max(scale, std::abs(grad[i]));
        }
        worst = std::max(worst, err / std::max(scale, 1e-12));
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("gradient vanishes for a trajectory realized exactly at the mean") {
    DenoisingMDPSpec spec{3, 2, 1.0, 2};
    const auto policy = random_policy(spec, 0.7, 5);
    const auto prompt = make_prompt(0, 2);
    Trajectory traj;
    traj.prompt = prompt;
    Vec x = {0.4, -0.2};
    traj.states.push_back(x);
    for (int step = 0; step < 3; ++step) {
        x = policy.mean(x, prompt.e, step);
        traj.states.push_back(x);
        traj.step_embeddings.push_back(prompt.e);
        traj.step_logps.push_back(0.0);  // unused by the gradient
    }
    const Vec grad = log_prob_grad(policy, traj);
    for (double g : grad) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("doubling sigma scales a step's score contribution by a quarter") {
    DenoisingMDPSpec spec{1, 2, 1.0, 2};
    const auto prompt = make_prompt(0, 2);
    GaussianChainPolicy base = random_policy(spec, 0.5, 6);
    GaussianChainPolicy wide(spec, {1.0});
    wide.mutable_params() = base.params();

    Trajectory traj;
    traj.prompt = prompt;
    traj.states = {{0.3, 0.8}, {1.0, -0.4}};
    traj.step_embeddings = {prompt.e};
    traj.step_logps = {0.0};

    const Vec g_base = log_prob_grad(base, traj);
    const Vec g_wide = log_prob_grad(wide, traj);
    for (size_t i = 0; i < g_base.size(); ++i)
        CHECK(g_wide[i] == doctest::Approx(0.25 * g_base[i]).epsilon(1e-12));
}

TEST_CASE("step KL closed form") {
    DenoisingMDPSpec spec{2, 2, 1.0, 2};
    const auto prompt = make_prompt(0, 2);
    const Vec x{0.0, 0.0};

    GaussianChainPolicy ref = GaussianChainPolicy::zero_init(spec, 1.0);
    GaussianChainPolicy pol = ref;
    // shift the bias of step 0 by (1, 0): mean difference (1, 0)
    const size_t bias0 = 0 * pol.step_param_size() + 2 * (2 + 2);
    pol.mutable_params()[bias0] = 1.0;

    CHECK(step_kl(ref, ref, x, prompt.e, 0) == doctest::Approx(0.0));
    CHECK(step_kl(pol, ref, x, prompt.e, 0) == doctest::Approx(0.5).epsilon(1e-12));

    GaussianChainPolicy ref_tight = GaussianChainPolicy::zero_init(spec, 0.5);
    GaussianChainPolicy pol_tight = ref_tight;
    pol_tight.mutable_params()[bias0] = 1.0;
    CHECK(step_kl(pol_tight, ref_tight, x, prompt.e, 0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("step KL is non-negative on random inputs") {
    DenoisingMDPSpec spec{4, 2, 1.0, 3};
    const auto prompt = make_prompt(1, 3);
    const auto a = random_policy(spec, 0.7, 7);
    const auto b = random_policy(spec, 0.7, 8);
    Rng rng(stream_key({555}));
    for (int i = 0; i < 50; ++i) {
        Vec x{rng.normal(), rng.normal()};
        const int step = rng.uniform_int(4);
        CHECK(step_kl(a, b, x, prompt.e, step) >= 0.0);
        CHECK(step_kl(a, a, x, prompt.e, step) == 0.0);
    }
}

TEST_CASE("step KL rejects mismatched noise scales") {
    DenoisingMDPSpec spec{2, 2, 1.0, 2};
    const auto a = GaussianChainPolicy::zero_init(spec, 0.7);
    const auto b = GaussianChainPolicy::zero_init(spec, 0.5);
    CHECK_THROWS_AS(step_kl(a, b, Vec{0.0, 0.0}, Vec{0.0, 0.0}, 0), std::invalid_argument);
}

TEST_CASE("reward landscape peak, tail and midpoint values") {
    RewardLandscape landscape;
    landscape.mode_centers = {{0.0, 0.0}, {4.0, 0.0}};
    landscape.mode_width = 1.0;
    landscape.active_modes_per_prompt = {{0, 1}};
    const auto prompt = make_prompt(0, 2);

    CHECK(evaluate_reward(landscape, {0.0, 0.0}, prompt) == doctest::Approx(1.0));
    CHECK(evaluate_reward(landscape, {14.0, 0.0}, prompt) <= 1e-6);
    // equidistant between the peaks at distance 2 each
    CHECK(evaluate_reward(landscape, {2.0, 0.0}, prompt) ==
          doctest::Approx(std::exp(-4.0 / 2.0)).epsilon(1e-12));
}

TEST_CASE("reward only sees the prompt's active modes") {
    RewardLandscape landscape;
    landscape.mode_centers = {{0.0, 0.0}, {4.0, 0.0}};
    landscape.mode_width = 1.0;
    landscape.active_modes_per_prompt = {{0}, {1}};
    CHECK(evaluate_reward(landscape, {4.0, 0.0}, make_prompt(0, 2)) ==
          doctest::Approx(std::exp(-16.0 / 2.0)));
    CHECK(evaluate_reward(landscape, {4.0, 0.0}, make_prompt(1, 2)) == doctest::Approx(1.0));
}

TEST_CASE("pretrain with zero steps returns the policy unchanged") {
    DenoisingMDPSpec spec{5, 2, 1.0, 2};
    const auto policy = random_policy(spec, 0.7, 9);
    RewardLandscape landscape;
    landscape.mode_centers = {{0.0, 0.0}};
    landscape.mode_width = 1.0;
    landscape.active_modes_per_prompt = {{0}};
    const auto res = pretrain(policy, landscape, {make_prompt(0, 2)}, 0, 42);
    CHECK(res.policy.params() == policy.params());
}

TEST_CASE("pretrain covers four symmetric modes") {
    DenoisingMDPSpec spec{10, 2, 1.0, 4};
    const auto init = GaussianChainPolicy::zero_init(spec, 0.7);
    RewardLandscape landscape;
    landscape.mode_centers = {{2.0, 2.0}, {-2.0, 2.0}, {-2.0, -2.0}, {2.0, -2.0}};
    landscape.mode_width = 2.5;
    landscape.active_modes_per_prompt = {{0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3}};
    std::vector<PromptEmbedding> prompts;
    for (int i = 0; i < 4; ++i) prompts.push_back(make_prompt(i, 4));

    const auto res = pretrain(init, landscape, prompts, 4000, 42);
    CHECK(res.coverage_ok);
    for (const auto& fractions : res.mode_fractions)
        for (double f : fractions) CHECK(f >= 0.05);
}

TEST_CASE("pretrain on a single origin mode centers the samples") {
    DenoisingMDPSpec spec{10, 2, 1.0, 2};
    const auto init = GaussianChainPolicy::zero_init(spec, 0.7);
    RewardLandscape landscape;
    landscape.mode_centers = {{0.0, 0.0}};
    landscape.mode_width = 1.0;
    landscape.active_modes_per_prompt = {{0}};
    const auto prompt = make_prompt(0, 2);
    const auto res = pretrain(init, landscape, {prompt}, 4000, 42);

    Vec mean(2, 0.0);
    const int n = 2000;
    for (int s = 0; s < n; ++s) {
        const Trajectory traj = sample_trajectory(res.policy, prompt, stream_key({888, (uint64_t)s}));
        mean[0] += traj.states.back()[0];
        mean[1] += traj.states.back()[1];
    }
    CHECK(std::abs(mean[0] / n) < 0.2);
    CHECK(std::abs(mean[1] / n) < 0.2);
}

TEST_CASE("policy json round trip") {
    DenoisingMDPSpec spec{4, 2, 0.99, 3};
    const auto policy = random_policy(spec, 0.6, 10);
    const auto back = GaussianChainPolicy::from_json(policy.to_json());
    CHECK(back.params() == policy.params());
    CHECK(back.noise_scales() == policy.noise_scales());
    CHECK(back.spec().horizon == spec.horizon);
    CHECK(back.spec().discount_gamma == spec.discount_gamma);
}

TEST_CASE("terminal reward depends only on the terminal state and prompt") {
    RewardLandscape landscape;
    landscape.mode_centers = {{1.0, 1.0}};
    landscape.mode_width = 1.0;
    landscape.active_modes_per_prompt = {{0}};
    const auto prompt = make_prompt(0, 2);
    DenoisingMDPSpec spec{6, 2, 1.0, 2};
    const auto policy = random_policy(spec, 0.7, 11);
    const Trajectory a = sample_trajectory(policy, prompt, 1);
    const Trajectory b = sample_trajectory(policy, prompt, 2);
    const double ra = evaluate_reward(landscape, a.states.back(), prompt);
    // replaying only the terminal state reproduces the reward
    Trajectory stub = b;
    stub.states.back() = a.states.back();
    CHECK(evaluate_reward(landscape, stub.states.back(), prompt) == ra);
}
