#include <doctest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "drift/rng.hpp"
#include "drift/theory.hpp"

using namespace drift;

namespace {

DiscreteBandit random_bandit(uint64_t seed, int m, double beta) {
    Rng rng(stream_key({seed}));
    DiscreteBandit b;
    b.beta = beta;
    b.ref_probs.resize(m);
    b.rewards.resize(m);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        b.ref_probs[i] = 0.05 + rng.uniform();
        total += b.ref_probs[i];
        b.rewards[i] = rng.uniform();
    }
    for (int i = 0; i < m; ++i) b.ref_probs[i] /= total;
    return b;
}

double tv(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return 0.5 * acc;
}

}  // namespace

TEST_CASE("two-outcome closed form is e/(1+e)") {
    DiscreteBandit b{{0.5, 0.5}, {1.0, 0.0}, 1.0};
    const auto opt = optimal_policy_closed_form(b);
    CHECK(opt.probs[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(opt.probs[0] + opt.probs[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant rewards recover the reference policy") {
    DiscreteBandit b{{0.1, 0.6, 0.3}, {0.4, 0.4, 0.4}, 0.7};
    const auto opt = optimal_policy_closed_form(b);
    CHECK(tv(opt.probs, b.ref_probs) < 1e-14);
}

TEST_CASE("huge beta recovers the reference policy") {
    DiscreteBandit b = random_bandit(3, 6, 1e9);
    const auto opt = optimal_policy_closed_form(b);
    CHECK(tv(opt.probs, b.ref_probs) < 1e-8);
}

TEST_CASE("probabilities sum to one even with extreme exponents") {
    DiscreteBandit b{{0.5, 0.5}, {1000.0, 0.0}, 1.0};
    const auto opt = optimal_policy_closed_form(b);
    double total = 0.0;
    for (double p : opt.probs) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isfinite(opt.log_partition));
}

TEST_CASE("beta must be positive") {
    DiscreteBandit b{{0.5, 0.5}, {1.0, 0.0}, 0.0};
    CHECK_THROWS_AS(optimal_policy_closed_form(b), std::invalid_argument);
}

TEST_CASE("ascent reaches the closed form on the two-outcome example") {
    DiscreteBandit b{{0.5, 0.5}, {1.0, 0.0}, 1.0};
    const auto rep = verify_optimum_by_ascent(b, 1e-6);
    CHECK(rep.converged);
    CHECK(rep.tv_distance <= 1e-6);
    CHECK(rep.objective_gap >= -1e-12);
}

TEST_CASE("ascent on constant rewards stays at the reference") {
    DiscreteBandit b{{0.25, 0.25, 0.5}, {0.3, 0.3, 0.3}, 1.0};
    const auto rep = verify_optimum_by_ascent(b, 1e-6);
    CHECK(rep.converged);
    CHECK(tv(rep.probs, b.ref_probs) <= 1e-6);
}

TEST_CASE("ascent reaches the closed form on random ten-outcome bandits") {
    for (uint64_t trial = 0; trial < 10; ++trial) {
        const DiscreteBandit b = random_bandit(100 + trial, 10, 0.5);
        const auto rep = verify_optimum_by_ascent(b, 1e-6);
        CHECK(rep.converged);
        CHECK(rep.tv_distance <= 1e-6);
    }
}

TEST_CASE("dirac sweep matches the closed-form masses") {
    DiscreteBandit b{{0.5, 0.5}, {1.0, 0.0}, 1.0};
    const auto sweep = dirac_limit_sweep(b, {1.0, 0.1, 0.01});
    CHECK(sweep.argmax_index == 0);
    CHECK(sweep.argmax_mass[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
    CHECK(sweep.argmax_mass[1] == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-12));
    CHECK(sweep.argmax_mass[2] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sweep.monotone_non_decreasing);
    // relative off-mode mass collapses
    CHECK(sweep.max_other_ratio[2] < 1e-40);
}

TEST_CASE("single-outcome support keeps mass one for every beta") {
    DiscreteBandit b{{1.0}, {0.4}, 1.0};
    const auto sweep = dirac_limit_sweep(b, {1.0, 0.1});
    CHECK(sweep.argmax_mass[0] == doctest::Approx(1.0));
    CHECK(sweep.argmax_mass[1] == doctest::Approx(1.0));
}

TEST_CASE("mass at the maximizer is monotone in 1/beta on random bandits") {
    for (uint64_t trial = 0; trial < 25; ++trial) {
        DiscreteBandit b = random_bandit(300 + trial, 8, 1.0);
        // strictly separate the maximum
        size_t arg = 0;
        for (size_t i = 1; i < b.rewards.size(); ++i)
            if (b.rewards[i] > b.rewards[arg]) arg = i;
        b.rewards[arg] += 0.05;
        const auto sweep = dirac_limit_sweep(b, {3.0, 1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001});
        CHECK(sweep.monotone_non_decreasing);
    }
}

TEST_CASE("tied maximizers are rejected") {
    DiscreteBandit b{{0.5, 0.25, 0.25}, {1.0, 1.0, 0.0}, 1.0};
    CHECK_THROWS_AS(dirac_limit_sweep(b, {1.0, 0.1}), std::invalid_argument);
}

TEST_CASE("pushback vanishes at the reference policy") {
    const DiscreteBandit b = random_bandit(7, 6, 0.8);
    const auto dec = gradient_decomposition(b, b.ref_probs);
    for (double v : dec.diversity_pushback) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("beta zero leaves only the reward pull") {
    DiscreteBandit b = random_bandit(8, 5, 1.0);
    b.beta = 1e-300;  // validate() demands beta > 0; the term scales linearly in beta
    const auto dec = gradient_decomposition(b, b.ref_probs);
    for (size_t i = 0; i < dec.total.size(); ++i)
        CHECK(dec.total[i] == doctest::Approx(dec.reward_pull[i]).epsilon(1e-12));
}

TEST_CASE("decomposition sums to the finite-difference gradient") {
    for (uint64_t trial = 0; trial < 20; ++trial) {
        const DiscreteBandit b = random_bandit(500 + trial, 5, 0.9);
        Rng rng(stream_key({600 + trial}));
        std::vector<double> z(5);
        for (double& zi : z) zi = rng.normal();
        double lse = 0.0;
        {
            double m = z[0];
            for (double zi : z) m = std::max(m, zi);
            double acc = 0.0;
            for (double zi : z) acc += std::exp(zi - m);
            lse = m + std::log(acc);
        }
        std::vector<double> probs(5);
        for (size_t i = 0; i < 5; ++i) probs[i] = std::exp(z[i] - lse);

        const auto dec = gradient_decomposition(b, probs);
        const double h = 1e-6;
        for (size_t i = 0; i < 5; ++i) {
            auto perturbed = [&](double delta) {
                std::vector<double> zp = z;
                zp[i] += delta;
                double m = zp[0];
                for (double zi : zp) m = std::max(m, zi);
                double acc = 0.0;
                for (double zi : zp) acc += std::exp(zi - m);
                const double l = m + std::log(acc);
                std::vector<double> pp(5);
                for (size_t k = 0; k < 5; ++k) pp[k] = std::exp(zp[k] - l);
                return bandit_objective(b, pp);
            };
            const double fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
            CHECK(fd == doctest::Approx(dec.total[i]).epsilon(2e-5));
        }
    }
}

TEST_CASE("zero-probability policies are rejected") {
    const DiscreteBandit b = random_bandit(9, 4, 1.0);
    CHECK_THROWS_AS(gradient_decomposition(b, {0.0, 0.5, 0.25, 0.25}), std::invalid_argument);
}

TEST_CASE("theory suite passes end to end") {
    const TheorySuiteReport report = run_theory_suite(7);
    for (const auto& c : report.checks) {
        INFO(c.name, " residual=", c.residual, " tol=", c.tolerance);
        CHECK(c.passed);
    }
    CHECK(report.all_passed);
    CHECK(report.details().at("all_passed").get<bool>());
}
