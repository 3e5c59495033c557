#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace drift {

/// Discrete single-prompt analog of the KL-constrained reward maximization
/// problem: m outcomes, a strictly positive reference distribution, rewards,
/// and the regularization strength beta.
struct DiscreteBandit {
    std::vector<double> ref_probs;
    std::vector<double> rewards;
    double beta = 1.0;

    void validate() const;
};

struct ClosedFormOptimum {
    std::vector<double> probs;
    double log_partition = 0.0;
};

/// pi*(x) = ref(x) * exp(r(x)/beta) / Z, evaluated with log-sum-exp.
ClosedFormOptimum optimal_policy_closed_form(const DiscreteBandit& bandit);

/// E_pi[r] - beta * KL(pi || ref).
double bandit_objective(const DiscreteBandit& bandit, const std::vector<double>& probs);

struct AscentReport {
    std::vector<double> probs;
    int iterations = 0;
    double tv_distance = 0.0;
    double objective_gap = 0.0;
    bool converged = false;
};

/// Exact-gradient ascent on softmax logits, compared against the closed form
/// in total variation. Throws on non-convergence past the iteration budget.
AscentReport verify_optimum_by_ascent(const DiscreteBandit& bandit, double tol = 1e-6,
                                      int max_iterations = 200000);

struct DiracSweep {
    std::vector<double> betas;
    std::vector<double> argmax_mass;       // pi*_beta at the reward maximizer
    std::vector<double> max_other_ratio;   // max over x != x* of pi*(x)/pi*(x*)
    int argmax_index = -1;
    bool monotone_non_decreasing = false;
};

/// Mass at the unique reward maximizer along a decreasing beta sequence.
/// Tied maximizers are rejected.
DiracSweep dirac_limit_sweep(const DiscreteBandit& bandit, const std::vector<double>& betas);

struct GradientDecomposition {
    std::vector<double> reward_pull;
    std::vector<double> diversity_pushback;
    std::vector<double> total;  // reward_pull - diversity_pushback, elementwise
};

/// Exact policy gradient of the objective under softmax logits at the given
/// policy, split into the reward term and the beta-weighted log-ratio term.
GradientDecomposition gradient_decomposition(const DiscreteBandit& bandit,
                                             const std::vector<double>& policy_probs);

/// Runs every theory check on seeded random instances and reports measured
/// residuals. all_passed gates the CLI's verification exit code.
struct TheorySuiteReport {
    bool all_passed = false;
    nlohmann::json details() const;

    struct Check {
        std::string name;
        bool passed = false;
        double residual = 0.0;
        double tolerance = 0.0;
    };
    std::vector<Check> checks;
};

TheorySuiteReport run_theory_suite(uint64_t seed);

}  // namespace drift
