#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "drift/rng.hpp"

#include <nlohmann/json_fwd.hpp>

namespace drift {

/// Shape of the sequential denoising process: T reverse steps over states in
/// R^d conditioned on a prompt embedding in R^k. discount_gamma is the MDP
/// discount applied to the shaping potential, not the prompt-noise annealing
/// schedule (that one lives in DriftConfig).
struct DenoisingMDPSpec {
    int horizon = 10;
    int state_dim = 2;
    double discount_gamma = 1.0;
    int prompt_dim = 4;

    void validate() const;
};

/// Finite MDP with dense tensors. transition and reward are indexed
/// [s][a][s'] flattened row-major; every transition row sums to 1.
struct TabularMDP {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> transition;  // num_states * num_actions * num_states
    std::vector<double> reward;      // same layout
    double discount_gamma = 0.9;
    std::vector<uint8_t> terminal_mask;  // optional; empty means none

    double p(int s, int a, int s2) const {
        return transition[(static_cast<size_t>(s) * num_actions + a) * num_states + s2];
    }
    double r(int s, int a, int s2) const {
        return reward[(static_cast<size_t>(s) * num_actions + a) * num_states + s2];
    }

    // Row-stochasticity within 1e-12, finite rewards, sane sizes.
    void validate() const;

    nlohmann::json to_json() const;
    static TabularMDP from_json(const nlohmann::json& j);
};

/// State potential d(s) used for shaping. Terminal states carry a potential
/// like any other state; the shaping term gamma*d(s') - d(s) is applied
/// uniformly, which is sound when terminal states self-loop with zero reward.
struct PotentialFunction {
    std::vector<double> values;
};

struct ValueIterationResult {
    std::vector<double> values;                    // V*(s)
    std::vector<std::vector<int>> optimal_actions; // per state, every action within tie_epsilon of max Q
    int iterations = 0;
    double residual = 0.0;
};

struct ValueIterationError : std::runtime_error {
    double final_residual;
    ValueIterationError(const std::string& what, double res)
        : std::runtime_error(what), final_residual(res) {}
};

constexpr double kTieEpsilon = 1e-9;
constexpr int kMaxValueIterations = 100000;

/// Solves the Bellman optimality equation to sup-norm residual <= tol.
/// Throws ValueIterationError (carrying the final residual) past
/// max_iterations.
ValueIterationResult value_iteration(const TabularMDP& mdp, double tol,
                                     int max_iterations = kMaxValueIterations,
                                     double tie_epsilon = kTieEpsilon);

/// Q(s,a) = sum_s' P(s,a,s') * (R(s,a,s') + gamma * V(s')), flattened [s][a].
std::vector<double> q_values(const TabularMDP& mdp, const std::vector<double>& values);

/// Potential-based shaping: R~(s,a,s') = R(s,a,s') + lambda*(gamma*d(s') - d(s)).
/// Transition tensor is copied bit-identically.
TabularMDP shape_mdp(const TabularMDP& mdp, const PotentialFunction& potential, double lambda);

/// Certificate that shaping preserved the optimal-action sets, plus the
/// measured residual of the identity Q~*(s,a) = Q*(s,a) - lambda*d(s).
struct InvarianceReport {
    bool optimal_sets_equal = false;
    double q_residual = 0.0;
    std::vector<std::vector<int>> optimal_actions_base;
    std::vector<std::vector<int>> optimal_actions_shaped;
    int iterations_base = 0;
    int iterations_shaped = 0;

    nlohmann::json to_json() const;
};

InvarianceReport certify_invariance(const TabularMDP& mdp, const PotentialFunction& potential,
                                    double lambda, double tol);

/// Random instance: transition rows from a flat Dirichlet, rewards U[-1,1].
TabularMDP random_mdp(int num_states, int num_actions, double discount_gamma, Rng& rng);

PotentialFunction random_potential(int num_states, Rng& rng, double scale = 1.0);

}  // namespace drift
