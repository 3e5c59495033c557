#include "drift/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace drift {

void DenoisingMDPSpec::validate() const {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (state_dim < 1) throw std::invalid_argument("state_dim must be >= 1");
    if (prompt_dim < 1) throw std::invalid_argument("prompt_dim must be >= 1");
    if (!(discount_gamma > 0.0 && discount_gamma <= 1.0))
        throw std::invalid_argument("discount_gamma must be in (0, 1]");
}

void TabularMDP::validate() const {
    if (num_states < 1 || num_actions < 1)
        throw std::invalid_argument("TabularMDP needs at least one state and action");
    if (!(discount_gamma > 0.0 && discount_gamma < 1.0))
        throw std::invalid_argument("TabularMDP discount_gamma must be in (0, 1)");
    const size_t n = static_cast<size_t>(num_states) * num_actions * num_states;
    if (transition.size() != n || reward.size() != n)
        throw std::invalid_argument("TabularMDP tensor size mismatch");
    if (!terminal_mask.empty() && terminal_mask.size() != static_cast<size_t>(num_states))
        throw std::invalid_argument("terminal_mask size mismatch");
    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            double row_sum = 0.0;
            for (int s2 = 0; s2 < num_states; ++s2) {
                double pv = p(s, a, s2);
                if (pv < 0.0) throw std::invalid_argument("negative transition probability");
                if (!std::isfinite(r(s, a, s2))) throw std::invalid_argument("non-finite reward");
                row_sum += pv;
            }
            if (std::abs(row_sum - 1.0) > 1e-12)
                throw std::invalid_argument("transition row does not sum to 1");
        }
    }
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double tol, int max_iterations,
                                     double tie_epsilon) {
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    mdp.validate();

    const int S = mdp.num_states;
    const int A = mdp.num_actions;
    std::vector<double> v(S, 0.0), v_next(S, 0.0);

    double residual = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        residual = 0.0;
        for (int s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a) {
                double q = 0.0;
                for (int s2 = 0; s2 < S; ++s2)
                    q += mdp.p(s, a, s2) * (mdp.r(s, a, s2) + mdp.discount_gamma * v[s2]);
                best = std::max(best, q);
            }
            v_next[s] = best;
            residual = std::max(residual, std::abs(v_next[s] - v[s]));
        }
        v.swap(v_next);
        if (residual <= tol) break;
    }
    if (residual > tol)
        throw ValueIterationError("value iteration did not converge", residual);

    ValueIterationResult res;
    res.values = v;
    res.iterations = iter + 1;
    res.residual = residual;
    res.optimal_actions.resize(S);
    const std::vector<double> q = q_values(mdp, v);
    for (int s = 0; s < S; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) best = std::max(best, q[static_cast<size_t>(s) * A + a]);
        for (int a = 0; a < A; ++a)
            if (q[static_cast<size_t>(s) * A + a] >= best - tie_epsilon)
                res.optimal_actions[s].push_back(a);
    }
    return res;
}

std::vector<double> q_values(const TabularMDP& mdp, const std::vector<double>& values) {
    const int S = mdp.num_states;
    const int A = mdp.num_actions;
    std::vector<double> q(static_cast<size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            double acc = 0.0;
            for (int s2 = 0; s2 < S; ++s2)
                acc += mdp.p(s, a, s2) * (mdp.r(s, a, s2) + mdp.discount_gamma * values[s2]);
            q[static_cast<size_t>(s) * A + a] = acc;
        }
    return q;
}

TabularMDP shape_mdp(const TabularMDP& mdp, const PotentialFunction& potential, double lambda) {
    if (potential.values.size() != static_cast<size_t>(mdp.num_states))
        throw std::invalid_argument("potential dimension must equal num_states");
    TabularMDP shaped = mdp;
    const int S = mdp.num_states;
    const int A = mdp.num_actions;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            for (int s2 = 0; s2 < S; ++s2) {
                const size_t idx = (static_cast<size_t>(s) * A + a) * S + s2;
                shaped.reward[idx] +=
                    lambda * (mdp.discount_gamma * potential.values[s2] - potential.values[s]);
            }
    return shaped;
}

namespace {

bool sets_equal(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b) {
    if (a.size() != b.size()) return false;
    for (size_t s = 0; s < a.size(); ++s)
        if (a[s] != b[s]) return false;  // emitted sorted ascending by construction
    return true;
}

}  // namespace

InvarianceReport certify_invariance(const TabularMDP& mdp, const PotentialFunction& potential,
                                    double lambda, double tol) {
    const TabularMDP shaped = shape_mdp(mdp, potential, lambda);

    const ValueIterationResult base = value_iteration(mdp, tol);
    const ValueIterationResult tr = value_iteration(shaped, tol);

    const std::vector<double> q_base = q_values(mdp, base.values);
    const std::vector<double> q_shaped = q_values(shaped, tr.values);

    InvarianceReport report;
    report.optimal_actions_base = base.optimal_actions;
    report.optimal_actions_shaped = tr.optimal_actions;
    report.optimal_sets_equal = sets_equal(base.optimal_actions, tr.optimal_actions);
    report.iterations_base = base.iterations;
    report.iterations_shaped = tr.iterations;

    // Q~*(s,a) - (Q*(s,a) - lambda*d(s)) should vanish.
    double res = 0.0;
    const int A = mdp.num_actions;
    for (int s = 0; s < mdp.num_states; ++s)
        for (int a = 0; a < A; ++a) {
            const size_t i = static_cast<size_t>(s) * A + a;
            res = std::max(res, std::abs(q_shaped[i] - (q_base[i] - lambda * potential.values[s])));
        }
    report.q_residual = res;
    return report;
}

TabularMDP random_mdp(int num_states, int num_actions, double discount_gamma, Rng& rng) {
    TabularMDP mdp;
    mdp.num_states = num_states;
    mdp.num_actions = num_actions;
    mdp.discount_gamma = discount_gamma;
    const size_t n = static_cast<size_t>(num_states) * num_actions * num_states;
    mdp.transition.resize(n);
    mdp.reward.resize(n);
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) {
            // Flat Dirichlet row via normalized Exp(1) draws.
            double total = 0.0;
            const size_t base = (static_cast<size_t>(s) * num_actions + a) * num_states;
            for (int s2 = 0; s2 < num_states; ++s2) {
                double u = rng.uniform();
                while (u <= 0.0) u = rng.uniform();
                mdp.transition[base + s2] = -std::log(u);
                total += mdp.transition[base + s2];
            }
            for (int s2 = 0; s2 < num_states; ++s2) {
                mdp.transition[base + s2] /= total;
                mdp.reward[base + s2] = 2.0 * rng.uniform() - 1.0;
            }
        }
    return mdp;
}

PotentialFunction random_potential(int num_states, Rng& rng, double scale) {
    PotentialFunction d;
    d.values.resize(num_states);
    for (int s = 0; s < num_states; ++s) d.values[s] = scale * (2.0 * rng.uniform() - 1.0);
    return d;
}

nlohmann::json TabularMDP::to_json() const {
    nlohmann::json j;
    j["num_states"] = num_states;
    j["num_actions"] = num_actions;
    j["discount_gamma"] = discount_gamma;
    auto tensor = [&](const std::vector<double>& flat) {
        nlohmann::json out = nlohmann::json::array();
        for (int s = 0; s < num_states; ++s) {
            nlohmann::json row_s = nlohmann::json::array();
            for (int a = 0; a < num_actions; ++a) {
                nlohmann::json row_a = nlohmann::json::array();
                for (int s2 = 0; s2 < num_states; ++s2)
                    row_a.push_back(flat[(static_cast<size_t>(s) * num_actions + a) * num_states + s2]);
                row_s.push_back(std::move(row_a));
            }
            out.push_back(std::move(row_s));
        }
        return out;
    };
    j["transition"] = tensor(transition);
    j["reward"] = tensor(reward);
    if (!terminal_mask.empty()) {
        nlohmann::json mask = nlohmann::json::array();
        for (uint8_t m : terminal_mask) mask.push_back(static_cast<bool>(m));
        j["terminal_mask"] = std::move(mask);
    }
    return j;
}

TabularMDP TabularMDP::from_json(const nlohmann::json& j) {
    TabularMDP mdp;
    mdp.num_states = j.at("num_states").get<int>();
    mdp.num_actions = j.at("num_actions").get<int>();
    mdp.discount_gamma = j.at("discount_gamma").get<double>();
    const size_t n = static_cast<size_t>(mdp.num_states) * mdp.num_actions * mdp.num_states;
    mdp.transition.resize(n);
    mdp.reward.resize(n);
    auto fill = [&](std::vector<double>& flat, const nlohmann::json& nested) {
        for (int s = 0; s < mdp.num_states; ++s)
            for (int a = 0; a < mdp.num_actions; ++a)
                for (int s2 = 0; s2 < mdp.num_states; ++s2)
                    flat[(static_cast<size_t>(s) * mdp.num_actions + a) * mdp.num_states + s2] =
                        nested.at(s).at(a).at(s2).get<double>();
    };
    fill(mdp.transition, j.at("transition"));
    fill(mdp.reward, j.at("reward"));
    if (j.contains("terminal_mask")) {
        for (const auto& m : j.at("terminal_mask"))
            mdp.terminal_mask.push_back(m.get<bool>() ? 1 : 0);
    }
    mdp.validate();
    return mdp;
}

nlohmann::json InvarianceReport::to_json() const {
    nlohmann::json j;
    j["optimal_sets_equal"] = optimal_sets_equal;
    j["q_residual"] = q_residual;
    j["optimal_actions_base"] = optimal_actions_base;
    j["optimal_actions_shaped"] = optimal_actions_shaped;
    j["iterations_base"] = iterations_base;
    j["iterations_shaped"] = iterations_shaped;
    return j;
}

}  // namespace drift
