#pragma once

#include <cstdint>
#include <vector>

#include "fimeq/model.hpp"

namespace fimeq {

/// Finite MDP on window states with the predictor frozen at a reference
/// prior pi*. From window I under action u the chain moves to the window
/// obtained by shifting in (y, u) with probability P^{pi*}(Y_{t+1}=y | I, u),
/// so each (state, action) has exactly |Y| candidate successors.
class FiniteMdp {
public:
    FiniteMdp(int window_length, int num_observations, int num_actions, double discount);

    int window_length() const { return window_length_; }
    std::int64_t num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }
    int num_observations() const { return num_obs_; }
    double discount() const { return discount_; }

    double cost(std::int64_t s, int u) const { return cost_[index(s, u)]; }
    bool reachable(std::int64_t s) const { return reachable_[s] != 0; }

    /// Successor window and probability for observation y after (s, u).
    std::int64_t successor(std::int64_t s, int u, int y) const { return succ_[index(s, u) * num_obs_ + y]; }
    double successor_probability(std::int64_t s, int u, int y) const { return prob_[index(s, u) * num_obs_ + y]; }

    /// Dense lookup P*(s' | s, u).
    double probability(std::int64_t s, int u, std::int64_t next) const;

    std::int64_t num_reachable() const;

private:
    friend FiniteMdp build_approx_mdp(const PomdpModel&, const Belief&, int);

    std::size_t index(std::int64_t s, int u) const { return static_cast<std::size_t>(s) * num_actions_ + u; }

    int window_length_;
    std::int64_t num_states_;
    int num_actions_;
    int num_obs_;
    double discount_;
    std::vector<double> cost_;
    std::vector<std::int64_t> succ_;
    std::vector<double> prob_;
    std::vector<char> reachable_;
};

inline constexpr std::int64_t kMaxWindowStates = 10'000'000;

/// Builds the approximate belief-MDP for window length N. Windows that are
/// impossible under pi* are marked unreachable and carry zero cost and no
/// transitions. Throws ValidationError unless pi* has full support and
/// GuardViolation above kMaxWindowStates states.
FiniteMdp build_approx_mdp(const PomdpModel& model, const Belief& pi_star, int window_length);

struct QTable {
    std::int64_t num_states = 0;
    int num_actions = 0;
    std::vector<double> values;
    std::vector<std::int64_t> visits;

    QTable() = default;
    QTable(std::int64_t states, int actions)
        : num_states(states),
          num_actions(actions),
          values(static_cast<std::size_t>(states) * actions, 0.0),
          visits(static_cast<std::size_t>(states) * actions, 0) {}

    double& q(std::int64_t s, int u) { return values[static_cast<std::size_t>(s) * num_actions + u]; }
    double q(std::int64_t s, int u) const { return values[static_cast<std::size_t>(s) * num_actions + u]; }
    std::int64_t& count(std::int64_t s, int u) { return visits[static_cast<std::size_t>(s) * num_actions + u]; }
    std::int64_t count(std::int64_t s, int u) const { return visits[static_cast<std::size_t>(s) * num_actions + u]; }

    /// min_u Q(s, u)
    double value(std::int64_t s) const;
    /// Lowest-index minimizer.
    int argmin(std::int64_t s) const;
    std::int64_t state_visits(std::int64_t s) const;
};

struct ValueIterationResult {
    QTable q;
    std::vector<double> value;  // J^N_beta, zero on unreachable windows
    WindowPolicy policy;        // greedy, ties to the lowest action
    int iterations = 0;
    /// ||V_{k+1} - V_k||_inf over reachable windows, one per sweep.
    std::vector<double> sweep_differences;
};

/// Value iteration from V = 0. Stops once the sup-norm change drops below
/// tol (1 - beta) / (2 beta), which puts the returned value within tol of the
/// fixed point.
ValueIterationResult value_iteration(const FiniteMdp& mdp, double tol);

/// sup over reachable (s, u) of |Q(s,u) - C(s,u) - beta sum_s' P(s'|s,u) min_v Q(s',v)|.
double fixed_point_residual(const FiniteMdp& mdp, const QTable& q);

/// JSON keyed by decoded window tuples, e.g. "y=[1,0] u=[1]".
std::string window_key(const WindowState& w);
nlohmann::json qtable_to_json(const QTable& q, int window_length, const PomdpModel& model,
                              const std::vector<double>* reference_value = nullptr);
nlohmann::json policy_to_json(const WindowPolicy& policy, const PomdpModel& model);

}  // namespace fimeq
