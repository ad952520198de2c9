#include "fimeq/approx_mdp.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>

#include "fimeq/ergodicity.hpp"
#include "fimeq/filter.hpp"

namespace fimeq {

FiniteMdp::FiniteMdp(int window_length, int num_observations, int num_actions, double discount)
    : window_length_(window_length), num_actions_(num_actions), num_obs_(num_observations), discount_(discount) {
    const WindowCodec codec(window_length, num_observations, num_actions);
    num_states_ = codec.size();
    if (num_states_ > kMaxWindowStates) {
        throw GuardViolation(fmt::format("window MDP would have {} states (limit {})", num_states_, kMaxWindowStates));
    }
    const auto pairs = static_cast<std::size_t>(num_states_) * num_actions_;
    cost_.assign(pairs, 0.0);
    succ_.assign(pairs * num_obs_, 0);
    prob_.assign(pairs * num_obs_, 0.0);
    reachable_.assign(static_cast<std::size_t>(num_states_), 0);
}

double FiniteMdp::probability(std::int64_t s, int u, std::int64_t next) const {
    double p = 0.0;
    for (int y = 0; y < num_obs_; ++y)
        if (successor(s, u, y) == next) p += successor_probability(s, u, y);
    return p;
}

std::int64_t FiniteMdp::num_reachable() const {
    return std::count(reachable_.begin(), reachable_.end(), char{1});
}

FiniteMdp build_approx_mdp(const PomdpModel& model, const Belief& pi_star, int window_length) {
    if (!positivity_check(pi_star)) {
        throw ValidationError("approximate MDP requires a reference prior with full support");
    }
    FiniteMdp mdp(window_length, model.num_observations(), model.num_actions(), model.discount());
    const WindowCodec codec(window_length, model);
    const int ny = model.num_observations();
    for (std::int64_t s = 0; s < mdp.num_states_; ++s) {
        const auto filtered = try_window_posterior(model, pi_star, codec.decode(s));
        if (!filtered) continue;
        mdp.reachable_[s] = 1;
        const Belief& post = filtered->posterior;
        for (int u = 0; u < model.num_actions(); ++u) {
            double c = 0.0;
            for (int x = 0; x < model.num_states(); ++x) c += model.cost(x, u) * post[x];
            mdp.cost_[mdp.index(s, u)] = c;
            const auto pred = predictive_from_posterior(model, post, u);
            for (int y = 0; y < ny; ++y) {
                mdp.succ_[mdp.index(s, u) * ny + y] = codec.successor(s, y, u);
                mdp.prob_[mdp.index(s, u) * ny + y] = pred[y];
            }
        }
    }
    return mdp;
}

double QTable::value(std::int64_t s) const {
    double best = q(s, 0);
    for (int u = 1; u < num_actions; ++u) best = std::min(best, q(s, u));
    return best;
}

int QTable::argmin(std::int64_t s) const {
    int best = 0;
    for (int u = 1; u < num_actions; ++u)
        if (q(s, u) < q(s, best)) best = u;
    return best;
}

std::int64_t QTable::state_visits(std::int64_t s) const {
    std::int64_t n = 0;
    for (int u = 0; u < num_actions; ++u) n += count(s, u);
    return n;
}

namespace {

double backup(const FiniteMdp& mdp, const std::vector<double>& value, std::int64_t s, int u) {
    double expected = 0.0;
    for (int y = 0; y < mdp.num_observations(); ++y) {
        const double p = mdp.successor_probability(s, u, y);
        if (p != 0.0) expected += p * value[mdp.successor(s, u, y)];
    }
    return mdp.cost(s, u) + mdp.discount() * expected;
}

}  // namespace

ValueIterationResult value_iteration(const FiniteMdp& mdp, double tol) {
    if (!(tol > 0.0)) throw ValidationError("value iteration tolerance must be positive");
    const double beta = mdp.discount();
    const double threshold = tol * (1.0 - beta) / (2.0 * beta);
    const std::int64_t n = mdp.num_states();

    ValueIterationResult r;
    r.q = QTable(n, mdp.num_actions());
    std::vector<double> value(static_cast<std::size_t>(n), 0.0);
    std::vector<double> next(static_cast<std::size_t>(n), 0.0);
    // Contraction guarantees termination; the cap only guards against NaN input.
    const int max_sweeps = 100'000;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double diff = 0.0;
        for (std::int64_t s = 0; s < n; ++s) {
            if (!mdp.reachable(s)) continue;
            for (int u = 0; u < mdp.num_actions(); ++u) r.q.q(s, u) = backup(mdp, value, s, u);
            next[s] = r.q.value(s);
            diff = std::max(diff, std::abs(next[s] - value[s]));
        }
        value.swap(next);
        r.sweep_differences.push_back(diff);
        r.iterations = sweep + 1;
        if (diff < threshold) break;
    }
    r.value = std::move(value);
    r.policy.window_length = mdp.window_length();
    r.policy.action.assign(static_cast<std::size_t>(n), 0);
    r.policy.defined.assign(static_cast<std::size_t>(n), 0);
    for (std::int64_t s = 0; s < n; ++s) {
        if (!mdp.reachable(s)) continue;
        r.policy.action[s] = r.q.argmin(s);
        r.policy.defined[s] = 1;
    }
    return r;
}

double fixed_point_residual(const FiniteMdp& mdp, const QTable& q) {
    std::vector<double> value(static_cast<std::size_t>(mdp.num_states()), 0.0);
    for (std::int64_t s = 0; s < mdp.num_states(); ++s)
        if (mdp.reachable(s)) value[s] = q.value(s);
    double worst = 0.0;
    for (std::int64_t s = 0; s < mdp.num_states(); ++s) {
        if (!mdp.reachable(s)) continue;
        for (int u = 0; u < mdp.num_actions(); ++u)
            worst = std::max(worst, std::abs(q.q(s, u) - backup(mdp, value, s, u)));
    }
    return worst;
}

std::string window_key(const WindowState& w) {
    return fmt::format("y=[{}] u=[{}]", fmt::join(w.obs, ","), fmt::join(w.acts, ","));
}

nlohmann::json qtable_to_json(const QTable& q, int window_length, const PomdpModel& model,
                              const std::vector<double>* reference_value) {
    const WindowCodec codec(window_length, model);
    nlohmann::json windows = nlohmann::json::object();
    for (std::int64_t s = 0; s < q.num_states; ++s) {
        const WindowState w = codec.decode(s);
        nlohmann::json entry;
        entry["obs"] = w.obs;
        entry["acts"] = w.acts;
        std::vector<double> values(q.num_actions);
        std::vector<std::int64_t> visits(q.num_actions);
        for (int u = 0; u < q.num_actions; ++u) {
            values[u] = q.q(s, u);
            visits[u] = q.count(s, u);
        }
        entry["q"] = values;
        entry["visits"] = visits;
        if (reference_value) entry["reference_value"] = (*reference_value)[s];
        windows[window_key(w)] = entry;
    }
    return {{"window_length", window_length}, {"windows", windows}};
}

nlohmann::json policy_to_json(const WindowPolicy& policy, const PomdpModel& model) {
    const WindowCodec codec(policy.window_length, model);
    nlohmann::json windows = nlohmann::json::object();
    for (std::int64_t s = 0; s < policy.size(); ++s) {
        const WindowState w = codec.decode(s);
        windows[window_key(w)] = {{"obs", w.obs},
                                  {"acts", w.acts},
                                  {"action", policy.action[s]},
                                  {"action_name", model.action_names()[policy.action[s]]},
                                  {"defined", policy.defined[s] != 0}};
    }
    return {{"window_length", policy.window_length}, {"windows", windows}};
}

}  // namespace fimeq
