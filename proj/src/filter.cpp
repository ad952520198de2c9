#include "fimeq/filter.hpp"

#include <fmt/format.h>

namespace fimeq {

namespace {

// Unnormalized O(y|x) pi(x); returns the normalizer.
double condition(const PomdpModel& m, std::vector<double>& p, int y) {
    double total = 0.0;
    for (int x = 0; x < m.num_states(); ++x) {
        p[x] *= m.channel(x, y);
        total += p[x];
    }
    return total;
}

std::vector<double> push(const PomdpModel& m, const std::vector<double>& p, int u) {
    std::vector<double> out(m.num_states(), 0.0);
    for (int x = 0; x < m.num_states(); ++x) {
        if (p[x] == 0.0) continue;
        auto row = m.transition_row(x, u);
        for (int x2 = 0; x2 < m.num_states(); ++x2) out[x2] += p[x] * row[x2];
    }
    return out;
}

void check_observation(const PomdpModel& m, int y) {
    if (y < 0 || y >= m.num_observations()) throw std::out_of_range(fmt::format("observation {} out of range", y));
}

void check_action(const PomdpModel& m, int u) {
    if (u < 0 || u >= m.num_actions()) throw std::out_of_range(fmt::format("action {} out of range", u));
}

// Folds the window; returns false when some normalizer is zero.
bool fold_window(const PomdpModel& m, const Belief& prior, const WindowState& w, std::vector<double>& p,
                 double& likelihood) {
    if (prior.size() != static_cast<std::size_t>(m.num_states())) {
        throw ValidationError("prior size does not match the state space");
    }
    if (w.obs.size() != w.acts.size() + 1) throw std::out_of_range("window must hold N+1 observations and N actions");
    p = prior.vector();
    likelihood = 1.0;
    const int n = w.length();
    for (int k = n; k >= 1; --k) {
        check_observation(m, w.obs[k]);
        check_action(m, w.acts[k - 1]);
        const double z = condition(m, p, w.obs[k]);
        if (!(z > 0.0)) return false;
        likelihood *= z;
        for (double& v : p) v /= z;
        p = push(m, p, w.acts[k - 1]);
    }
    check_observation(m, w.obs[0]);
    const double z = condition(m, p, w.obs[0]);
    if (!(z > 0.0)) return false;
    likelihood *= z;
    for (double& v : p) v /= z;
    return true;
}

}  // namespace

Belief measurement_update(const PomdpModel& model, const Belief& pi, int y) {
    check_observation(model, y);
    std::vector<double> p = pi.vector();
    const double z = condition(model, p, y);
    if (!(z > 0.0)) {
        throw ZeroProbabilityObservation(fmt::format("observation {} has zero probability under the belief", y));
    }
    return Belief::normalized(std::move(p));
}

Belief predict(const PomdpModel& model, const Belief& pi, int u) {
    check_action(model, u);
    return Belief::normalized(push(model, pi.vector(), u));
}

Belief predictor_step(const PomdpModel& model, const Belief& pi, int y, int u) {
    check_action(model, u);
    return predict(model, measurement_update(model, pi, y), u);
}

std::optional<WindowFilterResult> try_window_posterior(const PomdpModel& model, const Belief& prior,
                                                       const WindowState& w) {
    std::vector<double> p;
    double likelihood = 0.0;
    if (!fold_window(model, prior, w, p, likelihood)) return std::nullopt;
    return WindowFilterResult{Belief::normalized(std::move(p)), likelihood};
}

Belief window_posterior(const PomdpModel& model, const Belief& prior, const WindowState& w) {
    auto r = try_window_posterior(model, prior, w);
    if (!r) throw ZeroProbabilityWindow("window has zero probability under the prior");
    return std::move(r->posterior);
}

double window_probability(const PomdpModel& model, const Belief& prior, const WindowState& w,
                          const ExplorationPolicy& policy) {
    std::vector<double> p;
    double likelihood = 0.0;
    if (!fold_window(model, prior, w, p, likelihood)) return 0.0;
    double weight = 1.0;
    for (int u : w.acts) weight *= policy.probability(u);
    return likelihood * weight;
}

std::vector<double> predictive_from_posterior(const PomdpModel& model, const Belief& posterior, int u) {
    check_action(model, u);
    const auto next = push(model, posterior.vector(), u);
    std::vector<double> out(model.num_observations(), 0.0);
    for (int x = 0; x < model.num_states(); ++x) {
        if (next[x] == 0.0) continue;
        for (int y = 0; y < model.num_observations(); ++y) out[y] += next[x] * model.channel(x, y);
    }
    double total = 0.0;
    for (double v : out) total += v;
    for (double& v : out) v /= total;
    return out;
}

std::vector<double> obs_predictive(const PomdpModel& model, const Belief& prior, const WindowState& w, int u) {
    return predictive_from_posterior(model, window_posterior(model, prior, w), u);
}

}  // namespace fimeq
