#include "fimeq/qlearning.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace fimeq {

RandomStream::RandomStream(std::uint64_t seed, StreamId stream, std::uint64_t substream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(substream),
                      static_cast<std::uint32_t>(substream >> 32)};
    engine_.seed(seq);
}

int RandomStream::sample(std::span<const double> probabilities) {
    const double r = uniform();
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        if (probabilities[i] <= 0.0) continue;
        acc += probabilities[i];
        last_positive = static_cast<int>(i);
        if (r < acc) return last_positive;
    }
    // Rounding left acc slightly below one.
    return last_positive;
}

StepOutcome simulate_step(const PomdpModel& model, int state, int action, RandomStream& rng) {
    StepOutcome out;
    out.cost = model.cost(state, action);
    out.next_state = rng.sample(model.transition_row(state, action));
    out.observation = rng.sample(model.channel_row(out.next_state));
    return out;
}

LearningReference make_reference(const FiniteMdp& mdp, const std::vector<double>& value) {
    LearningReference r;
    r.value = value;
    r.reachable.resize(static_cast<std::size_t>(mdp.num_states()));
    for (std::int64_t s = 0; s < mdp.num_states(); ++s) r.reachable[s] = mdp.reachable(s) ? 1 : 0;
    return r;
}

namespace {

double sup_error(const QTable& q, const LearningReference& ref) {
    double worst = 0.0;
    for (std::int64_t s = 0; s < q.num_states; ++s)
        if (ref.reachable[s]) worst = std::max(worst, std::abs(q.value(s) - ref.value[s]));
    return worst;
}

}  // namespace

LearnResult run_q_learning(const PomdpModel& model, const LearnConfig& cfg, const LearningReference* reference) {
    if (cfg.window_length < 0) throw ValidationError("window length must be nonnegative");
    if (cfg.total_steps <= cfg.window_length) throw ValidationError("total_steps must exceed the window length");
    if (cfg.snapshot_every <= 0) throw ValidationError("snapshot_every must be positive");
    if (cfg.exploration.num_actions() != model.num_actions()) {
        throw ValidationError("exploration policy size does not match the action set");
    }
    const WindowCodec codec(cfg.window_length, model);
    if (codec.size() > kMaxWindowStates) throw GuardViolation("window space too large for a Q table");
    if (reference && reference->value.size() != static_cast<std::size_t>(codec.size())) {
        throw ValidationError("reference value does not match the window space");
    }

    RandomStream trajectory(cfg.seed, StreamId::Trajectory);
    RandomStream actions(cfg.seed, StreamId::Action);
    const double beta = model.discount();

    LearnResult result{QTable(codec.size(), model.num_actions()), {}};
    QTable& q = result.q;

    int x = trajectory.sample(model.prior().weights());
    WindowState filling;
    filling.obs.push_back(trajectory.sample(model.channel_row(x)));
    std::int64_t window = filling.length() == cfg.window_length ? codec.encode(filling) : -1;

    for (std::int64_t t = 0; t < cfg.total_steps; ++t) {
        const int u = actions.sample(cfg.exploration.probabilities());
        const StepOutcome step = simulate_step(model, x, u, trajectory);
        if (window >= 0) {
            const std::int64_t next = codec.successor(window, step.observation, u);
            const double alpha = 1.0 / static_cast<double>(++q.count(window, u));
            q.q(window, u) = (1.0 - alpha) * q.q(window, u) + alpha * (step.cost + beta * q.value(next));
            window = next;
        } else {
            filling.obs.insert(filling.obs.begin(), step.observation);
            filling.acts.insert(filling.acts.begin(), u);
            if (filling.length() == cfg.window_length) window = codec.encode(filling);
        }
        x = step.next_state;
        if (reference && ((t + 1) % cfg.snapshot_every == 0 || t + 1 == cfg.total_steps)) {
            result.curve.push_back({t + 1, sup_error(q, *reference)});
        }
    }
    return result;
}

WindowPolicy greedy_policy(const QTable& q, int window_length) {
    WindowPolicy p;
    p.window_length = window_length;
    p.action.assign(static_cast<std::size_t>(q.num_states), 0);
    p.defined.assign(static_cast<std::size_t>(q.num_states), 0);
    for (std::int64_t s = 0; s < q.num_states; ++s) {
        if (q.state_visits(s) == 0) continue;
        p.action[s] = q.argmin(s);
        p.defined[s] = 1;
    }
    return p;
}

std::string curve_to_csv(const LearningCurve& curve) {
    std::string out = "step,sup_error\n";
    for (const auto& p : curve) out += fmt::format("{},{:.17g}\n", p.step, p.sup_error);
    return out;
}

}  // namespace fimeq
