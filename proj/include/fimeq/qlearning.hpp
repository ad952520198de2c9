#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fimeq/approx_mdp.hpp"
#include "fimeq/model.hpp"

namespace fimeq {

/// Named random streams. Each stream is an independent mt19937_64 seeded
/// from (seed, stream id) through std::seed_seq, so a run is reproducible
/// from its seed alone and streams never share state.
enum class StreamId : std::uint32_t {
    Trajectory = 1,  // hidden-state transitions, observations, initial state
    Action = 2,      // exploration actions
    Evaluation = 3,  // Monte Carlo policy evaluation
};

class RandomStream {
public:
    RandomStream(std::uint64_t seed, StreamId stream, std::uint64_t substream = 0);

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Index drawn from a probability vector by inverse CDF.
    int sample(std::span<const double> probabilities);

private:
    std::mt19937_64 engine_;
};

struct StepOutcome {
    int next_state;
    int observation;
    double cost;  // c(x, u) of the state the step started from
};

/// One transition of the hidden POMDP: x' ~ T(.|x,u), y' ~ O(.|x').
StepOutcome simulate_step(const PomdpModel& model, int state, int action, RandomStream& rng);

struct LearnConfig {
    int window_length = 0;
    std::int64_t total_steps = 0;
    std::uint64_t seed = 0;
    ExplorationPolicy exploration;
    std::int64_t snapshot_every = 10'000;
};

struct CurvePoint {
    std::int64_t step;
    double sup_error;
};
using LearningCurve = std::vector<CurvePoint>;

/// J^N_beta on the reachable windows of the approximate MDP.
struct LearningReference {
    std::vector<double> value;
    std::vector<char> reachable;
};

LearningReference make_reference(const FiniteMdp& mdp, const std::vector<double>& value);

struct LearnResult {
    QTable q;
    LearningCurve curve;
};

/// Finite-window Q-learning under a randomized exploration policy. The
/// first N steps only fill the window; afterwards every step updates the
/// visited (window, action) pair with step size 1/k at its k-th visit. When a
/// reference is supplied, sup_I |min_u Q(I,u) - J(I)| over reachable windows
/// is recorded every snapshot_every steps and at the final step.
LearnResult run_q_learning(const PomdpModel& model, const LearnConfig& cfg,
                           const LearningReference* reference = nullptr);

/// Greedy action per window, lowest index on ties. Windows with no visits
/// get action 0 and defined = false.
WindowPolicy greedy_policy(const QTable& q, int window_length);

std::string curve_to_csv(const LearningCurve& curve);

}  // namespace fimeq
