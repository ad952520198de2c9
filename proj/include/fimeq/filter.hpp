#pragma once

#include <optional>
#include <vector>

#include "fimeq/model.hpp"

// Bayesian filtering primitives on a finite POMDP.
//
// Windows are folded oldest pair first: starting from a prior on X_{t-N},
// each (y_{t-k}, u_{t-k}) pair conditions on the observation and pushes the
// result through T(.|., u), and the newest observation y_t is absorbed last.
namespace fimeq {

/// pi'(x) proportional to O(y|x) pi(x). Throws ZeroProbabilityObservation when
/// y is impossible under pi.
Belief measurement_update(const PomdpModel& model, const Belief& pi, int y);

/// G(pi, y, u): condition on y, then predict through T(.|., u).
Belief predictor_step(const PomdpModel& model, const Belief& pi, int y, int u);

/// Posterior of X_t given the window, starting from a prior on X_{t-N}.
/// Throws ZeroProbabilityWindow if any normalizer vanishes.
Belief window_posterior(const PomdpModel& model, const Belief& prior, const WindowState& w);

/// Non-throwing variant: the posterior together with P(observations | actions),
/// or nullopt when the window is impossible under the prior.
struct WindowFilterResult {
    Belief posterior;
    double likelihood;
};
std::optional<WindowFilterResult> try_window_posterior(const PomdpModel& model, const Belief& prior,
                                                       const WindowState& w);

/// Probability of seeing w's observations with its actions drawn from the
/// exploration policy, starting from a prior on X_{t-N}. Zero for impossible
/// windows; sums to one over all windows of a fixed length.
double window_probability(const PomdpModel& model, const Belief& prior, const WindowState& w,
                          const ExplorationPolicy& policy);

/// Distribution of Y_{t+1} given the window and the next action u.
std::vector<double> obs_predictive(const PomdpModel& model, const Belief& prior, const WindowState& w, int u);

/// Distribution of Y_{t+1} when the current posterior is `posterior` and u is applied.
std::vector<double> predictive_from_posterior(const PomdpModel& model, const Belief& posterior, int u);

/// Pushes a belief through T(.|., u) without conditioning.
Belief predict(const PomdpModel& model, const Belief& pi, int u);

}  // namespace fimeq
