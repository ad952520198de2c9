#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace fimeq {

// Error hierarchy. Every failure raised by the library derives from Error so
// callers can catch broadly and report the message.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

// Conditioning on an observation that has zero probability under the belief.
class ZeroProbabilityObservation : public Error {
public:
    using Error::Error;
};

// Conditioning on a window that has zero probability under the prior.
class ZeroProbabilityWindow : public Error {
public:
    using Error::Error;
};

class NonUniqueInvariant : public Error {
public:
    using Error::Error;
};

// A window policy has no action for a window the dynamics can reach.
class PolicyGap : public Error {
public:
    using Error::Error;
};

// Problem size or shape outside what an algorithm accepts.
class GuardViolation : public Error {
public:
    using Error::Error;
};

inline constexpr double kProbabilityTolerance = 1e-12;

/// Probability vector over hidden states. Construction always yields a point
/// of the simplex: nonnegative entries summing to one.
class Belief {
public:
    Belief() = default;

    /// Accepts weights that already sum to one within kProbabilityTolerance and
    /// renormalizes away the residual drift.
    static Belief from_weights(std::vector<double> weights);

    /// Scales nonnegative weights by their total. Throws ValidationError when the
    /// total is not positive.
    static Belief normalized(std::vector<double> weights);

    static Belief dirac(std::size_t num_states, std::size_t state);
    static Belief uniform(std::size_t num_states);

    std::size_t size() const { return weights_.size(); }
    double operator[](std::size_t i) const { return weights_[i]; }
    std::span<const double> weights() const { return weights_; }
    const std::vector<double>& vector() const { return weights_; }

    bool operator==(const Belief&) const = default;

private:
    explicit Belief(std::vector<double> w) : weights_(std::move(w)) {}
    std::vector<double> weights_;
};

/// L1 distance. This is the total variation norm in the convention
/// ||mu - nu||_TV = 2 sup_B |mu(B) - nu(B)|, so values lie in [0, 2].
double tv_distance(std::span<const double> a, std::span<const double> b);
inline double tv_distance(const Belief& a, const Belief& b) {
    return tv_distance(a.weights(), b.weights());
}

/// Raw dense arrays as they appear in a model file.
struct PomdpData {
    std::vector<std::string> states;
    std::vector<std::string> actions;
    std::vector<std::string> observations;
    std::vector<std::vector<std::vector<double>>> transition;  // [x][u][x']
    std::vector<std::vector<double>> channel;                  // [x][y]
    std::vector<std::vector<double>> cost;                     // [x][u]
    double discount = 0.0;
    std::vector<double> prior;
};

/// Finite POMDP with discounted cost. Immutable once constructed; the
/// constructor checks every stochasticity invariant and throws
/// ValidationError naming the first violation.
class PomdpModel {
public:
    explicit PomdpModel(PomdpData data);

    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }
    int num_observations() const { return num_observations_; }

    double transition(int x, int u, int next) const {
        return transition_[(static_cast<std::size_t>(x) * num_actions_ + u) * num_states_ + next];
    }
    double channel(int x, int y) const {
        return channel_[static_cast<std::size_t>(x) * num_observations_ + y];
    }
    double cost(int x, int u) const { return cost_[static_cast<std::size_t>(x) * num_actions_ + u]; }

    /// Row x' of T(. | x, u) as a contiguous span.
    std::span<const double> transition_row(int x, int u) const {
        return {transition_.data() + (static_cast<std::size_t>(x) * num_actions_ + u) * num_states_,
                static_cast<std::size_t>(num_states_)};
    }
    std::span<const double> channel_row(int x) const {
        return {channel_.data() + static_cast<std::size_t>(x) * num_observations_,
                static_cast<std::size_t>(num_observations_)};
    }

    double discount() const { return discount_; }
    const Belief& prior() const { return prior_; }
    /// max |c(x,u)|
    double cost_sup() const { return cost_sup_; }

    Eigen::MatrixXd transition_matrix(int u) const;
    Eigen::MatrixXd channel_matrix() const;

    const std::vector<std::string>& state_names() const { return state_names_; }
    const std::vector<std::string>& action_names() const { return action_names_; }
    const std::vector<std::string>& observation_names() const { return observation_names_; }

    /// Returns a copy with a different prior.
    PomdpModel with_prior(const Belief& prior) const;

private:
    int num_states_ = 0;
    int num_actions_ = 0;
    int num_observations_ = 0;
    std::vector<double> transition_;
    std::vector<double> channel_;
    std::vector<double> cost_;
    double discount_ = 0.0;
    Belief prior_;
    double cost_sup_ = 0.0;
    std::vector<std::string> state_names_;
    std::vector<std::string> action_names_;
    std::vector<std::string> observation_names_;
};

PomdpModel parse_model(const nlohmann::json& j);
PomdpModel load_model(const std::filesystem::path& path);
nlohmann::json to_json(const PomdpModel& model);
void save_model(const PomdpModel& model, const std::filesystem::path& path);

/// Last N+1 observations and N actions, newest first:
/// obs = (y_t, ..., y_{t-N}), acts = (u_{t-1}, ..., u_{t-N}).
struct WindowState {
    std::vector<int> obs;
    std::vector<int> acts;

    int length() const { return static_cast<int>(acts.size()); }
    bool operator==(const WindowState&) const = default;
};

/// Mixed-radix bijection between windows of a fixed length and
/// [0, |Y|^{N+1} |U|^N). The newest observation is the most significant digit;
/// observations occupy the high part of the code and actions the low part.
class WindowCodec {
public:
    WindowCodec(int window_length, int num_observations, int num_actions);
    WindowCodec(int window_length, const PomdpModel& model)
        : WindowCodec(window_length, model.num_observations(), model.num_actions()) {}

    int window_length() const { return length_; }
    int num_observations() const { return num_obs_; }
    int num_actions() const { return num_acts_; }
    std::int64_t size() const { return obs_codes_ * act_codes_; }

    std::int64_t encode(const WindowState& w) const;
    WindowState decode(std::int64_t code) const;

    /// Code of the window after observing y and having applied u:
    /// (y, y_t, ..., y_{t-N+1}; u, u_{t-1}, ..., u_{t-N+1}).
    std::int64_t successor(std::int64_t code, int y, int u) const {
        const std::int64_t oc = code / act_codes_;
        const std::int64_t ac = code % act_codes_;
        const std::int64_t next_oc = y * obs_top_ + oc / num_obs_;
        const std::int64_t next_ac = length_ == 0 ? 0 : u * act_top_ + ac / num_acts_;
        return next_oc * act_codes_ + next_ac;
    }

    int newest_observation(std::int64_t code) const {
        return static_cast<int>((code / act_codes_) / obs_top_);
    }

private:
    int length_;
    int num_obs_;
    int num_acts_;
    std::int64_t obs_codes_;  // |Y|^{N+1}
    std::int64_t act_codes_;  // |U|^N
    std::int64_t obs_top_;    // |Y|^N
    std::int64_t act_top_;    // |U|^{N-1}, or 1 when N = 0
};

std::int64_t window_code(const WindowState& w, const PomdpModel& model);
WindowState window_decode(std::int64_t code, int window_length, const PomdpModel& model);
/// Every window of the given length in code order.
std::vector<WindowState> all_windows(int window_length, const PomdpModel& model);

/// Stationary randomized action rule with strictly positive probabilities.
class ExplorationPolicy {
public:
    explicit ExplorationPolicy(std::vector<double> probabilities);
    static ExplorationPolicy uniform(int num_actions);

    int num_actions() const { return static_cast<int>(probs_.size()); }
    double probability(int u) const { return probs_[u]; }
    std::span<const double> probabilities() const { return probs_; }

private:
    std::vector<double> probs_;
};

/// Deterministic map from window codes to actions. `defined` marks windows
/// whose action came from data; undefined entries hold action 0.
struct WindowPolicy {
    int window_length = 0;
    std::vector<int> action;
    std::vector<char> defined;

    std::int64_t size() const { return static_cast<std::int64_t>(action.size()); }
};

}  // namespace fimeq
