#include "fimeq/model.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <numeric>

namespace fimeq {

namespace {

void check_distribution(std::span<const double> row, const std::string& what) {
    double sum = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (!std::isfinite(row[i]) || row[i] < 0.0) {
            throw ValidationError(fmt::format("{}: entry {} is {} (must be a nonnegative probability)",
                                              what, i, row[i]));
        }
        sum += row[i];
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance) {
        throw ValidationError(fmt::format("{}: sums to {:.17g}, expected 1", what, sum));
    }
}

int checked_size(std::size_t n, const char* what) {
    if (n == 0) throw ValidationError(fmt::format("{} must be nonempty", what));
    if (n > 1u << 20) throw ValidationError(fmt::format("{} is too large ({})", what, n));
    return static_cast<int>(n);
}

std::int64_t checked_pow(std::int64_t base, int exp) {
    std::int64_t r = 1;
    for (int i = 0; i < exp; ++i) {
        if (r > (std::int64_t{1} << 40) / base) {
            throw GuardViolation(fmt::format("window space {}^{} is too large to enumerate", base, exp));
        }
        r *= base;
    }
    return r;
}

}  // namespace

Belief Belief::from_weights(std::vector<double> weights) {
    if (weights.empty()) throw ValidationError("belief must have at least one state");
    check_distribution(weights, "belief");
    return normalized(std::move(weights));
}

Belief Belief::normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ValidationError("belief weights must be nonnegative");
        sum += w;
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
        throw ValidationError("belief weights must have a positive finite total");
    }
    for (double& w : weights) w /= sum;
    return Belief(std::move(weights));
}

Belief Belief::dirac(std::size_t num_states, std::size_t state) {
    std::vector<double> w(num_states, 0.0);
    w.at(state) = 1.0;
    return Belief(std::move(w));
}

Belief Belief::uniform(std::size_t num_states) {
    return Belief(std::vector<double>(num_states, 1.0 / static_cast<double>(num_states)));
}

double tv_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
    return d;
}

PomdpModel::PomdpModel(PomdpData data) {
    num_states_ = checked_size(data.states.size(), "states");
    num_actions_ = checked_size(data.actions.size(), "actions");
    num_observations_ = checked_size(data.observations.size(), "observations");

    if (data.transition.size() != static_cast<std::size_t>(num_states_)) {
        throw ValidationError(fmt::format("transition has {} rows, expected {}", data.transition.size(), num_states_));
    }
    transition_.reserve(static_cast<std::size_t>(num_states_) * num_actions_ * num_states_);
    for (int x = 0; x < num_states_; ++x) {
        if (data.transition[x].size() != static_cast<std::size_t>(num_actions_)) {
            throw ValidationError(fmt::format("transition[{}] has {} actions, expected {}", x,
                                              data.transition[x].size(), num_actions_));
        }
        for (int u = 0; u < num_actions_; ++u) {
            const auto& row = data.transition[x][u];
            if (row.size() != static_cast<std::size_t>(num_states_)) {
                throw ValidationError(fmt::format("transition[{}][{}] has {} entries, expected {}", x, u,
                                                  row.size(), num_states_));
            }
            check_distribution(row, fmt::format("transition[{}][{}]", x, u));
            transition_.insert(transition_.end(), row.begin(), row.end());
        }
    }

    if (data.channel.size() != static_cast<std::size_t>(num_states_)) {
        throw ValidationError(fmt::format("channel has {} rows, expected {}", data.channel.size(), num_states_));
    }
    for (int x = 0; x < num_states_; ++x) {
        const auto& row = data.channel[x];
        if (row.size() != static_cast<std::size_t>(num_observations_)) {
            throw ValidationError(fmt::format("channel[{}] has {} entries, expected {}", x, row.size(),
                                              num_observations_));
        }
        check_distribution(row, fmt::format("channel[{}]", x));
        channel_.insert(channel_.end(), row.begin(), row.end());
    }

    if (data.cost.size() != static_cast<std::size_t>(num_states_)) {
        throw ValidationError(fmt::format("cost has {} rows, expected {}", data.cost.size(), num_states_));
    }
    for (int x = 0; x < num_states_; ++x) {
        const auto& row = data.cost[x];
        if (row.size() != static_cast<std::size_t>(num_actions_)) {
            throw ValidationError(fmt::format("cost[{}] has {} entries, expected {}", x, row.size(), num_actions_));
        }
        for (int u = 0; u < num_actions_; ++u) {
            if (!std::isfinite(row[u])) throw ValidationError(fmt::format("cost[{}][{}] is not finite", x, u));
            cost_sup_ = std::max(cost_sup_, std::abs(row[u]));
        }
        cost_.insert(cost_.end(), row.begin(), row.end());
    }

    if (!(data.discount > 0.0 && data.discount < 1.0)) {
        throw ValidationError(fmt::format("discount must lie in (0,1), got {}", data.discount));
    }
    discount_ = data.discount;

    if (data.prior.size() != static_cast<std::size_t>(num_states_)) {
        throw ValidationError(fmt::format("prior has {} entries, expected {}", data.prior.size(), num_states_));
    }
    check_distribution(data.prior, "prior");
    prior_ = Belief::normalized(std::move(data.prior));

    state_names_ = std::move(data.states);
    action_names_ = std::move(data.actions);
    observation_names_ = std::move(data.observations);
}

Eigen::MatrixXd PomdpModel::transition_matrix(int u) const {
    Eigen::MatrixXd m(num_states_, num_states_);
    for (int x = 0; x < num_states_; ++x)
        for (int x2 = 0; x2 < num_states_; ++x2) m(x, x2) = transition(x, u, x2);
    return m;
}

Eigen::MatrixXd PomdpModel::channel_matrix() const {
    Eigen::MatrixXd m(num_states_, num_observations_);
    for (int x = 0; x < num_states_; ++x)
        for (int y = 0; y < num_observations_; ++y) m(x, y) = channel(x, y);
    return m;
}

PomdpModel PomdpModel::with_prior(const Belief& prior) const {
    if (prior.size() != static_cast<std::size_t>(num_states_)) {
        throw ValidationError("prior size does not match the state space");
    }
    PomdpModel copy = *this;
    copy.prior_ = prior;
    return copy;
}

PomdpModel parse_model(const nlohmann::json& j) {
    PomdpData d;
    try {
        d.states = j.at("states").get<std::vector<std::string>>();
        d.actions = j.at("actions").get<std::vector<std::string>>();
        d.observations = j.at("observations").get<std::vector<std::string>>();
        d.transition = j.at("transition").get<std::vector<std::vector<std::vector<double>>>>();
        d.channel = j.at("channel").get<std::vector<std::vector<double>>>();
        d.cost = j.at("cost").get<std::vector<std::vector<double>>>();
        d.discount = j.at("discount").get<double>();
        d.prior = j.at("prior").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("malformed model: {}", e.what()));
    }
    return PomdpModel(std::move(d));
}

PomdpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(fmt::format("cannot open model file '{}'", path.string()));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("'{}': {}", path.string(), e.what()));
    }
    return parse_model(j);
}

nlohmann::json to_json(const PomdpModel& m) {
    nlohmann::json j;
    j["states"] = m.state_names();
    j["actions"] = m.action_names();
    j["observations"] = m.observation_names();
    auto transition = nlohmann::json::array();
    auto channel = nlohmann::json::array();
    auto cost = nlohmann::json::array();
    for (int x = 0; x < m.num_states(); ++x) {
        auto per_action = nlohmann::json::array();
        for (int u = 0; u < m.num_actions(); ++u) {
            auto row = m.transition_row(x, u);
            per_action.push_back(std::vector<double>(row.begin(), row.end()));
        }
        transition.push_back(per_action);
        auto crow = m.channel_row(x);
        channel.push_back(std::vector<double>(crow.begin(), crow.end()));
        std::vector<double> c(m.num_actions());
        for (int u = 0; u < m.num_actions(); ++u) c[u] = m.cost(x, u);
        cost.push_back(c);
    }
    j["transition"] = transition;
    j["channel"] = channel;
    j["cost"] = cost;
    j["discount"] = m.discount();
    j["prior"] = m.prior().vector();
    return j;
}

void save_model(const PomdpModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(fmt::format("cannot write model file '{}'", path.string()));
    out << to_json(model).dump(2) << '\n';
}

WindowCodec::WindowCodec(int window_length, int num_observations, int num_actions)
    : length_(window_length), num_obs_(num_observations), num_acts_(num_actions) {
    if (window_length < 0) throw GuardViolation("window length must be nonnegative");
    if (num_observations < 1 || num_actions < 1) throw GuardViolation("alphabets must be nonempty");
    obs_top_ = checked_pow(num_obs_, length_);
    obs_codes_ = obs_top_ * num_obs_;
    act_codes_ = checked_pow(num_acts_, length_);
    act_top_ = length_ == 0 ? 1 : act_codes_ / num_acts_;
    if (obs_codes_ > (std::int64_t{1} << 40) / act_codes_) {
        throw GuardViolation("window space is too large to enumerate");
    }
}

std::int64_t WindowCodec::encode(const WindowState& w) const {
    if (w.obs.size() != static_cast<std::size_t>(length_ + 1) || w.acts.size() != static_cast<std::size_t>(length_)) {
        throw std::out_of_range(fmt::format("window has {} observations and {} actions, expected {} and {}",
                                            w.obs.size(), w.acts.size(), length_ + 1, length_));
    }
    std::int64_t oc = 0;
    for (int y : w.obs) {
        if (y < 0 || y >= num_obs_) throw std::out_of_range(fmt::format("observation index {} out of range", y));
        oc = oc * num_obs_ + y;
    }
    std::int64_t ac = 0;
    for (int u : w.acts) {
        if (u < 0 || u >= num_acts_) throw std::out_of_range(fmt::format("action index {} out of range", u));
        ac = ac * num_acts_ + u;
    }
    return oc * act_codes_ + ac;
}

WindowState WindowCodec::decode(std::int64_t code) const {
    if (code < 0 || code >= size()) throw std::out_of_range(fmt::format("window code {} out of range", code));
    WindowState w;
    w.obs.assign(length_ + 1, 0);
    w.acts.assign(length_, 0);
    std::int64_t oc = code / act_codes_;
    std::int64_t ac = code % act_codes_;
    for (int k = length_; k >= 0; --k) {
        w.obs[k] = static_cast<int>(oc % num_obs_);
        oc /= num_obs_;
    }
    for (int k = length_ - 1; k >= 0; --k) {
        w.acts[k] = static_cast<int>(ac % num_acts_);
        ac /= num_acts_;
    }
    return w;
}

std::int64_t window_code(const WindowState& w, const PomdpModel& model) {
    return WindowCodec(w.length(), model).encode(w);
}

WindowState window_decode(std::int64_t code, int window_length, const PomdpModel& model) {
    return WindowCodec(window_length, model).decode(code);
}

std::vector<WindowState> all_windows(int window_length, const PomdpModel& model) {
    const WindowCodec codec(window_length, model);
    std::vector<WindowState> out;
    out.reserve(static_cast<std::size_t>(codec.size()));
    for (std::int64_t c = 0; c < codec.size(); ++c) out.push_back(codec.decode(c));
    return out;
}

ExplorationPolicy::ExplorationPolicy(std::vector<double> probabilities) : probs_(std::move(probabilities)) {
    if (probs_.empty()) throw ValidationError("exploration policy needs at least one action");
    for (std::size_t i = 0; i < probs_.size(); ++i) {
        if (!(probs_[i] > 0.0)) {
            throw ValidationError(fmt::format("exploration probability for action {} must be positive", i));
        }
    }
    check_distribution(probs_, "exploration policy");
}

ExplorationPolicy ExplorationPolicy::uniform(int num_actions) {
    return ExplorationPolicy(std::vector<double>(num_actions, 1.0 / num_actions));
}

}  // namespace fimeq
