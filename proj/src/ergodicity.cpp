#include "fimeq/ergodicity.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "fimeq/filter.hpp"
#include "parallel.hpp"

namespace fimeq {

Eigen::MatrixXd averaged_chain(const PomdpModel& model, const ExplorationPolicy& policy) {
    if (policy.num_actions() != model.num_actions()) {
        throw ValidationError("exploration policy size does not match the action set");
    }
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(model.num_states(), model.num_states());
    for (int u = 0; u < model.num_actions(); ++u) p += policy.probability(u) * model.transition_matrix(u);
    return p;
}

int count_recurrent_classes(const Eigen::MatrixXd& chain) {
    const auto n = chain.rows();
    // Transitive closure of the positive-entry graph.
    std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
    for (Eigen::Index i = 0; i < n; ++i) {
        reach[i][i] = 1;
        for (Eigen::Index j = 0; j < n; ++j)
            if (chain(i, j) > 0.0) reach[i][j] = 1;
    }
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index i = 0; i < n; ++i)
            if (reach[i][k])
                for (Eigen::Index j = 0; j < n; ++j)
                    if (reach[k][j]) reach[i][j] = 1;

    std::vector<char> assigned(n, 0);
    int classes = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (assigned[i]) continue;
        bool closed = true;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (reach[i][j] && reach[j][i]) assigned[j] = 1;
            if (reach[i][j] && !reach[j][i]) closed = false;
        }
        if (closed) ++classes;
    }
    return classes;
}

Belief stationary_by_linear_solve(const Eigen::MatrixXd& chain) {
    const auto n = chain.rows();
    Eigen::MatrixXd a = chain.transpose() - Eigen::MatrixXd::Identity(n, n);
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::VectorXd pi = a.fullPivLu().solve(b);
    std::vector<double> w(pi.data(), pi.data() + n);
    for (double& v : w) v = std::max(v, 0.0);
    return Belief::normalized(std::move(w));
}

Belief stationary_by_power_iteration(const Eigen::MatrixXd& chain, double tol, long max_steps) {
    const auto n = chain.rows();
    const Eigen::MatrixXd lazy = 0.5 * (Eigen::MatrixXd::Identity(n, n) + chain);
    Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
    for (long step = 0; step < max_steps; ++step) {
        Eigen::RowVectorXd next = pi * lazy;
        next /= next.sum();
        const double change = (next - pi).lpNorm<1>();
        pi = next;
        if (change < tol) break;
    }
    return Belief::normalized(std::vector<double>(pi.data(), pi.data() + n));
}

Belief stationary_distribution(const PomdpModel& model, const ExplorationPolicy& policy) {
    const Eigen::MatrixXd chain = averaged_chain(model, policy);
    const int classes = count_recurrent_classes(chain);
    if (classes != 1) {
        throw NonUniqueInvariant(
            fmt::format("hidden chain under exploration has {} recurrent classes; invariant measure is not unique",
                        classes));
    }
    Belief pi = stationary_by_linear_solve(chain);
    const Belief check = stationary_by_power_iteration(chain);
    const double gap = tv_distance(pi, check);
    if (gap > 1e-8) {
        throw Error(fmt::format("stationary distribution: linear solve and power iteration differ by {:.3g}", gap));
    }
    return pi;
}

bool positivity_check(const Belief& pi_star) {
    return std::all_of(pi_star.weights().begin(), pi_star.weights().end(), [](double v) { return v > 0.0; });
}

double dobrushin(const Eigen::MatrixXd& kernel) {
    double best = 1.0;
    for (Eigen::Index x = 0; x < kernel.rows(); ++x) {
        for (Eigen::Index y = x + 1; y < kernel.rows(); ++y) {
            double overlap = 0.0;
            for (Eigen::Index j = 0; j < kernel.cols(); ++j) overlap += std::min(kernel(x, j), kernel(y, j));
            best = std::min(best, overlap);
        }
    }
    return std::clamp(best, 0.0, 1.0);
}

AlphaCoefficient alpha_coefficient(const PomdpModel& model) {
    double delta_t = 1.0;
    for (int u = 0; u < model.num_actions(); ++u) delta_t = std::min(delta_t, dobrushin(model.transition_matrix(u)));
    const double delta_o = dobrushin(model.channel_matrix());
    return {delta_t, delta_o, (1.0 - delta_t) * (2.0 - delta_o)};
}

std::vector<Belief> simplex_grid(int num_states, int resolution) {
    if (num_states < 1 || resolution < 1) throw GuardViolation("simplex grid needs positive size and resolution");
    // C(resolution + n - 1, n - 1) points.
    double count = 1.0;
    for (int k = 1; k < num_states; ++k) count = count * (resolution + k) / k;
    if (count > 5e6) throw GuardViolation(fmt::format("simplex grid would have {:.0f} points", count));

    std::vector<Belief> out;
    out.reserve(static_cast<std::size_t>(count));
    std::vector<int> parts(num_states, 0);
    // Enumerate compositions of `resolution` into num_states parts.
    auto recurse = [&](auto&& self, int index, int remaining) -> void {
        if (index == num_states - 1) {
            parts[index] = remaining;
            std::vector<double> w(num_states);
            for (int i = 0; i < num_states; ++i) w[i] = static_cast<double>(parts[i]) / resolution;
            out.push_back(Belief::normalized(std::move(w)));
            return;
        }
        for (int k = remaining; k >= 0; --k) {
            parts[index] = k;
            self(self, index + 1, remaining - k);
        }
    };
    recurse(recurse, 0, resolution);
    return out;
}

double estimate_L(const PomdpModel& model, const Belief& pi_star, int window_length, int grid_resolution) {
    if (!positivity_check(pi_star)) {
        throw ValidationError("estimate_L requires a reference prior with full support");
    }
    const WindowCodec codec(window_length, model);
    const auto priors = simplex_grid(model.num_states(), grid_resolution);
    std::vector<double> per_window(static_cast<std::size_t>(codec.size()), 0.0);
    detail::parallel_for(codec.size(), [&](std::int64_t code) {
        const WindowState w = codec.decode(code);
        const auto reference = try_window_posterior(model, pi_star, w);
        if (!reference) return;
        double worst = 0.0;
        for (const Belief& prior : priors) {
            const auto other = try_window_posterior(model, prior, w);
            if (!other) continue;
            worst = std::max(worst, tv_distance(other->posterior, reference->posterior));
        }
        per_window[code] = worst;
    });
    return std::min(2.0, *std::max_element(per_window.begin(), per_window.end()));
}

StabilityReport stability_report(const PomdpModel& model, const ExplorationPolicy& policy,
                                 const std::vector<int>& window_lengths, int grid_resolution) {
    StabilityReport r;
    r.pi_star = stationary_distribution(model, policy);
    r.pi_star_positive = positivity_check(r.pi_star);
    const auto a = alpha_coefficient(model);
    r.delta_T = a.delta_T;
    r.delta_O = a.delta_O;
    r.alpha = a.alpha;
    if (r.pi_star_positive) {
        for (int n : window_lengths) r.L_by_N[n] = estimate_L(model, r.pi_star, n, grid_resolution);
    }
    return r;
}

nlohmann::json to_json(const StabilityReport& r) {
    nlohmann::json j;
    j["pi_star"] = r.pi_star.vector();
    j["pi_star_positive"] = r.pi_star_positive;
    j["delta_T"] = r.delta_T;
    j["delta_O"] = r.delta_O;
    j["alpha"] = r.alpha;
    auto l = nlohmann::json::object();
    for (const auto& [n, value] : r.L_by_N) l[std::to_string(n)] = value;
    j["L_by_N"] = l;
    return j;
}

}  // namespace fimeq
