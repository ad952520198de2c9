#include "fimeq/evaluation.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "fimeq/approx_mdp.hpp"
#include "fimeq/ergodicity.hpp"
#include "fimeq/filter.hpp"
#include "fimeq/qlearning.hpp"

namespace fimeq {

namespace {

constexpr std::int64_t kMaxJointStates = 20'000'000;

std::int64_t ipow(std::int64_t base, int exp) {
    std::int64_t r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

}  // namespace

std::vector<double> warmup_distribution(const PomdpModel& model, int window_length,
                                        const ExplorationPolicy& warmup) {
    const int nx = model.num_states();
    const int ny = model.num_observations();
    const int nu = model.num_actions();
    const WindowCodec full(window_length, model);
    if (full.size() * nx > kMaxJointStates) throw GuardViolation("joint (state, window) space too large");

    // Partial windows of length k share the codec layout of length k.
    std::vector<double> dist(static_cast<std::size_t>(nx) * ny, 0.0);
    for (int x = 0; x < nx; ++x)
        for (int y = 0; y < ny; ++y) dist[static_cast<std::size_t>(x) * ny + y] = model.prior()[x] * model.channel(x, y);

    for (int k = 0; k < window_length; ++k) {
        const std::int64_t acts_k = ipow(nu, k);
        const std::int64_t obs_k = ipow(ny, k + 1);
        const std::int64_t width = obs_k * acts_k;
        const std::int64_t next_width = obs_k * ny * acts_k * nu;
        std::vector<double> next(static_cast<std::size_t>(nx * next_width), 0.0);
        for (int x = 0; x < nx; ++x) {
            for (std::int64_t code = 0; code < width; ++code) {
                const double p = dist[x * width + code];
                if (p == 0.0) continue;
                const std::int64_t oc = code / acts_k;
                const std::int64_t ac = code % acts_k;
                for (int u = 0; u < nu; ++u) {
                    const double pu = p * warmup.probability(u);
                    const std::int64_t next_ac = u * acts_k + ac;
                    for (int x2 = 0; x2 < nx; ++x2) {
                        const double pt = pu * model.transition(x, u, x2);
                        if (pt == 0.0) continue;
                        for (int y = 0; y < ny; ++y) {
                            const double po = pt * model.channel(x2, y);
                            if (po == 0.0) continue;
                            const std::int64_t next_oc = y * obs_k + oc;
                            next[x2 * next_width + next_oc * (acts_k * nu) + next_ac] += po;
                        }
                    }
                }
            }
        }
        dist.swap(next);
    }
    return dist;
}

double evaluate_window_policy(const PomdpModel& model, const WindowPolicy& policy,
                              const ExplorationPolicy& warmup) {
    const int nx = model.num_states();
    const int ny = model.num_observations();
    const WindowCodec codec(policy.window_length, model);
    if (policy.size() != codec.size()) throw ValidationError("policy does not cover the window space");
    const std::int64_t width = codec.size();
    const std::vector<double> start = warmup_distribution(model, policy.window_length, warmup);

    // Joint states reachable from the time-N distribution under the policy.
    std::vector<std::int64_t> local(static_cast<std::size_t>(nx * width), -1);
    std::vector<std::int64_t> order;
    std::deque<std::int64_t> frontier;
    for (std::int64_t j = 0; j < nx * width; ++j) {
        if (start[j] > 0.0) {
            local[j] = static_cast<std::int64_t>(order.size());
            order.push_back(j);
            frontier.push_back(j);
        }
    }
    while (!frontier.empty()) {
        const std::int64_t j = frontier.front();
        frontier.pop_front();
        const int x = static_cast<int>(j / width);
        const std::int64_t code = j % width;
        if (!policy.defined[code]) {
            throw PolicyGap(fmt::format("policy has no action for reachable window {}", window_key(codec.decode(code))));
        }
        const int u = policy.action[code];
        for (int x2 = 0; x2 < nx; ++x2) {
            if (model.transition(x, u, x2) == 0.0) continue;
            for (int y = 0; y < ny; ++y) {
                if (model.channel(x2, y) == 0.0) continue;
                const std::int64_t k = x2 * width + codec.successor(code, y, u);
                if (local[k] < 0) {
                    local[k] = static_cast<std::int64_t>(order.size());
                    order.push_back(k);
                    frontier.push_back(k);
                }
            }
        }
    }

    const auto n = static_cast<Eigen::Index>(order.size());
    const double beta = model.discount();
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(n) * (1 + nx * ny));
    Eigen::VectorXd cost(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::int64_t j = order[i];
        const int x = static_cast<int>(j / width);
        const std::int64_t code = j % width;
        const int u = policy.action[code];
        cost(i) = model.cost(x, u);
        entries.emplace_back(i, i, 1.0);
        for (int x2 = 0; x2 < nx; ++x2) {
            const double pt = model.transition(x, u, x2);
            if (pt == 0.0) continue;
            for (int y = 0; y < ny; ++y) {
                const double p = pt * model.channel(x2, y);
                if (p == 0.0) continue;
                entries.emplace_back(i, local[x2 * width + codec.successor(code, y, u)], -beta * p);
            }
        }
    }
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(entries.begin(), entries.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw Error("policy evaluation: factorization failed");
    const Eigen::VectorXd v = lu.solve(cost);

    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += start[order[i]] * v(i);
    return total;
}

int truncation_horizon(const PomdpModel& model, double truncation) {
    const double beta = model.discount();
    double tail = model.cost_sup() / (1.0 - beta);
    int h = 0;
    while (tail >= truncation) {
        tail *= beta;
        ++h;
    }
    return h;
}

MonteCarloEstimate monte_carlo_window_policy(const PomdpModel& model, const WindowPolicy& policy,
                                             const ExplorationPolicy& warmup, std::int64_t episodes,
                                             std::uint64_t seed) {
    if (episodes < 2) throw ValidationError("Monte Carlo needs at least two episodes");
    const WindowCodec codec(policy.window_length, model);
    if (policy.size() != codec.size()) throw ValidationError("policy does not cover the window space");
    RandomStream rng(seed, StreamId::Evaluation);
    const int horizon = truncation_horizon(model);
    const double beta = model.discount();

    double mean = 0.0;
    double m2 = 0.0;
    WindowState w;
    for (std::int64_t e = 0; e < episodes; ++e) {
        int x = rng.sample(model.prior().weights());
        w.obs.assign(1, rng.sample(model.channel_row(x)));
        w.acts.clear();
        for (int k = 0; k < policy.window_length; ++k) {
            const int u = rng.sample(warmup.probabilities());
            const StepOutcome s = simulate_step(model, x, u, rng);
            w.obs.insert(w.obs.begin(), s.observation);
            w.acts.insert(w.acts.begin(), u);
            x = s.next_state;
        }
        std::int64_t code = codec.encode(w);
        double total = 0.0;
        double weight = 1.0;
        for (int k = 0; k < horizon; ++k) {
            if (!policy.defined[code]) {
                throw PolicyGap(fmt::format("policy has no action for visited window {}", window_key(codec.decode(code))));
            }
            const int u = policy.action[code];
            const StepOutcome s = simulate_step(model, x, u, rng);
            total += weight * s.cost;
            weight *= beta;
            code = codec.successor(code, s.observation, u);
            x = s.next_state;
        }
        const double delta = total - mean;
        mean += delta / static_cast<double>(e + 1);
        m2 += delta * (total - mean);
    }
    MonteCarloEstimate out;
    out.mean = mean;
    out.standard_error = std::sqrt(m2 / static_cast<double>(episodes - 1) / static_cast<double>(episodes));
    out.episodes = episodes;
    out.horizon = horizon;
    return out;
}

BeliefGridSolver::BeliefGridSolver(const PomdpModel& model, int bins)
    : model_(&model), bins_(bins), resolution_(bins - 1) {
    if (model.num_states() > 3) throw GuardViolation("belief grid supports at most 3 hidden states");
    if (bins < 2) throw GuardViolation("belief grid needs at least 2 bins per edge");
    const int n = model.num_states();
    const int m = resolution_;
    if (n == 1) {
        points_.push_back(Belief::dirac(1, 0));
    } else if (n == 2) {
        for (int x1 = 0; x1 <= m; ++x1) {
            points_.push_back(Belief::normalized({static_cast<double>(m - x1) / m, static_cast<double>(x1) / m}));
        }
    } else {
        for (int x1 = 0; x1 <= m; ++x1)
            for (int x2 = 0; x2 <= x1; ++x2)
                points_.push_back(Belief::normalized({static_cast<double>(m - x1) / m,
                                                      static_cast<double>(x1 - x2) / m, static_cast<double>(x2) / m}));
    }
    const double work = static_cast<double>(points_.size()) * model.num_actions() * model.num_observations() * n;
    if (work > 2e8) throw GuardViolation(fmt::format("belief grid with {} bins is too large", bins));
    values_.assign(points_.size(), 0.0);
}

std::int64_t BeliefGridSolver::index_of(const std::vector<int>& c) const {
    switch (c.size()) {
        case 0:
            return 0;
        case 1:
            return c[0];
        default:
            return static_cast<std::int64_t>(c[0]) * (c[0] + 1) / 2 + c[1];
    }
}

void BeliefGridSolver::interpolation_vertices(std::span<const double> z, std::vector<Vertex>& out) const {
    out.clear();
    const int n = static_cast<int>(z.size());
    const int dims = n - 1;
    if (dims == 0) {
        out.push_back({0, 1.0});
        return;
    }
    // Cumulative coordinates x_i = m * sum_{j >= i} z_j, i = 1..n-1, nonincreasing.
    std::vector<double> x(dims);
    double tail = 0.0;
    for (int i = n - 1; i >= 1; --i) {
        tail += z[i];
        x[i - 1] = std::clamp(tail * resolution_, 0.0, static_cast<double>(resolution_));
    }
    for (int i = 1; i < dims; ++i) x[i] = std::min(x[i], x[i - 1]);

    std::vector<int> base(dims);
    std::vector<double> frac(dims);
    for (int i = 0; i < dims; ++i) {
        base[i] = static_cast<int>(std::floor(x[i]));
        if (base[i] >= resolution_) base[i] = resolution_;
        frac[i] = x[i] - base[i];
    }
    std::vector<int> order(dims);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });

    std::vector<int> vertex = base;
    double w0 = 1.0 - frac[order[0]];
    if (w0 > 0.0) out.push_back({index_of(vertex), w0});
    for (int k = 0; k < dims; ++k) {
        vertex[order[k]] += 1;
        const double next = k + 1 < dims ? frac[order[k + 1]] : 0.0;
        const double w = frac[order[k]] - next;
        if (w > 0.0) out.push_back({index_of(vertex), w});
    }
}

void BeliefGridSolver::solve(double tol) {
    const PomdpModel& m = *model_;
    const int nu = m.num_actions();
    const int ny = m.num_observations();
    const int nx = m.num_states();
    const double beta = m.discount();
    const std::size_t npts = points_.size();

    // Precompute stage costs, observation probabilities and interpolation stencils.
    const std::size_t slots = static_cast<std::size_t>(nx);
    std::vector<double> stage(npts * nu, 0.0);
    std::vector<double> obs_prob(npts * nu * ny, 0.0);
    std::vector<Vertex> stencil(npts * nu * ny * slots, Vertex{0, 0.0});
    std::vector<Vertex> scratch;
    std::vector<double> next(nx);
    for (std::size_t g = 0; g < npts; ++g) {
        const Belief& z = points_[g];
        for (int u = 0; u < nu; ++u) {
            double c = 0.0;
            for (int x = 0; x < nx; ++x) c += z[x] * m.cost(x, u);
            stage[g * nu + u] = c;
            std::fill(next.begin(), next.end(), 0.0);
            for (int x = 0; x < nx; ++x)
                for (int x2 = 0; x2 < nx; ++x2) next[x2] += z[x] * m.transition(x, u, x2);
            for (int y = 0; y < ny; ++y) {
                std::vector<double> post(nx);
                double p = 0.0;
                for (int x2 = 0; x2 < nx; ++x2) {
                    post[x2] = next[x2] * m.channel(x2, y);
                    p += post[x2];
                }
                const std::size_t k = (g * nu + u) * ny + y;
                obs_prob[k] = p;
                if (!(p > 0.0)) continue;
                for (double& v : post) v /= p;
                interpolation_vertices(post, scratch);
                std::copy(scratch.begin(), scratch.end(), stencil.begin() + static_cast<std::ptrdiff_t>(k * slots));
            }
        }
    }

    const double threshold = tol * (1.0 - beta) / (2.0 * beta);
    std::vector<double> updated(npts);
    for (int sweep = 0; sweep < 100'000; ++sweep) {
        double diff = 0.0;
        for (std::size_t g = 0; g < npts; ++g) {
            double best = std::numeric_limits<double>::infinity();
            for (int u = 0; u < nu; ++u) {
                double q = stage[g * nu + u];
                for (int y = 0; y < ny; ++y) {
                    const std::size_t k = (g * nu + u) * ny + y;
                    if (!(obs_prob[k] > 0.0)) continue;
                    double v = 0.0;
                    for (std::size_t s = 0; s < slots; ++s) {
                        const Vertex& vx = stencil[k * slots + s];
                        if (vx.weight != 0.0) v += vx.weight * values_[vx.index];
                    }
                    q += beta * obs_prob[k] * v;
                }
                best = std::min(best, q);
            }
            updated[g] = best;
            diff = std::max(diff, std::abs(best - values_[g]));
        }
        values_.swap(updated);
        if (diff < threshold) break;
    }
}

double BeliefGridSolver::value(const Belief& posterior) const {
    std::vector<Vertex> verts;
    interpolation_vertices(posterior.weights(), verts);
    double v = 0.0;
    for (const auto& vx : verts) v += vx.weight * values_[vx.index];
    return v;
}

double BeliefGridSolver::prior_value(const Belief& prior) const {
    double total = 0.0;
    for (int y = 0; y < model_->num_observations(); ++y) {
        double p = 0.0;
        for (int x = 0; x < model_->num_states(); ++x) p += prior[x] * model_->channel(x, y);
        if (!(p > 0.0)) continue;
        total += p * value(measurement_update(*model_, prior, y));
    }
    return total;
}

GridOptimum belief_grid_optimal(const PomdpModel& model, const Belief& mu, int bins) {
    BeliefGridSolver coarse(model, bins);
    coarse.solve();
    BeliefGridSolver fine(model, 2 * bins - 1);
    fine.solve();
    const double a = coarse.prior_value(mu);
    return {a, std::abs(fine.prior_value(mu) - a)};
}

double robustness_bound(double cost_sup, double discount, double L) {
    return 2.0 * cost_sup * L / ((1.0 - discount) * (1.0 - discount));
}

double value_bound(double cost_sup, double discount, double L) {
    return cost_sup * L / ((1.0 - discount) * (1.0 - discount));
}

BoundReport bound_report(const PomdpModel& model, const Belief& pi_star, const std::vector<int>& window_lengths,
                         const ExplorationPolicy& warmup, const BoundOptions& options) {
    if (window_lengths.empty()) throw ValidationError("bound report needs at least one window length");
    BeliefGridSolver coarse(model, options.grid_bins);
    coarse.solve(options.vi_tol);
    BeliefGridSolver fine(model, 2 * options.grid_bins - 1);
    fine.solve(options.vi_tol);

    BoundReport report;
    for (int n : window_lengths) {
        BoundRow row;
        row.N = n;
        const FiniteMdp mdp = build_approx_mdp(model, pi_star, n);
        const ValueIterationResult vi = value_iteration(mdp, options.vi_tol);
        row.policy_value = evaluate_window_policy(model, vi.policy, warmup);

        const WindowCodec codec(n, model);
        const std::int64_t width = codec.size();
        const auto joint = warmup_distribution(model, n, warmup);
        double coarse_opt = 0.0;
        double fine_opt = 0.0;
        for (std::int64_t code = 0; code < width; ++code) {
            double p = 0.0;
            for (int x = 0; x < model.num_states(); ++x) p += joint[x * width + code];
            if (!(p > 0.0)) continue;
            const Belief post = window_posterior(model, model.prior(), codec.decode(code));
            const double vc = coarse.value(post);
            const double vf = fine.value(post);
            coarse_opt += p * vc;
            fine_opt += p * vf;
            row.value_gap = std::max(row.value_gap, std::abs(vi.value[code] - vc));
            row.value_gap_delta = std::max(row.value_gap_delta, std::abs(vc - vf));
        }
        row.optimal_estimate = coarse_opt;
        row.grid_delta = std::abs(fine_opt - coarse_opt);
        row.loss = row.policy_value - row.optimal_estimate;
        row.L = estimate_L(model, pi_star, n, options.L_resolution);
        row.bound_robust = robustness_bound(model.cost_sup(), model.discount(), row.L);
        row.bound_value = value_bound(model.cost_sup(), model.discount(), row.L);
        report.rows.push_back(row);
    }
    report.surrogate_optimum = report.rows.front().policy_value;
    for (const auto& r : report.rows) report.surrogate_optimum = std::min(report.surrogate_optimum, r.policy_value);
    for (auto& r : report.rows) r.surrogate_loss = r.policy_value - report.surrogate_optimum;
    return report;
}

std::string bounds_to_csv(const BoundReport& report) {
    std::string out = "N,loss,L,bound_robust,bound_value\n";
    for (const auto& r : report.rows) {
        out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.N, r.loss, r.L, r.bound_robust, r.bound_value);
    }
    return out;
}

nlohmann::json to_json(const BoundReport& report) {
    auto rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"N", r.N},
                        {"policy_value", r.policy_value},
                        {"optimal_estimate", r.optimal_estimate},
                        {"grid_delta", r.grid_delta},
                        {"loss", r.loss},
                        {"surrogate_loss", r.surrogate_loss},
                        {"L", r.L},
                        {"bound_robust", r.bound_robust},
                        {"bound_value", r.bound_value},
                        {"value_gap", r.value_gap},
                        {"value_gap_delta", r.value_gap_delta}});
    }
    return {{"rows", rows}, {"surrogate_optimum", report.surrogate_optimum}};
}

}  // namespace fimeq
