#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fimeq/model.hpp"

namespace fimeq {

/// Joint law of (X_N, I_N^N) when the first N actions follow the warmup
/// policy and X_0 ~ prior. Entry [x * W + code], W = |Y|^{N+1} |U|^N.
std::vector<double> warmup_distribution(const PomdpModel& model, int window_length,
                                        const ExplorationPolicy& warmup);

/// E[ sum_{k >= N} beta^{k-N} c(x_k, u_k) ] for a window policy whose first N
/// actions follow `warmup`. Solved exactly on the joint chain over
/// (hidden state, window) restricted to states reachable from the time-N
/// distribution. Throws PolicyGap if a reachable window has no defined action.
double evaluate_window_policy(const PomdpModel& model, const WindowPolicy& policy,
                              const ExplorationPolicy& warmup);

struct MonteCarloEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    std::int64_t episodes = 0;
    int horizon = 0;
};

/// Horizon h with beta^h ||c||_inf / (1 - beta) < truncation.
int truncation_horizon(const PomdpModel& model, double truncation = 1e-4);

/// Simulated counterpart of evaluate_window_policy on the Evaluation stream.
MonteCarloEstimate monte_carlo_window_policy(const PomdpModel& model, const WindowPolicy& policy,
                                             const ExplorationPolicy& warmup, std::int64_t episodes,
                                             std::uint64_t seed);

/// Discounted-cost value iteration on a uniform grid of the belief simplex
/// (|X| <= 3). Bayes successors between grid points are evaluated by
/// barycentric interpolation on the Freudenthal triangulation of the grid.
class BeliefGridSolver {
public:
    BeliefGridSolver(const PomdpModel& model, int bins);

    /// Runs value iteration until the value is within tol of the grid fixed point.
    void solve(double tol = 1e-9);

    int bins() const { return bins_; }
    std::size_t num_points() const { return points_.size(); }

    /// Interpolated optimal value at a posterior belief (state after the
    /// current observation has been absorbed).
    double value(const Belief& posterior) const;

    /// Optimal cost from a prior on X_0 before y_0 is seen:
    /// sum_y P(y | prior) value(update(prior, y)).
    double prior_value(const Belief& prior) const;

    const std::vector<double>& grid_values() const { return values_; }
    const std::vector<Belief>& grid_points() const { return points_; }

private:
    struct Vertex {
        std::int64_t index;
        double weight;
    };
    std::int64_t index_of(const std::vector<int>& cumulative) const;
    void interpolation_vertices(std::span<const double> belief, std::vector<Vertex>& out) const;

    const PomdpModel* model_;
    int bins_;
    int resolution_;
    std::vector<Belief> points_;
    std::vector<double> values_;
};

struct GridOptimum {
    double value = 0.0;
    /// |value at bins - value at the nested refinement 2 bins - 1|
    double refinement_delta = 0.0;
};

/// Optimal discounted cost from prior mu estimated on the belief grid.
GridOptimum belief_grid_optimal(const PomdpModel& model, const Belief& mu, int bins);

struct BoundOptions {
    int grid_bins = 2001;
    int L_resolution = 100;
    double vi_tol = 1e-9;
};

struct BoundRow {
    int N = 0;
    double policy_value = 0.0;      // J_beta(mu, T, gamma^N), cost from time N
    double optimal_estimate = 0.0;  // E[J*(psi(mu, I_N))] on the belief grid
    double grid_delta = 0.0;        // refinement delta of optimal_estimate
    double loss = 0.0;              // policy_value - optimal_estimate
    double surrogate_loss = 0.0;    // policy_value - min over N of policy_value
    double L = 0.0;
    double bound_robust = 0.0;      // 2 ||c|| L / (1 - beta)^2
    double bound_value = 0.0;       // ||c|| L / (1 - beta)^2
    double value_gap = 0.0;         // max over realized windows of |J^N(I) - J*(psi(mu, I))|
    double value_gap_delta = 0.0;   // refinement delta at the same windows
};

struct BoundReport {
    std::vector<BoundRow> rows;
    double surrogate_optimum = 0.0;
};

double robustness_bound(double cost_sup, double discount, double L);
double value_bound(double cost_sup, double discount, double L);

/// Per-N comparison of the learned-policy loss with the filter-stability
/// bounds. gamma^N is the greedy policy of value iteration on the
/// approximate MDP built at pi*; warmup actions follow `warmup`.
BoundReport bound_report(const PomdpModel& model, const Belief& pi_star, const std::vector<int>& window_lengths,
                         const ExplorationPolicy& warmup, const BoundOptions& options = {});

/// CSV with columns N,loss,L,bound_robust,bound_value.
std::string bounds_to_csv(const BoundReport& report);
nlohmann::json to_json(const BoundReport& report);

}  // namespace fimeq
