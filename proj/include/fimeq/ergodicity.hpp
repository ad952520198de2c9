#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "fimeq/model.hpp"

namespace fimeq {

/// Hidden-chain transition matrix when actions are drawn from the policy:
/// P[x][x'] = sum_u sigma_u T[x][u][x'].
Eigen::MatrixXd averaged_chain(const PomdpModel& model, const ExplorationPolicy& policy);

/// Number of closed communicating classes of a row-stochastic matrix.
int count_recurrent_classes(const Eigen::MatrixXd& chain);

/// Invariant distribution via a dense linear solve (one balance equation
/// replaced by the normalization row). Requires a single recurrent class.
Belief stationary_by_linear_solve(const Eigen::MatrixXd& chain);

/// Power iteration on the lazy chain (I + P)/2, which shares the invariant
/// distribution and is aperiodic.
Belief stationary_by_power_iteration(const Eigen::MatrixXd& chain, double tol = 1e-13,
                                     long max_steps = 1'000'000);

/// pi* of the hidden chain under exploration. Throws NonUniqueInvariant when
/// the averaged chain has more than one recurrent class. The linear solve is
/// cross-checked against power iteration.
Belief stationary_distribution(const PomdpModel& model, const ExplorationPolicy& policy);

/// True iff every entry is strictly positive.
bool positivity_check(const Belief& pi_star);

/// min over row pairs of sum_j min(K[x][j], K[y][j]). One-row matrices give 1.
double dobrushin(const Eigen::MatrixXd& kernel);

struct AlphaCoefficient {
    double delta_T;  // inf_u dobrushin(T(.|., u))
    double delta_O;  // dobrushin(O)
    double alpha;    // (1 - delta_T)(2 - delta_O)
};

AlphaCoefficient alpha_coefficient(const PomdpModel& model);

/// Points of the simplex whose coordinates are multiples of 1/resolution.
/// Contains every Dirac vertex; grids at resolution r are contained in grids
/// at any multiple of r.
std::vector<Belief> simplex_grid(int num_states, int resolution);

/// Lower estimate of the loss constant
///   L = sup_pi sup_w || psi(pi, w) - psi(pi*, w) ||_TV
/// taking pi over simplex_grid(|X|, grid_resolution) and w over every window
/// of length N realizable under both priors. Uses the L1 convention, so the
/// value lies in [0, 2].
double estimate_L(const PomdpModel& model, const Belief& pi_star, int window_length, int grid_resolution);

struct StabilityReport {
    Belief pi_star;
    bool pi_star_positive = false;
    double delta_T = 0.0;
    double delta_O = 0.0;
    double alpha = 0.0;
    std::map<int, double> L_by_N;
};

StabilityReport stability_report(const PomdpModel& model, const ExplorationPolicy& policy,
                                 const std::vector<int>& window_lengths, int grid_resolution);

nlohmann::json to_json(const StabilityReport& report);

}  // namespace fimeq
