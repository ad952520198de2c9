// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <fmt/format.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "fimeq/approx_mdp.hpp"
#include "fimeq/ergodicity.hpp"
#include "fimeq/evaluation.hpp"
#include "fimeq/experiment.hpp"
#include "fimeq/filter.hpp"
#include "fimeq/qlearning.hpp"
#include "oracles.hpp"

using namespace fimeq;
namespace fs = std::filesystem;

namespace {

const std::string kModels = std::string(FIMEQ_SOURCE_DIR) + "/models/";
const char* kModelFiles[] = {"machine_repair_1.json", "machine_repair_2.json", "machine_repair_3.json"};

struct Outcome {
    bool pass;
    std::string detail;
};

PomdpModel bundled(int i) { return load_model(kModels + kModelFiles[i]); }

Belief pi_star_of(const PomdpModel& m) { return stationary_distribution(m, ExplorationPolicy::uniform(m.num_actions())); }

// Tolerances pinned by the criteria.
constexpr double kDobrushinTol = 1e-15;
constexpr double kAlphaTol = 1e-12;
constexpr double kSupErrorTol = 0.1;
constexpr std::int64_t kLearnSteps = 2'000'000;
constexpr std::int64_t kSnapshotEvery = 10'000;
constexpr std::int64_t kMinVisits = 1000;
constexpr double kBoundSlack = 1e-3;
constexpr double kPsiTol = 1e-10;
constexpr int kPsiSamples = 1000;
constexpr int kMcModels = 20;
constexpr std::int64_t kMcEpisodes = 1'000'000;
constexpr int kGridBins = 2001;
// Losses at or below this are indistinguishable from zero given the value
// iteration and grid tolerances, so ratios between them carry no rate.
constexpr double kLossResolution = 1e-6;

Outcome criterion1() {
    Eigen::MatrixXd k(3, 3);
    k << 1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.5, 0.5, 0.75, 0.0, 0.25;
    const double d = dobrushin(k);
    return {std::abs(d - 0.25) <= kDobrushinTol, fmt::format("delta = {:.17g}", d)};
}

Outcome criterion2() {
    const AlphaCoefficient a = alpha_coefficient(bundled(2));
    const bool ok = std::abs(a.delta_T - 0.5) <= kAlphaTol && std::abs(a.delta_O - 0.6) <= kAlphaTol &&
                    std::abs(a.alpha - 0.7) <= kAlphaTol;
    return {ok, fmt::format("delta_T = {:.17g}, delta_O = {:.17g}, alpha = {:.17g}", a.delta_T, a.delta_O, a.alpha)};
}

struct LearnRun {
    FiniteMdp mdp;
    ValueIterationResult vi;
    LearnResult learned;
};

LearnRun learn(const PomdpModel& m, int n, std::uint64_t seed) {
    FiniteMdp mdp = build_approx_mdp(m, pi_star_of(m), n);
    ValueIterationResult vi = value_iteration(mdp, 1e-10);
    const LearningReference ref = make_reference(mdp, vi.value);
    LearnConfig cfg{n, kLearnSteps, seed, ExplorationPolicy::uniform(m.num_actions()), kSnapshotEvery};
    LearnResult learned = run_q_learning(m, cfg, &ref);
    return {std::move(mdp), std::move(vi), std::move(learned)};
}

bool tail_nonincreasing(const LearningCurve& curve) {
    const std::size_t tail = std::max<std::size_t>(curve.size() / 10, 5);
    const std::size_t start = curve.size() - tail;
    double prev = INFINITY;
    for (std::size_t i = start; i + 5 <= curve.size(); ++i) {
        double avg = 0.0;
        for (std::size_t k = i; k < i + 5; ++k) avg += curve[k].sup_error;
        avg /= 5.0;
        if (avg > prev) return false;
        prev = avg;
    }
    return true;
}

Outcome criterion3() {
    const PomdpModel m = bundled(2);
    bool ok = true;
    std::string detail;
    for (int n = 0; n <= 2; ++n) {
        const LearnRun r = learn(m, n, 20260101 + n);
        const double final_error = r.learned.curve.back().sup_error;
        const bool tail = tail_nonincreasing(r.learned.curve);
        ok = ok && final_error < kSupErrorTol && tail;
        detail += fmt::format("N={}: sup error {:.4f} (< {}: {}), tail nonincreasing: {}; ", n, final_error,
                              kSupErrorTol, final_error < kSupErrorTol ? "yes" : "no", tail ? "yes" : "no");
    }
    return {ok, detail};
}

Outcome criterion4() {
    bool ok = true;
    std::string detail;
    for (int i = 0; i < 3; ++i) {
        const PomdpModel m = bundled(i);
        for (int n = 0; n <= 2; ++n) {
            const LearnRun r = learn(m, n, 7 + 10 * i + n);
            const WindowPolicy learned = greedy_policy(r.learned.q, n);
            int compared = 0;
            int disagree = 0;
            for (std::int64_t s = 0; s < r.mdp.num_states(); ++s) {
                if (!r.mdp.reachable(s) || r.learned.q.state_visits(s) < kMinVisits) continue;
                ++compared;
                disagree += learned.action[s] != r.vi.policy.action[s];
            }
            ok = ok && disagree == 0 && compared > 0;
            detail += fmt::format("{} N={}: {}/{} agree; ", kModelFiles[i], n, compared - disagree, compared);
        }
    }
    return {ok, detail};
}

std::map<int, BoundReport> bound_reports() {
    std::map<int, BoundReport> out;
    for (int i = 0; i < 3; ++i) {
        const PomdpModel m = bundled(i);
        out[i] = bound_report(m, pi_star_of(m), {0, 1, 2, 3}, ExplorationPolicy::uniform(2),
                              BoundOptions{kGridBins, 100, 1e-9});
    }
    return out;
}

Outcome criterion5(const std::map<int, BoundReport>& reports) {
    bool ok = true;
    std::string detail;
    for (const auto& [i, rep] : reports) {
        for (const auto& row : rep.rows) {
            const bool robust = row.loss <= row.bound_robust + kBoundSlack;
            const bool value = row.value_gap <= row.bound_value + row.value_gap_delta + kBoundSlack;
            ok = ok && robust && value;
            if (!robust || !value) {
                detail += fmt::format("{} N={} violates (loss {:.3e} vs {:.3e}, gap {:.3e} vs {:.3e}); ",
                                      kModelFiles[i], row.N, row.loss, row.bound_robust, row.value_gap, row.bound_value);
            }
        }
        double worst_loss = 0.0;
        double worst_gap = 0.0;
        for (const auto& row : rep.rows) {
            worst_loss = std::max(worst_loss, row.loss);
            worst_gap = std::max(worst_gap, row.value_gap);
        }
        detail += fmt::format("{}: max loss {:.3e}, max value gap {:.3e}; ", kModelFiles[i], worst_loss, worst_gap);
    }
    return {ok, detail};
}

Outcome criterion6(const std::map<int, BoundReport>& reports) {
    bool ok = true;
    std::string detail;
    for (const auto& [i, rep] : reports) {
        bool mono = true;
        for (std::size_t k = 1; k < rep.rows.size(); ++k) mono = mono && rep.rows[k].loss <= rep.rows[k - 1].loss + kLossResolution;
        ok = ok && mono;
        detail += fmt::format("{} loss nonincreasing: {}; ", kModelFiles[i], mono ? "yes" : "no");
    }
    const auto& rows = reports.at(2).rows;
    bool rate = true;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const double l_ratio = rows[k].L / rows[k - 1].L;
        if (rows[k - 1].loss <= kLossResolution) {
            rate = false;
            detail += fmt::format("N={}->{}: L ratio {:.4f}, loss ratio undefined (losses {:.2e}, {:.2e} at or below "
                                  "{:.0e}); ",
                                  rows[k - 1].N, rows[k].N, l_ratio, rows[k - 1].loss, rows[k].loss, kLossResolution);
            continue;
        }
        const double loss_ratio = rows[k].loss / rows[k - 1].loss;
        rate = rate && l_ratio <= loss_ratio;
        detail += fmt::format("N={}->{}: L ratio {:.4f}, loss ratio {:.4f}; ", rows[k - 1].N, rows[k].N, l_ratio, loss_ratio);
    }
    ok = ok && rate;
    return {ok, detail};
}

Outcome criterion7() {
    std::mt19937_64 rng(7007);
    std::uniform_int_distribution<int> size(1, 4);
    std::uniform_int_distribution<int> len(0, 3);
    int samples = 0;
    int attempts = 0;
    double worst_psi = 0.0;
    double worst_predictive = -INFINITY;
    while (samples < kPsiSamples && attempts < 100 * kPsiSamples) {
        ++attempts;
        const PomdpModel m = oracle::random_model(rng, size(rng), size(rng), size(rng), 0.2);
        const int n = len(rng);
        const WindowCodec codec(n, m);
        const WindowState w = codec.decode(std::uniform_int_distribution<std::int64_t>(0, codec.size() - 1)(rng));
        const Belief other = Belief::normalized(oracle::random_row(rng, m.num_states(), 0.2));
        const auto ref = oracle::joint_posterior(m, m.prior().weights(), w);
        const auto got = try_window_posterior(m, m.prior(), w);
        const auto alt = try_window_posterior(m, other, w);
        if (ref.has_value() != got.has_value()) return {false, "realizability disagrees with enumeration"};
        if (!ref || !alt) continue;
        ++samples;
        worst_psi = std::max(worst_psi, oracle::l1(ref->posterior, got->posterior.weights()));
        const double post_gap = tv_distance(got->posterior, alt->posterior);
        for (int u = 0; u < m.num_actions(); ++u) {
            const double pred_gap = tv_distance(obs_predictive(m, m.prior(), w, u), obs_predictive(m, other, w, u));
            worst_predictive = std::max(worst_predictive, pred_gap - post_gap);
        }
    }
    const bool ok = samples == kPsiSamples && worst_psi < kPsiTol && worst_predictive <= 1e-14;
    return {ok, fmt::format("{} samples, max TV to enumeration {:.2e}, max (predictive gap - posterior gap) {:.2e}",
                            samples, worst_psi, worst_predictive)};
}

Outcome criterion8() {
    std::mt19937_64 rng(8008);
    std::uniform_real_distribution<double> beta(0.5, 0.8);
    int agree = 0;
    double worst = 0.0;
    for (int i = 0; i < kMcModels; ++i) {
        const PomdpModel m = oracle::random_model(rng, 2 + i % 2, 2, 2, 0.15, beta(rng));
        const int n = i % 3;
        WindowPolicy p;
        p.window_length = n;
        const WindowCodec codec(n, m);
        for (std::int64_t s = 0; s < codec.size(); ++s) {
            p.action.push_back(static_cast<int>(rng() % 2));
            p.defined.push_back(1);
        }
        const ExplorationPolicy sigma = ExplorationPolicy::uniform(2);
        const double exact = evaluate_window_policy(m, p, sigma);
        const MonteCarloEstimate mc = monte_carlo_window_policy(m, p, sigma, kMcEpisodes, 1000 + i);
        const double z = std::abs(mc.mean - exact) / mc.standard_error;
        worst = std::max(worst, z);
        agree += z < 3.0;
    }
    return {agree == kMcModels, fmt::format("{}/{} within 3 standard errors (max |z| = {:.2f})", agree, kMcModels, worst)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion9() {
    const fs::path dir = fs::temp_directory_path() / "fimeq_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    nlohmann::json cfg{{"model", kModels + "machine_repair_3.json"},
                       {"N_list", {0, 1, 2}},
                       {"learn", {{"total_steps", 200000}, {"seed", 99}, {"snapshot_every", 5000}}},
                       {"grid_bins", 401},
                       {"L_resolution", 50}};
    std::ofstream(dir / "config.json") << cfg.dump(2);
    for (const char* run : {"a", "b"}) {
        const std::string cmd = fmt::format("{} run {} --out {} >/dev/null 2>&1", FIMEQ_CLI, (dir / "config.json").string(),
                                            (dir / run).string());
        const int status = std::system(cmd.c_str());
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, fmt::format("run {} failed", run)};
    }
    int compared = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a")) {
        if (entry.path().extension() != ".csv") continue;
        const fs::path twin = dir / "b" / entry.path().filename();
        if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) {
            return {false, fmt::format("{} differs", entry.path().filename().string())};
        }
        ++compared;
    }
    return {compared == 4, fmt::format("{} CSV files byte-identical across two runs", compared)};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        failures += !o.pass;
        fmt::print("[{}] criterion {}: {} | {}\n", o.pass ? "PASS" : "FAIL", id, name, o.detail);
        std::fflush(stdout);
    };

    report(1, "Dobrushin coefficient of the 3x3 example", criterion1);
    report(2, "alpha criterion on repair3", criterion2);
    report(3, "Q-learning convergence on repair3", criterion3);
    report(4, "greedy learned policy matches value iteration", criterion4);
    std::map<int, BoundReport> reports;
    std::string bounds_error;
    try {
        reports = bound_reports();
    } catch (const std::exception& e) {
        bounds_error = e.what();
    }
    auto with_reports = [&](auto fn) {
        return [&, fn]() -> Outcome {
            if (!bounds_error.empty()) return {false, "bound report failed: " + bounds_error};
            return fn(reports);
        };
    };
    report(5, "bound inequalities", with_reports(criterion5));
    report(6, "rate domination", with_reports(criterion6));
    report(7, "window posterior vs joint enumeration", criterion7);
    report(8, "linear-solve vs Monte Carlo policy values", criterion8);
    report(9, "end-to-end determinism", criterion9);
    fmt::print("{} of 9 criteria passed\n", 9 - failures);
    return failures == 0 ? 0 : 1;
}
