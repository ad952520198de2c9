#include "fimeq/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <future>

#include "fimeq/approx_mdp.hpp"
#include "fimeq/qlearning.hpp"

namespace fimeq {

namespace fs = std::filesystem;

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::Solve:
            return "solve";
        case Stage::Learn:
            return "learn";
        case Stage::Bounds:
            return "bounds";
        case Stage::Evaluate:
            return "evaluate";
    }
    return "unknown";
}

namespace {

Stage parse_stage(const std::string& s) {
    for (Stage st : {Stage::Solve, Stage::Learn, Stage::Bounds, Stage::Evaluate})
        if (stage_name(st) == s) return st;
    throw ParseError(fmt::format("unknown stage '{}'", s));
}

fs::path resolve(const fs::path& p, const fs::path& base) {
    return p.is_absolute() || base.empty() ? p : (base / p).lexically_normal();
}

bool has_stage(const ExperimentConfig& cfg, Stage s) {
    return std::find(cfg.stages.begin(), cfg.stages.end(), s) != cfg.stages.end();
}

void write_file(const fs::path& path, const std::string& text, std::vector<fs::path>& files) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << text;
    if (!out) throw Error(fmt::format("write to '{}' failed", path.string()));
    files.push_back(path);
}

template <class F>
auto in_stage(Stage s, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage_name(s), e.what());
    }
}

struct WindowRun {
    int N = 0;
    std::optional<ValueIterationResult> solution;
    std::optional<LearnResult> learned;
    std::optional<WindowPolicy> learned_policy;
    nlohmann::json evaluation;
};

WindowRun run_window(const PomdpModel& model, const Belief& pi_star, const ExplorationPolicy& exploration,
                     const ExperimentConfig& cfg, int n) {
    WindowRun run;
    run.N = n;
    const bool learn = has_stage(cfg, Stage::Learn);
    const bool evaluate = has_stage(cfg, Stage::Evaluate);
    if (!(has_stage(cfg, Stage::Solve) || learn || evaluate)) return run;

    std::optional<FiniteMdp> mdp;
    in_stage(Stage::Solve, [&] {
        mdp.emplace(build_approx_mdp(model, pi_star, n));
        run.solution = value_iteration(*mdp, cfg.vi_tol);
    });

    if (learn) {
        in_stage(Stage::Learn, [&] {
            LearnConfig lc{n, cfg.total_steps, cfg.seed, exploration, cfg.snapshot_every};
            const LearningReference ref = make_reference(*mdp, run.solution->value);
            run.learned = run_q_learning(model, lc, &ref);
            run.learned_policy = greedy_policy(run.learned->q, n);
        });
    }

    if (evaluate) {
        in_stage(Stage::Evaluate, [&] {
            nlohmann::json e;
            e["N"] = n;
            e["solution_policy_value"] = evaluate_window_policy(model, run.solution->policy, exploration);
            if (run.learned_policy) {
                try {
                    e["learned_policy_value"] = evaluate_window_policy(model, *run.learned_policy, exploration);
                } catch (const PolicyGap& gap) {
                    e["learned_policy_value"] = nullptr;
                    e["learned_policy_gap"] = gap.what();
                }
                std::int64_t compared = 0;
                std::int64_t agree = 0;
                for (std::int64_t s = 0; s < mdp->num_states(); ++s) {
                    if (!mdp->reachable(s) || run.learned->q.state_visits(s) == 0) continue;
                    ++compared;
                    if (run.learned_policy->action[s] == run.solution->policy.action[s]) ++agree;
                }
                e["visited_windows"] = compared;
                e["agreeing_windows"] = agree;
            }
            run.evaluation = std::move(e);
        });
    }
    return run;
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& j, const fs::path& base_dir) {
    ExperimentConfig cfg;
    try {
        cfg.model_path = resolve(j.at("model").get<std::string>(), base_dir);
        cfg.N_list = j.at("N_list").get<std::vector<int>>();
        if (j.contains("learn")) {
            const auto& l = j.at("learn");
            cfg.total_steps = l.value("total_steps", cfg.total_steps);
            cfg.seed = l.value("seed", cfg.seed);
            cfg.exploration = l.value("exploration", cfg.exploration);
            cfg.snapshot_every = l.value("snapshot_every", cfg.snapshot_every);
        }
        cfg.grid_bins = j.value("grid_bins", cfg.grid_bins);
        cfg.L_resolution = j.value("L_resolution", cfg.L_resolution);
        cfg.vi_tol = j.value("vi_tol", cfg.vi_tol);
        cfg.output_dir = resolve(j.value("output_dir", cfg.output_dir.string()), base_dir);
        if (j.contains("stages")) {
            cfg.stages.clear();
            for (const auto& s : j.at("stages")) cfg.stages.push_back(parse_stage(s.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("malformed config: {}", e.what()));
    }
    if (cfg.N_list.empty()) throw ValidationError("N_list must be nonempty");
    for (int n : cfg.N_list)
        if (n < 0) throw ValidationError(fmt::format("window length {} is negative", n));
    if (cfg.grid_bins < 2) throw ValidationError("grid_bins must be at least 2");
    if (cfg.L_resolution < 1) throw ValidationError("L_resolution must be positive");
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw MissingInput(path);
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("'{}': {}", path.string(), e.what()));
    }
    return parse_config(j, path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
    std::vector<std::string> stages;
    for (Stage s : cfg.stages) stages.push_back(stage_name(s));
    nlohmann::json learn{{"total_steps", cfg.total_steps}, {"seed", cfg.seed}, {"snapshot_every", cfg.snapshot_every}};
    if (!cfg.exploration.empty()) learn["exploration"] = cfg.exploration;
    return {{"model", cfg.model_path.string()},   {"N_list", cfg.N_list},
            {"learn", learn},                     {"grid_bins", cfg.grid_bins},
            {"L_resolution", cfg.L_resolution},   {"vi_tol", cfg.vi_tol},
            {"output_dir", cfg.output_dir.string()}, {"stages", stages}};
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    if (!fs::exists(cfg.model_path)) throw MissingInput(cfg.model_path);
    const PomdpModel model = in_stage(Stage::Solve, [&] { return load_model(cfg.model_path); });
    const ExplorationPolicy exploration = cfg.exploration.empty()
                                              ? ExplorationPolicy::uniform(model.num_actions())
                                              : ExplorationPolicy(cfg.exploration);
    if (exploration.num_actions() != model.num_actions()) {
        throw ValidationError("exploration policy size does not match the action set");
    }

    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) throw Error(fmt::format("cannot create output directory '{}': {}", cfg.output_dir.string(), ec.message()));

    ExperimentReport report;
    report.stability = in_stage(Stage::Solve, [&] {
        return stability_report(model, exploration, cfg.N_list, cfg.L_resolution);
    });
    const Belief& pi_star = report.stability.pi_star;

    std::vector<std::future<WindowRun>> pending;
    for (int n : cfg.N_list) {
        pending.push_back(std::async(std::launch::async, run_window, std::cref(model), std::cref(pi_star),
                                     std::cref(exploration), std::cref(cfg), n));
    }
    std::future<BoundReport> bounds;
    if (has_stage(cfg, Stage::Bounds)) {
        bounds = std::async(std::launch::async, [&] {
            return in_stage(Stage::Bounds, [&] {
                return bound_report(model, pi_star, cfg.N_list, exploration,
                                    BoundOptions{cfg.grid_bins, cfg.L_resolution, cfg.vi_tol});
            });
        });
    }

    std::vector<WindowRun> runs;
    std::exception_ptr first_error;
    for (auto& f : pending) {
        try {
            runs.push_back(f.get());
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (bounds.valid()) {
        try {
            report.bounds = bounds.get();
        } catch (...) {
            if (!first_error) first_error = std::current_exception();
        }
    }
    if (first_error) std::rethrow_exception(first_error);

    auto& files = report.files;
    const fs::path& out = cfg.output_dir;
    write_file(out / "stability.json", to_json(report.stability).dump(2) + "\n", files);
    nlohmann::json evaluation = nlohmann::json::array();
    for (const WindowRun& r : runs) {
        if (r.solution && has_stage(cfg, Stage::Solve)) {
            nlohmann::json sol{{"window_length", r.N},
                               {"iterations", r.solution->iterations},
                               {"qtable", qtable_to_json(r.solution->q, r.N, model, &r.solution->value)},
                               {"policy", policy_to_json(r.solution->policy, model)}};
            write_file(out / fmt::format("solution_N{}.json", r.N), sol.dump(2) + "\n", files);
        }
        if (r.learned) {
            write_file(out / fmt::format("curve_N{}.csv", r.N), curve_to_csv(r.learned->curve), files);
            write_file(out / fmt::format("qtable_N{}.json", r.N),
                       qtable_to_json(r.learned->q, r.N, model, &r.solution->value).dump(2) + "\n", files);
            write_file(out / fmt::format("policy_N{}.json", r.N),
                       policy_to_json(*r.learned_policy, model).dump(2) + "\n", files);
        }
        if (!r.evaluation.is_null()) evaluation.push_back(r.evaluation);
    }
    if (!evaluation.empty()) write_file(out / "evaluation.json", evaluation.dump(2) + "\n", files);
    if (report.bounds) {
        write_file(out / "bounds.csv", bounds_to_csv(*report.bounds), files);
        write_file(out / "bounds.json", to_json(*report.bounds).dump(2) + "\n", files);
    }
    return report;
}

namespace {

PomdpModel machine_repair(double eps, double kappa, double theta, double repair_cost, double error_cost,
                          std::vector<std::vector<std::vector<double>>> transition) {
    PomdpData d;
    d.states = {"broken", "working"};
    d.actions = {"wait", "repair"};
    d.observations = {"looks_broken", "looks_working"};
    if (transition.empty()) {
        transition = {{{1.0, 0.0}, {1.0 - kappa, kappa}}, {{theta, 1.0 - theta}, {0.0, 1.0}}};
    }
    d.transition = std::move(transition);
    d.channel = {{1.0 - eps, eps}, {eps, 1.0 - eps}};
    d.cost = {{error_cost, repair_cost + error_cost}, {0.0, repair_cost}};
    d.discount = 0.8;
    d.prior = {0.5, 0.5};
    return PomdpModel(std::move(d));
}

}  // namespace

PomdpModel gen_example(const std::string& name) {
    if (name == "repair1") return machine_repair(0.3, 0.8, 0.1, 5.0, 1.0, {});
    if (name == "repair2") return machine_repair(0.1, 0.9, 0.3, 5.0, 1.0, {});
    if (name == "repair3") {
        return machine_repair(0.3, 0.0, 0.0, 3.0, 1.0,
                              {{{0.9, 0.1}, {0.6, 0.4}}, {{0.4, 0.6}, {0.1, 0.9}}});
    }
    throw ValidationError(fmt::format("unknown example '{}' (expected repair1, repair2 or repair3)", name));
}

PomdpModel perfect_channel_example() {
    PomdpData d;
    const PomdpModel base = gen_example("repair3");
    d.states = base.state_names();
    d.actions = base.action_names();
    d.observations = base.observation_names();
    d.transition = {{{0.9, 0.1}, {0.6, 0.4}}, {{0.4, 0.6}, {0.1, 0.9}}};
    d.channel = {{1.0, 0.0}, {0.0, 1.0}};
    d.cost = {{1.0, 4.0}, {0.0, 3.0}};
    d.discount = base.discount();
    d.prior = base.prior().vector();
    return PomdpModel(std::move(d));
}

}  // namespace fimeq
