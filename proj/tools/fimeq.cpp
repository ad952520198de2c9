#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "fimeq/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> steps;
    std::optional<int> bins;
    std::optional<std::string> out;

    void add_to(CLI::App* app) {
        app->add_option("--seed", seed, "random seed");
        app->add_option("--steps", steps, "Q-learning steps");
        app->add_option("--bins", bins, "belief grid points per simplex edge");
        app->add_option("--out", out, "output directory");
    }

    void apply(fimeq::ExperimentConfig& cfg) const {
        if (seed) cfg.seed = *seed;
        if (steps) cfg.total_steps = *steps;
        if (bins) cfg.grid_bins = *bins;
        if (out) cfg.output_dir = *out;
    }
};

void print_summary(const fimeq::ExperimentReport& report) {
    const auto& s = report.stability;
    fmt::print("pi* = [{}]  delta_T = {:.6g}  delta_O = {:.6g}  alpha = {:.6g}\n",
               fmt::join(s.pi_star.vector(), ", "), s.delta_T, s.delta_O, s.alpha);
    if (report.bounds) {
        for (const auto& r : report.bounds->rows) {
            fmt::print("N={}  J={:.6f}  J*_est={:.6f}  loss={:.3e}  L={:.5f}  bound={:.4f}\n", r.N, r.policy_value,
                       r.optimal_estimate, r.loss, r.L, r.bound_robust);
        }
    }
    for (const auto& f : report.files) fmt::print("wrote {}\n", f.string());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-window Q-learning for POMDPs"};
    app.require_subcommand(1);

    Overrides run_over;
    std::string config_path;
    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config_path, "experiment config (JSON)")->required();
    run_over.add_to(run);

    std::string gen_name;
    std::string gen_path;
    auto* gen = app.add_subcommand("gen", "write a bundled model file");
    gen->add_option("name", gen_name, "repair1, repair2, repair3 or perfect")->required();
    gen->add_option("path", gen_path, "output model file")->required();

    struct Single {
        std::string model;
        std::vector<int> n{1};
        Overrides over;
    };
    Single single[3];
    const fimeq::Stage single_stage[3] = {fimeq::Stage::Solve, fimeq::Stage::Learn, fimeq::Stage::Bounds};
    const char* single_help[3] = {"value iteration on the approximate window MDP",
                                  "Q-learning against the value-iteration reference",
                                  "loss and filter-stability bounds"};
    CLI::App* single_cmd[3];
    for (int i = 0; i < 3; ++i) {
        single_cmd[i] = app.add_subcommand(fimeq::stage_name(single_stage[i]), single_help[i]);
        single_cmd[i]->add_option("model", single[i].model, "model file (JSON)")->required();
        single_cmd[i]->add_option("--n", single[i].n, "window length(s)")->expected(1, -1);
        single[i].over.add_to(single_cmd[i]);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const fimeq::PomdpModel model =
                gen_name == "perfect" ? fimeq::perfect_channel_example() : fimeq::gen_example(gen_name);
            fimeq::save_model(model, gen_path);
            return 0;
        }
        fimeq::ExperimentConfig cfg;
        if (*run) {
            cfg = fimeq::load_config(config_path);
            run_over.apply(cfg);
        } else {
            for (int i = 0; i < 3; ++i) {
                if (!*single_cmd[i]) continue;
                cfg.model_path = single[i].model;
                cfg.N_list = single[i].n;
                cfg.stages = {single_stage[i]};
                single[i].over.apply(cfg);
            }
        }
        print_summary(fimeq::run_experiment(cfg));
        return 0;
    } catch (const fimeq::MissingInput& e) {
        fmt::print(stderr, "fimeq: {}\n", e.what());
        return 2;
    } catch (const fimeq::StageError& e) {
        fmt::print(stderr, "fimeq: {}\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        fmt::print(stderr, "fimeq: {}\n", e.what());
        return 1;
    }
}
