#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fimeq/evaluation.hpp"
#include "fimeq/ergodicity.hpp"
#include "fimeq/model.hpp"

namespace fimeq {

/// An input file (config or model) that does not exist.
class MissingInput : public Error {
public:
    explicit MissingInput(const std::filesystem::path& path)
        : Error("no such file: '" + path.string() + "'"), path_(path) {}
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Failure inside one experiment stage; what() is prefixed with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message)
        : Error("stage '" + stage + "' failed: " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

enum class Stage { Solve, Learn, Bounds, Evaluate };

std::string stage_name(Stage s);

struct ExperimentConfig {
    std::filesystem::path model_path;
    std::vector<int> N_list;
    std::int64_t total_steps = 200'000;
    std::uint64_t seed = 1;
    std::vector<double> exploration;  // empty: uniform
    std::int64_t snapshot_every = 10'000;
    int grid_bins = 2001;
    int L_resolution = 100;
    double vi_tol = 1e-9;
    std::filesystem::path output_dir = "out";
    std::vector<Stage> stages{Stage::Solve, Stage::Learn, Stage::Bounds, Stage::Evaluate};
};

/// Relative model and output paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

struct ExperimentReport {
    StabilityReport stability;
    std::optional<BoundReport> bounds;
    std::vector<std::filesystem::path> files;
};

/// Runs the configured stages and writes every report under output_dir.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

/// Bundled machine-repair models: repair1, repair2, repair3.
PomdpModel gen_example(const std::string& name);

/// Identity-channel variant of repair3.
PomdpModel perfect_channel_example();

}  // namespace fimeq
