#pragma once

#include <memory>
#include <string>

#include "json.hpp"

#include "postpred/config.hpp"
#include "postpred/datasets.hpp"
#include "postpred/evaluation.hpp"

namespace postpred {

struct RunArtifacts {
    std::string out_dir;
    std::string config_echo_path;
    std::string curve_path;
    std::string fan_path;
    std::string metrics_path;
    std::string manifest_path;
    nlohmann::json metrics;
    TrainReport report;
};

// Model factories shared by the runner and by test harnesses.
std::unique_ptr<PrimaryModel> build_primary(const ExperimentConfig& cfg);
std::unique_ptr<PosteriorModel> build_posterior(const ExperimentConfig& cfg, const ThetaLayout& layout,
                                                int64_t cond_dim, Rng& init_rng);

// Executes the full experiment described by `cfg` and writes the run
// directory: config echo, training curve CSV, fan CSV, metrics JSON and a
// manifest. metrics.json holds only seed-deterministic quantities; timing
// goes to the manifest.
RunArtifacts run_experiment(const ExperimentConfig& cfg, const std::string& config_echo_text = "");

} // namespace postpred
