#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "postpred/posterior_models.hpp"
#include "postpred/primary_models.hpp"
#include "postpred/trainer.hpp"

namespace postpred {

// Raw `key = value` entries in file order, with line numbers for diagnostics.
// Lines are `key = value`; '#' starts a comment.
class ParsedConfig {
public:
    struct Entry {
        std::string key, value;
        int line = 0;
    };

    static ParsedConfig from_file(const std::string& path);
    static ParsedConfig from_string(const std::string& text, const std::string& origin = "<string>");

    const Entry* find(const std::string& key) const;
    const std::vector<Entry>& entries() const { return entries_; }
    const std::string& origin() const { return origin_; }
    const std::string& raw_text() const { return raw_text_; }

private:
    std::vector<Entry> entries_;
    std::string origin_;
    std::string raw_text_;
};

struct ValidationIssue {
    std::string field;
    int line = 0; // 0 when the field is absent
    std::string message;
};

std::string format_issues(const std::vector<ValidationIssue>& issues);

enum class ExperimentKind { xsinx, xsinx_linear_primary, multimodal_l1, multimodal_labeled, forecast };
enum class PrimaryKind { linear, mlp, nbeats };
enum class PosteriorKind { unconditioned, conditional, mdn };
enum class LikelihoodKind { gaussian, l1, sse_l2 };

const char* to_string(ExperimentKind k);

/// Fully typed experiment description; a run is a deterministic function of
/// this struct.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::xsinx;
    uint64_t seed = 1;
    std::string out_dir;

    PrimaryKind primary_kind = PrimaryKind::mlp;
    std::vector<int64_t> primary_hidden = {512};
    NBeatsConfig nbeats;

    PosteriorKind posterior_kind = PosteriorKind::conditional;
    // Bracket widths; the trailing entry is the resolved theta length.
    std::vector<int64_t> posterior_arch;
    LatentSpec latent;
    double init_gain = 0.1;
    bool per_layer = false;
    bool degenerate = false;

    LikelihoodKind likelihood_kind = LikelihoodKind::gaussian;
    double sigma = 0.01;
    double lambda = 0.0;

    TrainConfig train;

    // dataset parameters
    int n_base = 32;
    bool grid_spacing = false;
    bool include_outliers = true;
    int n_multimodal = 128;
    double noise_var = 0.01;
    std::string csv_path;
    double train_fraction = 0.701;
    bool standardize = true;

    int eval_mc_samples = 30;
};

// Both run paths share one extractor, so `validate` accepts exactly the
// configs `run` accepts.
std::vector<ValidationIssue> validate_config(const ParsedConfig& pc);

// Throws ConfigError listing the issues when the config is invalid.
ExperimentConfig build_config(const ParsedConfig& pc);

} // namespace postpred
