#pragma once

#include <string>
#include <vector>

#include "postpred/posterior_models.hpp"
#include "postpred/primary_models.hpp"
#include "postpred/rng.hpp"

namespace postpred {

/// Posterior-predictive samples at each test input, with summary statistics.
struct PredictiveFan {
    std::vector<double> x;                                  // first input column, for export
    std::vector<std::vector<std::vector<double>>> samples;  // [N][L][o]
    std::vector<std::vector<double>> mean, q025, q50, q975; // [N][o]

    int64_t n_inputs() const { return static_cast<int64_t>(samples.size()); }
    int64_t n_draws() const { return samples.empty() ? 0 : static_cast<int64_t>(samples[0].size()); }
    int64_t out_dim() const {
        return samples.empty() || samples[0].empty() ? 0 : static_cast<int64_t>(samples[0][0].size());
    }
};

// Draws l_eval prediction curves over x_test. Conditional generators receive
// `cond` (x_test itself when cond is undefined).
PredictiveFan sample_predictive(const PrimaryModel& primary, PosteriorModel& posterior,
                                const Tensor& x_test, int64_t l_eval, Rng& rng,
                                const Tensor& cond = Tensor());

// As above, but the generator conditions on [x, label] with a fresh fair coin
// flip per (input, draw).
PredictiveFan sample_predictive_labeled(const PrimaryModel& primary, PosteriorModel& posterior,
                                        const Tensor& x_test, int64_t l_eval, Rng& rng);

double rmse(const std::vector<double>& pred, const std::vector<double>& target);

struct MapeResult {
    double value = 0.0;   // percent
    int64_t excluded = 0; // zero-target entries skipped
};
MapeResult mape(const std::vector<double>& pred, const std::vector<double>& target);

// Persistence baseline: repeats the last observed value across the horizon.
std::vector<double> naive_forecast(const std::vector<double>& window, int64_t horizon);

enum class Modality { unimodal, bimodal };

// Bimodal iff at least 10% of the draws land within 0.2 of each reference
// curve value and the mid-band between them is depleted relative to both
// curve bands. Thresholds are harness conventions, not claims.
Modality detect_bimodality(const std::vector<double>& draws, double curve_lo, double curve_hi);

/// Per-window forecast errors in the style of a forecasting results table:
/// mean and sample standard deviation over per-window RMSE / MAPE.
struct ForecastMetrics {
    double rmse = 0.0, rmse_std = 0.0;
    double mape = 0.0, mape_std = 0.0;
    int64_t mape_excluded = 0;
};
ForecastMetrics forecast_metrics(const std::vector<std::vector<double>>& pred,
                                 const std::vector<std::vector<double>>& target);

// Columns: x, sample_0..sample_{L-1}, mean, q025, q50, q975. Multi-output
// fans emit one row per (input, output dimension).
void write_fan_csv(const std::string& path, const PredictiveFan& fan);

} // namespace postpred
