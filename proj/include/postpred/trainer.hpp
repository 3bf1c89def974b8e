#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "postpred/likelihoods.hpp"
#include "postpred/posterior_models.hpp"
#include "postpred/primary_models.hpp"
#include "postpred/rng.hpp"

namespace postpred {

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct EarlyStoppingConfig {
    bool enabled = true;
    double val_fraction = 0.1;
    int patience = 20;
    double min_delta = 1e-4;
};

struct TrainConfig {
    int epochs = 100;
    int batch_size = 32;
    int mc_samples = 10;
    OptimizerConfig optimizer;
    EarlyStoppingConfig early_stopping;
    LossMode loss_mode = LossMode::neg_log_mean_prob;
    double grad_clip = 0.0; // max global grad norm; 0 disables clipping
    uint64_t seed = 0;
    std::string curve_csv_path; // when set, epoch/train/val/seconds rows are written here
};

struct TrainReport {
    std::vector<double> train_loss;
    std::vector<double> val_loss; // empty when no validation split
    std::vector<double> seconds;
    int epochs_run = 0;
    int best_epoch = -1;
    bool stopped_early = false;
};

struct TrainData {
    Tensor x; // [N,in]
    Tensor y; // [N,out]
    // Conditioning inputs for conditional generators; defaults to x when
    // undefined. Lets label-style side information reach the generator
    // without touching the primary model.
    Tensor cond;

    int64_t size() const { return x.defined() ? x.extent(0) : 0; }
    const Tensor& cond_or_x() const { return cond.defined() ? cond : x; }
};

struct AdamState {
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;
};

// Standard bias-corrected update, in place on the parameter data. Parameters
// with no grad populated are treated as having zero gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state, const OptimizerConfig& opt);
void sgd_step(std::vector<Tensor>& params, double lr);

// Fresh permutation split into contiguous slices; the last one may be short.
std::vector<std::vector<int64_t>> make_minibatches(int64_t n, int64_t batch_size, Rng& rng);

// Validation-driven stopping with best-state tracking.
class EarlyStopper {
public:
    EarlyStopper(int patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

    // Returns true when this is a new best (caller should snapshot).
    bool observe(double val_loss);
    bool should_stop() const { return wait_ > patience_; }
    int best_epoch() const { return best_epoch_; }

private:
    int patience_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = -1;
    int wait_ = 0;
    int epoch_ = -1;
};

TrainReport train(const PrimaryModel& primary, PosteriorModel& posterior, const Likelihood& likelihood,
                  const TrainData& data, const TrainConfig& cfg);

} // namespace postpred
