#pragma once

#include <memory>

#include "postpred/tensor.hpp"
#include "postpred/theta.hpp"

namespace postpred {

/// Per-example (log-)likelihood evaluator: maps predictions [L,B,o] / [B,L,o]
/// and targets [B,o] to a log-likelihood tensor [L,B] / [B,L]. Higher is
/// better; values need not come from a normalized density.
class Likelihood {
public:
    virtual ~Likelihood() = default;
    Tensor log_lik(const Tensor& targets, const Tensor& preds, const ThetaBatch& theta) const;

protected:
    // diff = preds - targets, already aligned; implementations reduce the last axis.
    virtual Tensor eval(const Tensor& diff, const Tensor& preds, const ThetaBatch& theta) const = 0;
};

/// Independent Gaussian with known standard deviation per output dimension.
class GaussianLikelihood final : public Likelihood {
public:
    explicit GaussianLikelihood(double sigma);
    double sigma() const { return sigma_; }

private:
    Tensor eval(const Tensor& diff, const Tensor& preds, const ThetaBatch& theta) const override;
    double sigma_;
};

/// Negative L1 distance; a pseudo-log-likelihood, not a density.
class L1Likelihood final : public Likelihood {
private:
    Tensor eval(const Tensor& diff, const Tensor& preds, const ThetaBatch& theta) const override;
};

/// Negative sum of squared errors with an L2 penalty on each sampled theta,
/// applied inside the Monte-Carlo sum.
class SseL2Likelihood final : public Likelihood {
public:
    explicit SseL2Likelihood(double lambda);
    double lambda() const { return lambda_; }

private:
    Tensor eval(const Tensor& diff, const Tensor& preds, const ThetaBatch& theta) const override;
    double lambda_;
};

enum class LossMode {
    mean_prob,          // -(1/L) sum_l exp(log_lik), averaged over the batch
    neg_log_mean_prob,  // log L - logsumexp_l log_lik, averaged over the batch
};

// Assembles the scalar training loss from per-example log-likelihoods.
// `mc_axis` indexes the Monte-Carlo samples (0 for [L,B], 1 for [B,L]).
Tensor mc_predictive_loss(const Tensor& log_liks, int mc_axis, LossMode mode);

} // namespace postpred
