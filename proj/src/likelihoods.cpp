#include "postpred/likelihoods.hpp"

#include <cmath>

namespace postpred {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178; // log(2*pi)/2
}

Tensor Likelihood::log_lik(const Tensor& targets, const Tensor& preds, const ThetaBatch& theta) const {
    if (targets.rank() != 2) {
        throw ContractError("log_lik: targets must be [B,o], got " + shape_str(targets.shape()));
    }
    if (preds.rank() != 3) {
        throw ContractError("log_lik: predictions must be rank 3, got " + shape_str(preds.shape()));
    }
    if (preds.shape().back() != targets.shape().back()) {
        throw ContractError("log_lik: output extents disagree: " + shape_str(preds.shape()) + " vs " +
                            shape_str(targets.shape()));
    }
    Tensor y = targets;
    if (theta.conditional_form()) {
        // preds [B,L,o]: replicate targets across the sample axis
        y = reshape(y, {targets.extent(0), 1, targets.extent(1)});
    }
    Tensor diff = sub(preds, y);
    return eval(diff, preds, theta);
}

GaussianLikelihood::GaussianLikelihood(double sigma) : sigma_(sigma) {
    if (!(sigma > 0.0)) throw ContractError("GaussianLikelihood: sigma must be > 0");
}

Tensor GaussianLikelihood::eval(const Tensor& diff, const Tensor&, const ThetaBatch&) const {
    const int64_t out_dim = diff.shape().back();
    Tensor sq = sum(square(diff), diff.rank() - 1);
    Tensor ll = scale(sq, -1.0 / (2.0 * sigma_ * sigma_));
    const double norm = -static_cast<double>(out_dim) * (std::log(sigma_) + kHalfLog2Pi);
    return add_scalar(ll, norm);
}

Tensor L1Likelihood::eval(const Tensor& diff, const Tensor&, const ThetaBatch&) const {
    return neg(sum(abs(diff), diff.rank() - 1));
}

SseL2Likelihood::SseL2Likelihood(double lambda) : lambda_(lambda) {
    if (lambda < 0.0) throw ContractError("SseL2Likelihood: lambda must be >= 0");
}

Tensor SseL2Likelihood::eval(const Tensor& diff, const Tensor&, const ThetaBatch& theta) const {
    Tensor ll = neg(sum(square(diff), diff.rank() - 1)); // [L,B] or [B,L]
    if (lambda_ == 0.0) return ll;
    Tensor penalty = scale(sum(square(theta.values), theta.values.rank() - 1), lambda_); // [L] or [B,L]
    if (!theta.conditional_form()) {
        penalty = reshape(penalty, {penalty.extent(0), 1}); // broadcast over the batch
    }
    return sub(ll, penalty);
}

Tensor mc_predictive_loss(const Tensor& log_liks, int mc_axis, LossMode mode) {
    if (log_liks.rank() != 2) {
        throw ContractError("mc_predictive_loss: expected rank-2 log-likelihoods, got " +
                            shape_str(log_liks.shape()));
    }
    if (mc_axis != 0 && mc_axis != 1) {
        throw ContractError("mc_predictive_loss: mc_axis must be 0 or 1");
    }
    const int64_t l = log_liks.extent(mc_axis);
    if (l < 1) throw ContractError("mc_predictive_loss: L must be >= 1");
    if (mode == LossMode::mean_prob) {
        return neg(mean(exp(log_liks)));
    }
    Tensor lse = logsumexp(log_liks, mc_axis);
    return mean(add_scalar(neg(lse), std::log(static_cast<double>(l))));
}

} // namespace postpred
