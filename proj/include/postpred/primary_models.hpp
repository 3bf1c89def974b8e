#pragma once

#include <memory>
#include <vector>

#include "postpred/tensor.hpp"
#include "postpred/theta.hpp"

namespace postpred {

/// Stateless predictive model f(theta, x). Parameters are inputs, not owned
/// state, so generated theta batches flow straight through the forward pass.
/// x is [B,in]; the result is [L,B,out] for unconditioned theta batches and
/// [B,L,out] for conditional ones.
class PrimaryModel {
public:
    virtual ~PrimaryModel() = default;

    const ThetaLayout& layout() const { return layout_; }
    int64_t input_dim() const { return input_dim_; }
    int64_t output_dim() const { return output_dim_; }

    Tensor forward(const ThetaBatch& theta, const Tensor& x) const;

protected:
    PrimaryModel(int64_t input_dim, int64_t output_dim) : input_dim_(input_dim), output_dim_(output_dim) {}
    virtual Tensor do_forward(const ThetaBatch& theta, const Tensor& x) const = 0;

    ThetaLayout layout_;
    int64_t input_dim_;
    int64_t output_dim_;
};

// Applies one affine layer with per-sample parameters.
//   unconditioned: w [L,out,in], b [L,out], h [L,B,in] -> [L,B,out]
//   conditional:   w [B,L,out,in], b [B,L,out], h [B,L,in] -> [B,L,out]
Tensor theta_affine(const Tensor& w, const Tensor& b, const Tensor& h);

// Replicates x [B,in] across the sample axis of a theta batch, yielding the
// initial hidden state for theta_affine.
Tensor replicate_input(const ThetaBatch& theta, const Tensor& x);

/// y = Wx + b. Layout: W [out,in], b [out].
class LinearModel final : public PrimaryModel {
public:
    LinearModel(int64_t input_dim, int64_t output_dim);

private:
    Tensor do_forward(const ThetaBatch& theta, const Tensor& x) const override;
};

/// ReLU MLP with a linear output layer. Layout: w0,b0,...,w{n},b{n}.
class MlpModel final : public PrimaryModel {
public:
    MlpModel(int64_t input_dim, std::vector<int64_t> hidden, int64_t output_dim);
    const std::vector<int64_t>& hidden() const { return hidden_; }

private:
    Tensor do_forward(const ThetaBatch& theta, const Tensor& x) const override;
    std::vector<int64_t> hidden_;
};

struct NBeatsConfig {
    int64_t input_len = 6;
    int64_t horizon = 3;
    int64_t blocks = 3;
    int64_t fc_width = 64;
    int64_t fc_depth = 4;
    int64_t basis_dim = 32;
};

/// Generic doubly-residual forecasting stack. Every block maps its residual
/// input through a ReLU FC stack to a basis vector, then two learned linear
/// bases expand it into a backcast (subtracted from the residual) and a
/// forecast (summed into the output). Block weights are shared, so the layout
/// holds a single block's parameters.
class NBeatsModel final : public PrimaryModel {
public:
    explicit NBeatsModel(NBeatsConfig cfg);
    const NBeatsConfig& config() const { return cfg_; }

private:
    Tensor do_forward(const ThetaBatch& theta, const Tensor& x) const override;
    NBeatsConfig cfg_;
};

} // namespace postpred
