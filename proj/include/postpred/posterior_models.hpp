#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "postpred/rng.hpp"
#include "postpred/tensor.hpp"
#include "postpred/theta.hpp"

namespace postpred {

/// Base distribution of the latent noise fed to a generator.
struct LatentSpec {
    enum class Base { uniform, standard_normal };
    int64_t dim = 4;
    Base base = Base::uniform;
    double lo = -1.0;
    double hi = 1.0;

    // i.i.d. draws shaped [lead..., dim], no grad.
    Tensor draw(Shape lead, Rng& rng) const;
};

/// Trainable generator producing primary-model parameter samples. Conditional
/// generators receive a per-row conditioning tensor (usually the minibatch x);
/// unconditioned ones draw from latent noise alone.
class PosteriorModel {
public:
    virtual ~PosteriorModel() = default;

    virtual bool is_conditional() const = 0;
    virtual int64_t out_len() const = 0;
    virtual std::vector<Tensor> parameters() const = 0; // trainable leaves, stable order
    virtual std::vector<std::pair<std::string, Tensor>> named_parameters() const = 0;

    // Raw sample values: [L,out_len] / [B,L,out_len].
    virtual Tensor sample_values(int64_t l, Rng& rng) = 0;
    virtual Tensor sample_values_conditional(const Tensor& cond, int64_t l, Rng& rng) = 0;

    // Spec'd entry points: wrap the values in a ThetaBatch for `layout`.
    ThetaBatch sample(const ThetaLayout& layout, int64_t l, Rng& rng);
    ThetaBatch sample_conditional(const ThetaLayout& layout, const Tensor& cond, int64_t l, Rng& rng);
};

/// MLP architecture for a hypernetwork generator. widths = [latent, hidden..., out];
/// two entries mean a plain linear map. A conditional hypernet consumes
/// [z, cond] so its first layer has latent+cond_dim input columns.
struct HypernetArch {
    std::vector<int64_t> widths;
    bool conditioned = false;
    int64_t cond_dim = 0;
    double output_gain = 0.1; // init scale of the last layer: the initial sample spread
};

class HypernetPosterior final : public PosteriorModel {
public:
    HypernetPosterior(HypernetArch arch, LatentSpec latent, Rng& init_rng);

    bool is_conditional() const override { return arch_.conditioned; }
    int64_t out_len() const override { return arch_.widths.back(); }
    std::vector<Tensor> parameters() const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;

    Tensor sample_values(int64_t l, Rng& rng) override;
    Tensor sample_values_conditional(const Tensor& cond, int64_t l, Rng& rng) override;

    // The raw map g: [n, latent(+cond)] -> [n, out]. Public so tests and
    // diagnostics can drive it with chosen latents.
    Tensor transform(const Tensor& input) const;

    // Zeroes the first-layer weights and excludes them from training, pinning
    // the generator to a constant (z-independent) output.
    void freeze_input_weights();

    const LatentSpec& latent() const { return latent_; }
    const HypernetArch& arch() const { return arch_; }

private:
    HypernetArch arch_;
    LatentSpec latent_;
    std::vector<Tensor> weights_; // [in,out] per layer
    std::vector<Tensor> biases_;  // [out] per layer
};

/// Gaussian head over theta conditioned on x: theta = mu(x) + sigma(x) * eps,
/// sampled by reparameterization so gradients flow into both heads.
class MdnPosterior final : public PosteriorModel {
public:
    MdnPosterior(int64_t cond_dim, std::vector<int64_t> trunk_hidden, int64_t theta_len, Rng& init_rng);

    bool is_conditional() const override { return true; }
    int64_t out_len() const override { return theta_len_; }
    std::vector<Tensor> parameters() const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;

    Tensor sample_values(int64_t l, Rng& rng) override;
    Tensor sample_values_conditional(const Tensor& cond, int64_t l, Rng& rng) override;

    // Heads evaluated at cond [B,d]: {mu [B,P], log_sigma [B,P]}.
    std::pair<Tensor, Tensor> heads(const Tensor& cond) const;

private:
    int64_t cond_dim_;
    int64_t theta_len_;
    std::vector<Tensor> trunk_w_, trunk_b_;
    Tensor mu_w_, mu_b_, log_sigma_w_, log_sigma_b_;
};

/// Independent sub-generators per contiguous theta segment; their outputs are
/// concatenated. Parts must exactly partition [0, total_len).
class ComposedPosterior final : public PosteriorModel {
public:
    struct Part {
        int64_t offset = 0;
        int64_t len = 0;
        std::shared_ptr<PosteriorModel> model;
    };

    explicit ComposedPosterior(std::vector<Part> parts);

    bool is_conditional() const override;
    int64_t out_len() const override { return total_len_; }
    std::vector<Tensor> parameters() const override;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const override;

    Tensor sample_values(int64_t l, Rng& rng) override;
    Tensor sample_values_conditional(const Tensor& cond, int64_t l, Rng& rng) override;

private:
    std::vector<Part> parts_;
    int64_t total_len_ = 0;
};

} // namespace postpred
