#include "postpred/posterior_models.hpp"

#include <algorithm>
#include <cmath>

namespace postpred {

Tensor LatentSpec::draw(Shape lead, Rng& rng) const {
    Shape shape = std::move(lead);
    shape.push_back(dim);
    std::vector<double> data(numel_of(shape));
    if (base == Base::uniform) {
        for (double& v : data) v = rng.uniform(lo, hi);
    } else {
        for (double& v : data) v = rng.normal();
    }
    return Tensor::from_data(std::move(shape), std::move(data));
}

ThetaBatch PosteriorModel::sample(const ThetaLayout& layout, int64_t l, Rng& rng) {
    if (is_conditional()) {
        throw ContractError("posterior sample: generator is conditional; pass the conditioning inputs");
    }
    if (l < 1) throw ContractError("posterior sample: L must be >= 1");
    return ThetaBatch::unconditioned(sample_values(l, rng), layout);
}

ThetaBatch PosteriorModel::sample_conditional(const ThetaLayout& layout, const Tensor& cond, int64_t l,
                                              Rng& rng) {
    if (!is_conditional()) {
        throw ContractError("posterior sample: generator is unconditioned; no conditioning inputs apply");
    }
    if (l < 1) throw ContractError("posterior sample: L must be >= 1");
    return ThetaBatch::conditional(sample_values_conditional(cond, l, rng), layout);
}

namespace {

// Fan-in-scaled uniform init; `gain` shrinks the output layer so the initial
// theta spread stays small.
Tensor init_weight(int64_t in, int64_t out, double gain, Rng& rng) {
    const double bound = gain / std::sqrt(static_cast<double>(in));
    std::vector<double> data(in * out);
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor::from_data({in, out}, std::move(data), /*requires_grad=*/true);
}

} // namespace

HypernetPosterior::HypernetPosterior(HypernetArch arch, LatentSpec latent, Rng& init_rng)
    : arch_(std::move(arch)), latent_(latent) {
    if (arch_.widths.size() < 2) {
        throw ContractError("hypernet arch needs at least [latent,out] widths");
    }
    if (arch_.widths.front() != latent_.dim) {
        throw ContractError("hypernet arch latent width " + std::to_string(arch_.widths.front()) +
                            " does not match latent dim " + std::to_string(latent_.dim));
    }
    if (arch_.conditioned && arch_.cond_dim <= 0) {
        throw ContractError("conditional hypernet needs cond_dim > 0");
    }
    const size_t layers = arch_.widths.size() - 1;
    for (size_t i = 0; i < layers; ++i) {
        int64_t in = arch_.widths[i];
        if (i == 0 && arch_.conditioned) in += arch_.cond_dim;
        const int64_t out = arch_.widths[i + 1];
        const double gain = (i + 1 == layers) ? arch_.output_gain : 1.0;
        weights_.push_back(init_weight(in, out, gain, init_rng));
        biases_.push_back(Tensor::zeros({out}, /*requires_grad=*/true));
    }
}

std::vector<Tensor> HypernetPosterior::parameters() const {
    std::vector<Tensor> params;
    for (size_t i = 0; i < weights_.size(); ++i) {
        if (weights_[i].requires_grad()) params.push_back(weights_[i]);
        if (biases_[i].requires_grad()) params.push_back(biases_[i]);
    }
    return params;
}

std::vector<std::pair<std::string, Tensor>> HypernetPosterior::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> named;
    for (size_t i = 0; i < weights_.size(); ++i) {
        named.emplace_back("w" + std::to_string(i), weights_[i]);
        named.emplace_back("b" + std::to_string(i), biases_[i]);
    }
    return named;
}

Tensor HypernetPosterior::transform(const Tensor& input) const {
    Tensor h = input;
    for (size_t i = 0; i < weights_.size(); ++i) {
        h = add(matmul(h, weights_[i]), biases_[i]);
        if (i + 1 < weights_.size()) h = relu(h);
    }
    return h;
}

Tensor HypernetPosterior::sample_values(int64_t l, Rng& rng) {
    Tensor z = latent_.draw({l}, rng);
    return transform(z); // [L,P]
}

Tensor HypernetPosterior::sample_values_conditional(const Tensor& cond, int64_t l, Rng& rng) {
    if (cond.rank() != 2 || cond.extent(1) != arch_.cond_dim) {
        throw ContractError("conditional hypernet: conditioning input must be [B," +
                            std::to_string(arch_.cond_dim) + "], got " + shape_str(cond.shape()));
    }
    const int64_t b = cond.extent(0);
    Tensor z = latent_.draw({b, l}, rng);          // [B,L,zdim]
    Tensor c = expand(cond, 1, l);                 // [B,L,d]
    Tensor zin = concat_last({z, c});              // [B,L,zdim+d]
    Tensor flat = reshape(zin, {b * l, arch_.widths.front() + arch_.cond_dim});
    return reshape(transform(flat), {b, l, out_len()});
}

void HypernetPosterior::freeze_input_weights() {
    Tensor& w0 = weights_.front();
    std::fill(w0.raw_data().begin(), w0.raw_data().end(), 0.0);
    w0.set_requires_grad(false);
}

MdnPosterior::MdnPosterior(int64_t cond_dim, std::vector<int64_t> trunk_hidden, int64_t theta_len,
                           Rng& init_rng)
    : cond_dim_(cond_dim), theta_len_(theta_len) {
    if (cond_dim_ <= 0) throw ContractError("MdnPosterior needs cond_dim > 0");
    if (theta_len_ <= 0) throw ContractError("MdnPosterior needs theta_len > 0");
    int64_t in = cond_dim_;
    for (int64_t width : trunk_hidden) {
        trunk_w_.push_back(init_weight(in, width, 1.0, init_rng));
        trunk_b_.push_back(Tensor::zeros({width}, true));
        in = width;
    }
    mu_w_ = init_weight(in, theta_len_, 0.1, init_rng);
    mu_b_ = Tensor::zeros({theta_len_}, true);
    log_sigma_w_ = init_weight(in, theta_len_, 0.1, init_rng);
    // Small initial spread around mu.
    log_sigma_b_ = Tensor::full({theta_len_}, -2.0, true);
}

std::vector<Tensor> MdnPosterior::parameters() const {
    std::vector<Tensor> params;
    auto push = [&params](const Tensor& t) {
        if (t.requires_grad()) params.push_back(t);
    };
    for (size_t i = 0; i < trunk_w_.size(); ++i) {
        push(trunk_w_[i]);
        push(trunk_b_[i]);
    }
    push(mu_w_);
    push(mu_b_);
    push(log_sigma_w_);
    push(log_sigma_b_);
    return params;
}

std::vector<std::pair<std::string, Tensor>> MdnPosterior::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> named;
    for (size_t i = 0; i < trunk_w_.size(); ++i) {
        named.emplace_back("trunk_w" + std::to_string(i), trunk_w_[i]);
        named.emplace_back("trunk_b" + std::to_string(i), trunk_b_[i]);
    }
    named.emplace_back("mu_w", mu_w_);
    named.emplace_back("mu_b", mu_b_);
    named.emplace_back("log_sigma_w", log_sigma_w_);
    named.emplace_back("log_sigma_b", log_sigma_b_);
    return named;
}

std::pair<Tensor, Tensor> MdnPosterior::heads(const Tensor& cond) const {
    if (cond.rank() != 2 || cond.extent(1) != cond_dim_) {
        throw ContractError("MdnPosterior: conditioning input must be [B," + std::to_string(cond_dim_) +
                            "], got " + shape_str(cond.shape()));
    }
    Tensor h = cond;
    for (size_t i = 0; i < trunk_w_.size(); ++i) {
        h = relu(add(matmul(h, trunk_w_[i]), trunk_b_[i]));
    }
    Tensor mu = add(matmul(h, mu_w_), mu_b_);
    Tensor log_sigma = add(matmul(h, log_sigma_w_), log_sigma_b_);
    return {mu, log_sigma};
}

Tensor MdnPosterior::sample_values(int64_t, Rng&) {
    throw ContractError("MdnPosterior is conditional; unconditioned sampling does not apply");
}

Tensor MdnPosterior::sample_values_conditional(const Tensor& cond, int64_t l, Rng& rng) {
    auto [mu, log_sigma] = heads(cond);
    const int64_t b = cond.extent(0);
    std::vector<double> eps_data(b * l * theta_len_);
    for (double& v : eps_data) v = rng.normal();
    Tensor eps = Tensor::from_data({b, l, theta_len_}, std::move(eps_data));
    Tensor sigma = exp(log_sigma);                          // strictly positive
    Tensor mu_rep = expand(mu, 1, l);                       // [B,L,P]
    Tensor sigma_rep = expand(sigma, 1, l);
    return add(mu_rep, mul(sigma_rep, eps));
}

ComposedPosterior::ComposedPosterior(std::vector<Part> parts) : parts_(std::move(parts)) {
    if (parts_.empty()) throw ContractError("ComposedPosterior: no parts");
    std::sort(parts_.begin(), parts_.end(), [](const Part& a, const Part& b) { return a.offset < b.offset; });
    int64_t expect = 0;
    for (const Part& p : parts_) {
        if (!p.model) throw ContractError("ComposedPosterior: null part");
        if (p.offset != expect) {
            throw ContractError("ComposedPosterior: segment coverage gap or overlap at offset " +
                                std::to_string(p.offset) + " (expected " + std::to_string(expect) + ")");
        }
        if (p.model->out_len() != p.len) {
            throw ContractError("ComposedPosterior: part output length " +
                                std::to_string(p.model->out_len()) + " does not match segment length " +
                                std::to_string(p.len));
        }
        if (p.model->is_conditional() != parts_.front().model->is_conditional()) {
            throw ContractError("ComposedPosterior: parts must agree on conditionality");
        }
        expect += p.len;
    }
    total_len_ = expect;
}

bool ComposedPosterior::is_conditional() const { return parts_.front().model->is_conditional(); }

std::vector<Tensor> ComposedPosterior::parameters() const {
    std::vector<Tensor> params;
    for (const Part& p : parts_) {
        auto sub = p.model->parameters();
        params.insert(params.end(), sub.begin(), sub.end());
    }
    return params;
}

std::vector<std::pair<std::string, Tensor>> ComposedPosterior::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> named;
    for (size_t i = 0; i < parts_.size(); ++i) {
        for (auto& [name, t] : parts_[i].model->named_parameters()) {
            named.emplace_back("part" + std::to_string(i) + "." + name, t);
        }
    }
    return named;
}

Tensor ComposedPosterior::sample_values(int64_t l, Rng& rng) {
    std::vector<Tensor> pieces;
    pieces.reserve(parts_.size());
    for (const Part& p : parts_) pieces.push_back(p.model->sample_values(l, rng));
    return concat_last(pieces);
}

Tensor ComposedPosterior::sample_values_conditional(const Tensor& cond, int64_t l, Rng& rng) {
    std::vector<Tensor> pieces;
    pieces.reserve(parts_.size());
    for (const Part& p : parts_) pieces.push_back(p.model->sample_values_conditional(cond, l, rng));
    return concat_last(pieces);
}

} // namespace postpred
