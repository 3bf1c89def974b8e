#include "postpred/primary_models.hpp"

namespace postpred {

Tensor PrimaryModel::forward(const ThetaBatch& theta, const Tensor& x) const {
    if (theta.layout.total_len() != layout_.total_len()) {
        throw ContractError("primary forward: theta length " + std::to_string(theta.layout.total_len()) +
                            " does not match model layout length " + std::to_string(layout_.total_len()));
    }
    if (x.rank() != 2 || x.extent(1) != input_dim_) {
        throw ContractError("primary forward: x must be [B," + std::to_string(input_dim_) + "], got " +
                            shape_str(x.shape()));
    }
    if (theta.conditional_form() && theta.batch_size() != x.extent(0)) {
        throw ContractError("primary forward: theta batch extent " + std::to_string(theta.batch_size()) +
                            " does not match x batch extent " + std::to_string(x.extent(0)));
    }
    return do_forward(theta, x);
}

Tensor theta_affine(const Tensor& w, const Tensor& b, const Tensor& h) {
    if (w.rank() == 3) {
        // [L,out,in] x [L,B,in]
        Tensor ht = transpose_last2(h);                       // [L,in,B]
        Tensor y = batched_matmul(w, ht);                     // [L,out,B]
        const int64_t l = w.extent(0), out = w.extent(1);
        y = add(y, reshape(b, {l, out, 1}));                  // bias broadcast over B
        return transpose_last2(y);                            // [L,B,out]
    }
    // [B,L,out,in] x [B,L,in]: one weight matrix per (batch element, sample)
    const int64_t bb = w.extent(0), l = w.extent(1), out = w.extent(2), in = w.extent(3);
    Tensor wf = reshape(w, {bb * l, out, in});
    Tensor hf = reshape(h, {bb * l, in, 1});
    Tensor y = reshape(batched_matmul(wf, hf), {bb, l, out});
    return add(y, b);
}

Tensor replicate_input(const ThetaBatch& theta, const Tensor& x) {
    const int64_t l = theta.num_samples();
    if (theta.conditional_form()) return expand(x, 1, l); // [B,L,in]
    return expand(x, 0, l);                               // [L,B,in]
}

LinearModel::LinearModel(int64_t input_dim, int64_t output_dim) : PrimaryModel(input_dim, output_dim) {
    layout_.add("W", {output_dim, input_dim});
    layout_.add("b", {output_dim});
}

Tensor LinearModel::do_forward(const ThetaBatch& theta, const Tensor& x) const {
    return theta_affine(theta.segment("W"), theta.segment("b"), replicate_input(theta, x));
}

MlpModel::MlpModel(int64_t input_dim, std::vector<int64_t> hidden, int64_t output_dim)
    : PrimaryModel(input_dim, output_dim), hidden_(std::move(hidden)) {
    int64_t in = input_dim;
    for (size_t i = 0; i < hidden_.size(); ++i) {
        layout_.add("w" + std::to_string(i), {hidden_[i], in});
        layout_.add("b" + std::to_string(i), {hidden_[i]});
        in = hidden_[i];
    }
    const auto i = hidden_.size();
    layout_.add("w" + std::to_string(i), {output_dim, in});
    layout_.add("b" + std::to_string(i), {output_dim});
}

Tensor MlpModel::do_forward(const ThetaBatch& theta, const Tensor& x) const {
    Tensor h = replicate_input(theta, x);
    for (size_t i = 0; i <= hidden_.size(); ++i) {
        const std::string suffix = std::to_string(i);
        h = theta_affine(theta.segment("w" + suffix), theta.segment("b" + suffix), h);
        if (i < hidden_.size()) h = relu(h);
    }
    return h;
}

NBeatsModel::NBeatsModel(NBeatsConfig cfg) : PrimaryModel(cfg.input_len, cfg.horizon), cfg_(cfg) {
    if (cfg_.horizon <= 0) throw ContractError("NBeatsModel: horizon must be positive");
    if (cfg_.input_len <= 0) throw ContractError("NBeatsModel: input_len must be positive");
    if (cfg_.blocks <= 0 || cfg_.fc_depth <= 0) throw ContractError("NBeatsModel: blocks/fc_depth must be positive");
    int64_t in = cfg_.input_len;
    for (int64_t i = 0; i < cfg_.fc_depth; ++i) {
        layout_.add("fc" + std::to_string(i) + ".w", {cfg_.fc_width, in});
        layout_.add("fc" + std::to_string(i) + ".b", {cfg_.fc_width});
        in = cfg_.fc_width;
    }
    layout_.add("basis.w", {cfg_.basis_dim, in});
    layout_.add("basis.b", {cfg_.basis_dim});
    layout_.add("back.w", {cfg_.input_len, cfg_.basis_dim});
    layout_.add("back.b", {cfg_.input_len});
    layout_.add("fore.w", {cfg_.horizon, cfg_.basis_dim});
    layout_.add("fore.b", {cfg_.horizon});
}

Tensor NBeatsModel::do_forward(const ThetaBatch& theta, const Tensor& x) const {
    Tensor residual = replicate_input(theta, x);
    Tensor forecast;
    for (int64_t blk = 0; blk < cfg_.blocks; ++blk) {
        Tensor h = residual;
        for (int64_t i = 0; i < cfg_.fc_depth; ++i) {
            const std::string suffix = std::to_string(i);
            h = relu(theta_affine(theta.segment("fc" + suffix + ".w"),
                                  theta.segment("fc" + suffix + ".b"), h));
        }
        Tensor basis = theta_affine(theta.segment("basis.w"), theta.segment("basis.b"), h);
        Tensor backcast = theta_affine(theta.segment("back.w"), theta.segment("back.b"), basis);
        Tensor block_forecast = theta_affine(theta.segment("fore.w"), theta.segment("fore.b"), basis);
        residual = sub(residual, backcast);
        forecast = forecast.defined() ? add(forecast, block_forecast) : block_forecast;
    }
    return forecast;
}

} // namespace postpred
