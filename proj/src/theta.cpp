#include "postpred/theta.hpp"

namespace postpred {

int64_t ThetaLayout::add(std::string name, Shape shape) {
    for (const Segment& s : segments_) {
        if (s.name == name) throw ContractError("ThetaLayout: duplicate segment '" + name + "'");
    }
    Segment seg;
    seg.name = std::move(name);
    seg.len = numel_of(shape);
    seg.shape = std::move(shape);
    seg.offset = total_len_;
    total_len_ += seg.len;
    segments_.push_back(std::move(seg));
    return segments_.back().offset;
}

const ThetaLayout::Segment& ThetaLayout::at(std::string_view name) const {
    for (const Segment& s : segments_) {
        if (s.name == name) return s;
    }
    throw ContractError("ThetaLayout: unknown segment '" + std::string(name) + "'");
}

bool ThetaLayout::has(std::string_view name) const {
    for (const Segment& s : segments_) {
        if (s.name == name) return true;
    }
    return false;
}

namespace {

void check_trailing(const Tensor& values, const ThetaLayout& layout) {
    if (values.shape().back() != layout.total_len()) {
        throw ContractError("ThetaBatch: trailing extent " + std::to_string(values.shape().back()) +
                            " does not match layout length " + std::to_string(layout.total_len()));
    }
}

} // namespace

ThetaBatch ThetaBatch::unconditioned(Tensor values, ThetaLayout layout) {
    if (values.rank() != 2) {
        throw ContractError("ThetaBatch::unconditioned expects [L,P] values, got " +
                            shape_str(values.shape()));
    }
    check_trailing(values, layout);
    return ThetaBatch{std::move(values), std::move(layout)};
}

ThetaBatch ThetaBatch::conditional(Tensor values, ThetaLayout layout) {
    if (values.rank() != 3) {
        throw ContractError("ThetaBatch::conditional expects [B,L,P] values, got " +
                            shape_str(values.shape()));
    }
    check_trailing(values, layout);
    return ThetaBatch{std::move(values), std::move(layout)};
}

int64_t ThetaBatch::batch_size() const {
    if (!conditional_form()) throw ContractError("ThetaBatch: batch_size() on unconditioned batch");
    return values.shape()[0];
}

Tensor ThetaBatch::segment(std::string_view name) const {
    const auto& seg = layout.at(name);
    Tensor flat = slice_last(values, seg.offset, seg.len);
    Shape out;
    if (conditional_form()) out = {values.shape()[0], values.shape()[1]};
    else out = {values.shape()[0]};
    out.insert(out.end(), seg.shape.begin(), seg.shape.end());
    return reshape(flat, std::move(out));
}

int mc_axis_of(const ThetaBatch& theta) { return theta.conditional_form() ? 1 : 0; }

} // namespace postpred
