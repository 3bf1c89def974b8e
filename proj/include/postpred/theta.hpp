#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "postpred/tensor.hpp"

namespace postpred {

/// Describes how a flat primary-model parameter vector partitions into named
/// weight matrices and bias vectors.
class ThetaLayout {
public:
    struct Segment {
        std::string name;
        Shape shape;
        int64_t offset = 0;
        int64_t len = 0;
    };

    // Appends a segment; returns its offset.
    int64_t add(std::string name, Shape shape);

    int64_t total_len() const { return total_len_; }
    const std::vector<Segment>& segments() const { return segments_; }
    const Segment& at(std::string_view name) const;
    bool has(std::string_view name) const;

private:
    std::vector<Segment> segments_;
    int64_t total_len_ = 0;
};

/// A batch of sampled parameter vectors: [L,P] when the generator is
/// unconditioned, [B,L,P] when it conditions on the minibatch inputs.
struct ThetaBatch {
    Tensor values;
    ThetaLayout layout;

    static ThetaBatch unconditioned(Tensor values, ThetaLayout layout);
    static ThetaBatch conditional(Tensor values, ThetaLayout layout);

    bool conditional_form() const { return values.rank() == 3; }
    int64_t num_samples() const { return values.shape()[values.rank() - 2]; }
    int64_t batch_size() const; // conditional form only

    // Segment view shaped [L,...] or [B,L,...] following the layout entry.
    Tensor segment(std::string_view name) const;
};

// Axis of the Monte-Carlo sample index in per-example log-likelihood tensors
// produced from this batch: 0 for [L,B], 1 for [B,L].
int mc_axis_of(const ThetaBatch& theta);

} // namespace postpred
