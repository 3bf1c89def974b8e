#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "postpred/errors.hpp"

namespace postpred {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<double> data; // row-major
    bool requires_grad = false;
    std::optional<std::vector<double>> grad; // absent until backward reaches this tensor

    std::vector<double>& ensure_grad();
    void accumulate_grad(const std::vector<double>& g);
};

/// Dense tensor of 64-bit reals with an attached reverse-mode differentiation
/// record. Cheap to copy (shared handle); the payload is immutable after
/// creation except for the grad slot and explicit in-place parameter updates
/// between optimizer steps.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false); // rank-0
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    int64_t numel() const;
    int64_t extent(int axis) const;

    const std::vector<double>& data() const;
    // Mutable access for optimizers and initializers only; never call while a
    // tape referencing this tensor is still pending.
    std::vector<double>& raw_data();

    bool requires_grad() const;
    void set_requires_grad(bool v);

    bool has_grad() const;
    const std::vector<double>& grad() const; // throws if absent
    void zero_grad();                        // resets the grad slot to absent

    double item() const; // numel()==1
    double at(const std::vector<int64_t>& index) const;

    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;

    friend Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad);
};

enum class OpKind : uint8_t {
    matmul,
    batched_matmul,
    relu,
    abs,
    square,
    exp,
    log,
    neg,
    add,
    sub,
    mul,
    scale,
    add_scalar,
    sum,
    mean,
    logsumexp,
    reshape,
    expand,
    transpose_last2,
    slice_last,
    concat_last,
};

struct TapeNode {
    OpKind op_kind;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward_fn; // saved context lives in the closure
};

// Per-thread recording of differentiable ops in creation order. backward()
// walks the nodes in exact reverse creation order and then frees the tape.
class Tape {
public:
    static Tape& active();

    bool recording() const { return disabled_ == 0; }
    void record(TapeNode node) { nodes_.push_back(std::move(node)); }
    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    friend struct NoGradGuard;
    std::vector<TapeNode> nodes_;
    int disabled_ = 0;

    friend void backward(const Tensor&);
};

// Suspends tape recording for the current scope (evaluation passes).
struct NoGradGuard {
    NoGradGuard() { ++Tape::active().disabled_; }
    ~NoGradGuard() { --Tape::active().disabled_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Populates .grad for every requires_grad tensor reachable from `loss`
// (scalar). Grads accumulate across calls; the tape is freed afterwards.
void backward(const Tensor& loss);

// ---- elementwise ----
Tensor relu(const Tensor& t);
Tensor abs(const Tensor& t);
Tensor square(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor neg(const Tensor& t);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, double c);
Tensor add_scalar(const Tensor& t, double c);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);                 // [m,k]x[k,n]
Tensor batched_matmul(const Tensor& w, const Tensor& v);         // [B,m,k]x[B,k,n]

// ---- reductions ----
Tensor sum(const Tensor& t);
Tensor sum(const Tensor& t, int axis);
Tensor mean(const Tensor& t);
Tensor mean(const Tensor& t, int axis);
Tensor logsumexp(const Tensor& t, int axis);

// ---- shape manipulation ----
Tensor reshape(const Tensor& t, Shape shape);
Tensor expand(const Tensor& t, int axis, int64_t extent); // insert replicated axis
Tensor transpose_last2(const Tensor& t);
Tensor slice_last(const Tensor& t, int64_t offset, int64_t len);
Tensor concat_last(const std::vector<Tensor>& parts);

} // namespace postpred
