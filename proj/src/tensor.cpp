#include "postpred/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace postpred {

int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
    if (!grad) grad.emplace(data.size(), 0.0);
    return *grad;
}

void TensorImpl::accumulate_grad(const std::vector<double>& g) {
    auto& dst = ensure_grad();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

namespace {

void check_shape(const Shape& shape) {
    for (int64_t e : shape) {
        if (e <= 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
}

} // namespace

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    check_shape(shape);
    const auto n = numel_of(shape);
    return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    check_shape(shape);
    const auto n = numel_of(shape);
    return make_tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return make_tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    check_shape(shape);
    if (numel_of(shape) != static_cast<int64_t>(data.size())) {
        throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(shape));
    }
    return make_tensor(std::move(shape), std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(impl_->data.size()); }

int64_t Tensor::extent(int axis) const {
    if (axis < 0 || axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(shape()));
    }
    return impl_->shape[axis];
}

const std::vector<double>& Tensor::data() const { return impl_->data; }
std::vector<double>& Tensor::raw_data() { return impl_->data; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool v) { impl_->requires_grad = v; }

bool Tensor::has_grad() const { return impl_ && impl_->grad.has_value(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor has no grad (backward never reached it)");
    return *impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.reset(); }

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(const std::vector<int64_t>& index) const {
    if (static_cast<int>(index.size()) != rank()) {
        throw DimensionError("index rank mismatch for shape " + shape_str(shape()));
    }
    int64_t flat = 0;
    for (int i = 0; i < rank(); ++i) {
        if (index[i] < 0 || index[i] >= impl_->shape[i]) {
            throw DimensionError("index out of range for shape " + shape_str(shape()));
        }
        flat = flat * impl_->shape[i] + index[i];
    }
    return impl_->data[flat];
}

Tape& Tape::active() {
    thread_local Tape tape;
    return tape;
}

namespace {

bool want_grad(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active().recording()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void record(OpKind kind, std::initializer_list<const Tensor*> inputs, const Tensor& out,
            std::function<void()> backward_fn) {
    TapeNode node;
    node.op_kind = kind;
    node.inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) node.inputs.push_back(t->impl());
    node.output = out.impl();
    node.backward_fn = std::move(backward_fn);
    Tape::active().record(std::move(node));
}

// ---------------------------------------------------------------- broadcasting

// Right-aligned broadcast where one operand's (padded) shape must equal the
// output shape; the other may have extent 1 (or be missing leading axes) on
// broadcast dimensions. Rejects two-sided broadcasts like [3,1]x[1,4].
struct BroadcastPlan {
    Shape out_shape;
    std::vector<int64_t> stride_a, stride_b; // per out axis; 0 on broadcast axes
};

std::vector<int64_t> padded_strides(const Shape& shape, const Shape& out) {
    const size_t pad = out.size() - shape.size();
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (size_t i = shape.size(); i-- > 0;) {
        strides[pad + i] = (shape[i] == 1 && out[pad + i] != 1) ? 0 : s;
        s *= shape[i];
    }
    return strides;
}

BroadcastPlan broadcast_plan(const char* op, const Shape& a, const Shape& b) {
    const size_t r = std::max(a.size(), b.size());
    Shape ap(r, 1), bp(r, 1);
    std::copy(a.begin(), a.end(), ap.begin() + (r - a.size()));
    std::copy(b.begin(), b.end(), bp.begin() + (r - b.size()));
    Shape out(r);
    bool a_dominates = true, b_dominates = true;
    for (size_t i = 0; i < r; ++i) {
        if (ap[i] != bp[i] && ap[i] != 1 && bp[i] != 1) {
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                                 " are not broadcastable");
        }
        out[i] = std::max(ap[i], bp[i]);
        if (ap[i] != out[i]) a_dominates = false;
        if (bp[i] != out[i]) b_dominates = false;
    }
    if (!a_dominates && !b_dominates) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " broadcast both ways; one side must match the output shape");
    }
    BroadcastPlan plan;
    plan.out_shape = std::move(out);
    plan.stride_a = padded_strides(a, plan.out_shape);
    plan.stride_b = padded_strides(b, plan.out_shape);
    return plan;
}

// Calls fn(out_flat, a_flat, b_flat) for every output element in row-major order.
template <typename Fn>
void for_each_bc(const BroadcastPlan& plan, Fn&& fn) {
    const size_t r = plan.out_shape.size();
    const int64_t n = numel_of(plan.out_shape);
    std::vector<int64_t> idx(r, 0);
    int64_t fa = 0, fb = 0;
    for (int64_t i = 0; i < n; ++i) {
        fn(i, fa, fb);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            fa += plan.stride_a[d];
            fb += plan.stride_b[d];
            if (idx[d] < plan.out_shape[d]) break;
            fa -= plan.stride_a[d] * plan.out_shape[d];
            fb -= plan.stride_b[d] * plan.out_shape[d];
            idx[d] = 0;
        }
    }
}

Tensor binary_op(const char* name, OpKind kind, const Tensor& a, const Tensor& b,
                 double (*fwd)(double, double), double (*dfda)(double, double),
                 double (*dfdb)(double, double)) {
    BroadcastPlan plan = broadcast_plan(name, a.shape(), b.shape());
    std::vector<double> out_data(numel_of(plan.out_shape));
    const auto& ad = a.data();
    const auto& bd = b.data();
    for_each_bc(plan, [&](int64_t o, int64_t fa, int64_t fb) { out_data[o] = fwd(ad[fa], bd[fb]); });

    const bool rec = want_grad({&a, &b});
    Tensor out = make_tensor(plan.out_shape, std::move(out_data), rec);
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        record(kind, {&a, &b}, out, [ai, bi, oi, plan, dfda, dfdb]() {
            const auto& g = *oi->grad;
            double* ga = ai->requires_grad ? ai->ensure_grad().data() : nullptr;
            double* gb = bi->requires_grad ? bi->ensure_grad().data() : nullptr;
            for_each_bc(plan, [&](int64_t o, int64_t fa, int64_t fb) {
                if (ga) ga[fa] += g[o] * dfda(ai->data[fa], bi->data[fb]);
                if (gb) gb[fb] += g[o] * dfdb(ai->data[fa], bi->data[fb]);
            });
        });
    }
    return out;
}

Tensor unary_op(OpKind kind, const Tensor& t, double (*fwd)(double), double (*dfdx)(double)) {
    const auto& td = t.data();
    std::vector<double> out_data(td.size());
    for (size_t i = 0; i < td.size(); ++i) out_data[i] = fwd(td[i]);

    const bool rec = want_grad({&t});
    Tensor out = make_tensor(t.shape(), std::move(out_data), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(kind, {&t}, out, [ti, oi, dfdx]() {
            const auto& g = *oi->grad;
            auto& gt = ti->ensure_grad();
            for (size_t i = 0; i < gt.size(); ++i) gt[i] += g[i] * dfdx(ti->data[i]);
        });
    }
    return out;
}

// c[m,n] = a[m,k]*b[k,n]; every c entry accumulates over the contraction index
// in ascending order, so a per-slice loop reproduces batched results exactly.
void matmul_kernel(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    std::fill(c, c + m * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double apv = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += apv * brow[j];
        }
    }
}

// ga += g*b^T
void matmul_backward_a(const double* g, const double* b, double* ga, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* garow = ga + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            garow[p] += acc;
        }
    }
}

// gb += a^T*g
void matmul_backward_b(const double* g, const double* a, double* gb, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double apv = arow[p];
            double* gbrow = gb + p * n;
            for (int64_t j = 0; j < n; ++j) gbrow[j] += apv * grow[j];
        }
    }
}

void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& ext, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    ext = s[axis];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

void check_axis(const Tensor& t, int axis, const char* op) {
    if (axis < 0 || axis >= t.rank()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                             shape_str(t.shape()));
    }
}

Shape drop_axis(const Shape& s, int axis) {
    Shape out;
    out.reserve(s.size() - 1);
    for (size_t i = 0; i < s.size(); ++i) {
        if (static_cast<int>(i) != axis) out.push_back(s[i]);
    }
    return out;
}

} // namespace

// ------------------------------------------------------------------ elementwise

Tensor relu(const Tensor& t) {
    return unary_op(
        OpKind::relu, t, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; }); // subgradient 0 at exactly 0
}

Tensor abs(const Tensor& t) {
    return unary_op(
        OpKind::abs, t, [](double x) { return std::fabs(x); },
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& t) {
    return unary_op(
        OpKind::square, t, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Tensor exp(const Tensor& t) {
    return unary_op(
        OpKind::exp, t, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& t) {
    const auto& d = t.data();
    for (size_t i = 0; i < d.size(); ++i) {
        if (!(d[i] > 0.0)) {
            throw DomainError("log: input " + std::to_string(d[i]) + " at flat index " + std::to_string(i) +
                              " is not strictly positive");
        }
    }
    return unary_op(
        OpKind::log, t, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor neg(const Tensor& t) {
    return unary_op(
        OpKind::neg, t, [](double x) { return -x; }, [](double) { return -1.0; });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", OpKind::add, a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", OpKind::sub, a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", OpKind::mul, a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& t, double c) {
    const auto& td = t.data();
    std::vector<double> out_data(td.size());
    for (size_t i = 0; i < td.size(); ++i) out_data[i] = c * td[i];
    const bool rec = want_grad({&t});
    Tensor out = make_tensor(t.shape(), std::move(out_data), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::scale, {&t}, out, [ti, oi, c]() {
            const auto& g = *oi->grad;
            auto& gt = ti->ensure_grad();
            for (size_t i = 0; i < gt.size(); ++i) gt[i] += c * g[i];
        });
    }
    return out;
}

Tensor add_scalar(const Tensor& t, double c) {
    const auto& td = t.data();
    std::vector<double> out_data(td.size());
    for (size_t i = 0; i < td.size(); ++i) out_data[i] = td[i] + c;
    const bool rec = want_grad({&t});
    Tensor out = make_tensor(t.shape(), std::move(out_data), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::add_scalar, {&t}, out, [ti, oi]() {
            const auto& g = *oi->grad;
            auto& gt = ti->ensure_grad();
            for (size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
        });
    }
    return out;
}

// --------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    if (b.extent(0) != k) {
        throw DimensionError("matmul: inner extents disagree: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    std::vector<double> out_data(m * n);
    matmul_kernel(a.data().data(), b.data().data(), out_data.data(), m, k, n);

    const bool rec = want_grad({&a, &b});
    Tensor out = make_tensor({m, n}, std::move(out_data), rec);
    if (rec) {
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        record(OpKind::matmul, {&a, &b}, out, [ai, bi, oi, m, k, n]() {
            const double* g = oi->grad->data();
            if (ai->requires_grad) matmul_backward_a(g, bi->data.data(), ai->ensure_grad().data(), m, k, n);
            if (bi->requires_grad) matmul_backward_b(g, ai->data.data(), bi->ensure_grad().data(), m, k, n);
        });
    }
    return out;
}

Tensor batched_matmul(const Tensor& w, const Tensor& v) {
    if (w.rank() != 3 || v.rank() != 3) {
        throw DimensionError("batched_matmul: expects rank-3 operands, got " + shape_str(w.shape()) +
                             " and " + shape_str(v.shape()));
    }
    const int64_t batch = w.extent(0), m = w.extent(1), k = w.extent(2), n = v.extent(2);
    if (v.extent(0) != batch) {
        throw DimensionError("batched_matmul: batch extents disagree: " + shape_str(w.shape()) + " vs " +
                             shape_str(v.shape()));
    }
    if (v.extent(1) != k) {
        throw DimensionError("batched_matmul: inner extents disagree: " + shape_str(w.shape()) + " vs " +
                             shape_str(v.shape()));
    }
    std::vector<double> out_data(batch * m * n);
    for (int64_t s = 0; s < batch; ++s) {
        matmul_kernel(w.data().data() + s * m * k, v.data().data() + s * k * n, out_data.data() + s * m * n,
                      m, k, n);
    }
    const bool rec = want_grad({&w, &v});
    Tensor out = make_tensor({batch, m, n}, std::move(out_data), rec);
    if (rec) {
        auto wi = w.impl(), vi = v.impl(), oi = out.impl();
        record(OpKind::batched_matmul, {&w, &v}, out, [wi, vi, oi, batch, m, k, n]() {
            const double* g = oi->grad->data();
            double* gw = wi->requires_grad ? wi->ensure_grad().data() : nullptr;
            double* gv = vi->requires_grad ? vi->ensure_grad().data() : nullptr;
            for (int64_t s = 0; s < batch; ++s) {
                const double* gs = g + s * m * n;
                if (gw) matmul_backward_a(gs, vi->data.data() + s * k * n, gw + s * m * k, m, k, n);
                if (gv) matmul_backward_b(gs, wi->data.data() + s * m * k, gv + s * k * n, m, k, n);
            }
        });
    }
    return out;
}

// ------------------------------------------------------------------- reductions

Tensor sum(const Tensor& t) {
    const auto& d = t.data();
    double acc = 0.0;
    for (double v : d) acc += v;
    const bool rec = want_grad({&t});
    Tensor out = make_tensor(Shape{}, {acc}, rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::sum, {&t}, out, [ti, oi]() {
            const double g = (*oi->grad)[0];
            auto& gt = ti->ensure_grad();
            for (double& v : gt) v += g;
        });
    }
    return out;
}

Tensor sum(const Tensor& t, int axis) {
    check_axis(t, axis, "sum");
    int64_t outer, ext, inner;
    axis_split(t.shape(), axis, outer, ext, inner);
    std::vector<double> out_data(outer * inner, 0.0);
    const auto& d = t.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t a = 0; a < ext; ++a) {
            const double* src = d.data() + (o * ext + a) * inner;
            double* dst = out_data.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    const bool rec = want_grad({&t});
    Tensor out = make_tensor(drop_axis(t.shape(), axis), std::move(out_data), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::sum, {&t}, out, [ti, oi, outer, ext, inner]() {
            const auto& g = *oi->grad;
            auto& gt = ti->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t a = 0; a < ext; ++a) {
                    double* dst = gt.data() + (o * ext + a) * inner;
                    const double* src = g.data() + o * inner;
                    for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

Tensor mean(const Tensor& t) { return scale(sum(t), 1.0 / static_cast<double>(t.numel())); }

Tensor mean(const Tensor& t, int axis) {
    check_axis(t, axis, "mean");
    return scale(sum(t, axis), 1.0 / static_cast<double>(t.extent(axis)));
}

Tensor logsumexp(const Tensor& t, int axis) {
    check_axis(t, axis, "logsumexp");
    const auto& d = t.data();
    for (size_t i = 0; i < d.size(); ++i) {
        if (std::isnan(d[i])) {
            throw NumericError("logsumexp: NaN input at flat index " + std::to_string(i));
        }
    }
    int64_t outer, ext, inner;
    axis_split(t.shape(), axis, outer, ext, inner);
    std::vector<double> out_data(outer * inner);
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
            double m = -std::numeric_limits<double>::infinity();
            for (int64_t a = 0; a < ext; ++a) m = std::max(m, d[(o * ext + a) * inner + i]);
            double s = 0.0;
            for (int64_t a = 0; a < ext; ++a) s += std::exp(d[(o * ext + a) * inner + i] - m);
            out_data[o * inner + i] = m + std::log(s);
        }
    }
    const bool rec = want_grad({&t});
    Tensor out = make_tensor(drop_axis(t.shape(), axis), std::move(out_data), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::logsumexp, {&t}, out, [ti, oi, outer, ext, inner]() {
            const auto& g = *oi->grad;
            const auto& od = oi->data;
            auto& gt = ti->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t i = 0; i < inner; ++i) {
                    const double lse = od[o * inner + i];
                    const double go = g[o * inner + i];
                    for (int64_t a = 0; a < ext; ++a) {
                        const int64_t idx = (o * ext + a) * inner + i;
                        gt[idx] += go * std::exp(ti->data[idx] - lse);
                    }
                }
            }
        });
    }
    return out;
}

// ------------------------------------------------------------ shape manipulation

Tensor reshape(const Tensor& t, Shape shape) {
    check_shape(shape);
    if (numel_of(shape) != t.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(t.shape()) + " as " + shape_str(shape));
    }
    const bool rec = want_grad({&t});
    Tensor out = make_tensor(std::move(shape), t.data(), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::reshape, {&t}, out, [ti, oi]() { ti->accumulate_grad(*oi->grad); });
    }
    return out;
}

Tensor expand(const Tensor& t, int axis, int64_t extent) {
    if (axis < 0 || axis > t.rank()) {
        throw DimensionError("expand: axis " + std::to_string(axis) + " invalid for shape " +
                             shape_str(t.shape()));
    }
    if (extent <= 0) throw DimensionError("expand: extent must be positive");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= t.shape()[i];
    for (int i = axis; i < t.rank(); ++i) inner *= t.shape()[i];

    Shape out_shape = t.shape();
    out_shape.insert(out_shape.begin() + axis, extent);
    std::vector<double> out_data(outer * extent * inner);
    const auto& d = t.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t e = 0; e < extent; ++e) {
            std::copy(d.begin() + o * inner, d.begin() + (o + 1) * inner,
                      out_data.begin() + (o * extent + e) * inner);
        }
    }
    const bool rec = want_grad({&t});
    Tensor out = make_tensor(std::move(out_shape), std::move(out_data), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::expand, {&t}, out, [ti, oi, outer, extent, inner]() {
            const auto& g = *oi->grad;
            auto& gt = ti->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t e = 0; e < extent; ++e) {
                    const double* src = g.data() + (o * extent + e) * inner;
                    double* dst = gt.data() + o * inner;
                    for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return out;
}

namespace {

void transpose_slices(const double* src, double* dst, int64_t batch, int64_t m, int64_t n) {
    for (int64_t s = 0; s < batch; ++s) {
        const double* a = src + s * m * n;
        double* b = dst + s * m * n;
        for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < n; ++j) b[j * m + i] = a[i * n + j];
        }
    }
}

} // namespace

Tensor transpose_last2(const Tensor& t) {
    if (t.rank() < 2) {
        throw DimensionError("transpose_last2: requires rank >= 2, got " + shape_str(t.shape()));
    }
    const int64_t m = t.shape()[t.rank() - 2], n = t.shape()[t.rank() - 1];
    const int64_t batch = t.numel() / (m * n);
    Shape out_shape = t.shape();
    std::swap(out_shape[t.rank() - 2], out_shape[t.rank() - 1]);
    std::vector<double> out_data(t.numel());
    transpose_slices(t.data().data(), out_data.data(), batch, m, n);

    const bool rec = want_grad({&t});
    Tensor out = make_tensor(std::move(out_shape), std::move(out_data), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::transpose_last2, {&t}, out, [ti, oi, batch, m, n]() {
            const auto& g = *oi->grad;
            std::vector<double> gt(g.size());
            transpose_slices(g.data(), gt.data(), batch, n, m);
            ti->accumulate_grad(gt);
        });
    }
    return out;
}

Tensor slice_last(const Tensor& t, int64_t offset, int64_t len) {
    if (t.rank() < 1) throw DimensionError("slice_last: requires rank >= 1");
    const int64_t last = t.shape()[t.rank() - 1];
    if (offset < 0 || len <= 0 || offset + len > last) {
        throw DimensionError("slice_last: range [" + std::to_string(offset) + "," +
                             std::to_string(offset + len) + ") invalid for extent " + std::to_string(last));
    }
    const int64_t lead = t.numel() / last;
    Shape out_shape = t.shape();
    out_shape.back() = len;
    std::vector<double> out_data(lead * len);
    const auto& d = t.data();
    for (int64_t r = 0; r < lead; ++r) {
        std::copy(d.begin() + r * last + offset, d.begin() + r * last + offset + len,
                  out_data.begin() + r * len);
    }
    const bool rec = want_grad({&t});
    Tensor out = make_tensor(std::move(out_shape), std::move(out_data), rec);
    if (rec) {
        auto ti = t.impl(), oi = out.impl();
        record(OpKind::slice_last, {&t}, out, [ti, oi, lead, last, offset, len]() {
            const auto& g = *oi->grad;
            auto& gt = ti->ensure_grad();
            for (int64_t r = 0; r < lead; ++r) {
                for (int64_t j = 0; j < len; ++j) gt[r * last + offset + j] += g[r * len + j];
            }
        });
    }
    return out;
}

Tensor concat_last(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_last: no inputs");
    const Shape& first = parts[0].shape();
    if (first.empty()) throw DimensionError("concat_last: requires rank >= 1");
    int64_t total_last = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != parts[0].rank()) {
            throw DimensionError("concat_last: rank mismatch between " + shape_str(first) + " and " +
                                 shape_str(p.shape()));
        }
        for (int i = 0; i + 1 < p.rank(); ++i) {
            if (p.shape()[i] != first[i]) {
                throw DimensionError("concat_last: leading extents disagree: " + shape_str(first) + " vs " +
                                     shape_str(p.shape()));
            }
        }
        total_last += p.shape().back();
    }
    const int64_t lead = parts[0].numel() / first.back();
    Shape out_shape = first;
    out_shape.back() = total_last;
    std::vector<double> out_data(lead * total_last);
    int64_t col = 0;
    for (const Tensor& p : parts) {
        const int64_t w = p.shape().back();
        const auto& d = p.data();
        for (int64_t r = 0; r < lead; ++r) {
            std::copy(d.begin() + r * w, d.begin() + (r + 1) * w, out_data.begin() + r * total_last + col);
        }
        col += w;
    }
    bool rec = Tape::active().recording();
    if (rec) {
        rec = false;
        for (const Tensor& p : parts) rec = rec || p.requires_grad();
    }
    Tensor out = make_tensor(std::move(out_shape), std::move(out_data), rec);
    if (rec) {
        std::vector<std::shared_ptr<TensorImpl>> impls;
        impls.reserve(parts.size());
        for (const Tensor& p : parts) impls.push_back(p.impl());
        auto oi = out.impl();
        TapeNode node;
        node.op_kind = OpKind::concat_last;
        node.inputs = impls;
        node.output = oi;
        node.backward_fn = [impls, oi, lead, total_last]() {
            const auto& g = *oi->grad;
            int64_t col = 0;
            for (const auto& pi : impls) {
                const int64_t w = pi->shape.back();
                if (pi->requires_grad) {
                    auto& gp = pi->ensure_grad();
                    for (int64_t r = 0; r < lead; ++r) {
                        for (int64_t j = 0; j < w; ++j) gp[r * w + j] += g[r * total_last + col + j];
                    }
                }
                col += w;
            }
        };
        Tape::active().record(std::move(node));
    }
    return out;
}

// --------------------------------------------------------------------- backward

void backward(const Tensor& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined loss tensor");
    if (loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) {
        throw ContractError("backward: loss is not connected to the tape (requires_grad is false)");
    }
    loss.impl()->grad = std::vector<double>{1.0};
    auto& tape = Tape::active();
    for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
        if (it->output->grad) it->backward_fn();
    }
    tape.clear();
}

} // namespace postpred
