#pragma once

// Test-only reference implementations. These stay independent of the library
// paths they check: plain loops over std::vector<double>.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "postpred/rng.hpp"
#include "postpred/tensor.hpp"

namespace oracles {

struct GradCheckResult {
    double max_rel_err = 0.0;
    long checked = 0;
    bool ok = true;
    std::string worst;
};

// Central finite differences against reverse-mode grads for every coordinate
// of every parameter. `loss_fn` must be a deterministic function of the
// parameter data (re-seed any rng it uses per call).
inline GradCheckResult check_gradients(const std::function<postpred::Tensor()>& loss_fn,
                                       std::vector<postpred::Tensor> params, double step = 1e-6,
                                       double rel_tol = 1e-5, double abs_floor = 1e-8) {
    using postpred::NoGradGuard;
    GradCheckResult result;

    for (auto& p : params) p.zero_grad();
    postpred::Tensor loss = loss_fn();
    postpred::backward(loss);

    std::vector<std::vector<double>> analytic;
    for (auto& p : params) {
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.numel(), 0.0));
    }

    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& data = params[pi].raw_data();
        for (size_t j = 0; j < data.size(); ++j) {
            const double saved = data[j];
            double f_plus, f_minus;
            {
                NoGradGuard no_grad;
                data[j] = saved + step;
                f_plus = loss_fn().item();
                data[j] = saved - step;
                f_minus = loss_fn().item();
                data[j] = saved;
            }
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[pi][j];
            const double err = std::fabs(a - numeric);
            const double tol = std::max(abs_floor, rel_tol * std::max(std::fabs(a), std::fabs(numeric)));
            const double rel = err <= abs_floor ? 0.0 : err / std::max(std::fabs(a), std::fabs(numeric));
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++result.checked;
            if (err > tol) {
                result.ok = false;
                result.worst = "param " + std::to_string(pi) + "[" + std::to_string(j) + "]: analytic " +
                               std::to_string(a) + " vs numeric " + std::to_string(numeric);
            }
        }
    }
    return result;
}

// c[m,n] = a[m,k]*b[k,n], textbook i,j,p loops (per-(i,j) accumulation over p
// ascending, matching the library's mandated summation order).
inline std::vector<double> ref_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                      long m, long k, long n) {
    std::vector<double> c(m * n, 0.0);
    for (long i = 0; i < m; ++i) {
        for (long j = 0; j < n; ++j) {
            double acc = 0.0;
            for (long p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
    return c;
}

struct OlsFit {
    double slope = 0.0, intercept = 0.0;
};

inline OlsFit ols_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    OlsFit fit;
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / n;
    return fit;
}

// Textbook bias-corrected Adam on a flat vector.
struct RefAdam {
    std::vector<double> m, v;
    long t = 0;

    void step(std::vector<double>& w, const std::vector<double>& g, double lr, double b1, double b2,
              double eps) {
        if (m.empty()) {
            m.assign(w.size(), 0.0);
            v.assign(w.size(), 0.0);
        }
        ++t;
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / (1.0 - std::pow(b1, t));
            const double vhat = v[i] / (1.0 - std::pow(b2, t));
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

inline postpred::Tensor random_tensor(postpred::Shape shape, postpred::Rng& rng, bool requires_grad = false,
                                      double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(postpred::numel_of(shape));
    for (double& v : data) v = rng.uniform(lo, hi);
    return postpred::Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace oracles
