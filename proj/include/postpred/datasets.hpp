#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "postpred/rng.hpp"
#include "postpred/tensor.hpp"

namespace postpred {

/// Per-column affine normalizer, fitted on training data only.
struct Standardizer {
    std::vector<double> mean, stddev;

    static Standardizer fit(const Tensor& m); // m: [N,d]
    Tensor apply(const Tensor& m) const;
    Tensor invert(const Tensor& m) const;
    double apply1(double v, int64_t col = 0) const { return (v - mean[col]) / stddev[col]; }
    double invert1(double v, int64_t col = 0) const { return v * stddev[col] + mean[col]; }
};

struct RegressionDataset {
    Tensor x; // [N,d]
    Tensor y; // [N,o]
    Tensor labels; // [N,1] optional; undefined when absent
    std::optional<Standardizer> x_std, y_std; // set once standardized

    int64_t size() const { return x.defined() ? x.extent(0) : 0; }
};

// Standardizes x and y in place (fit on this data) and records the parameters.
void standardize_in_place(RegressionDataset& data);

// ---- synthetic generators ----

struct XsinxOptions {
    int n_base = 32;
    bool grid_spacing = false;  // uniform random abscissae by default
    bool include_extras = true; // append the four fixed high-variance points
    double x_lo = 0.0, x_hi = 12.0;
    double test_lo = -2.0, test_hi = 14.0;
    int n_test = 1024;
};

struct XsinxData {
    RegressionDataset train;
    Tensor x_test; // [n_test,1], strictly wider range than the training inputs
};

// y = x*sin(x) plus four fixed high-variance points.
XsinxData gen_xsinx(const XsinxOptions& opt, Rng& rng);
const std::vector<std::pair<double, double>>& xsinx_extra_points();

struct MultimodalOptions {
    int n = 128;            // total; half per branch
    double noise_var = 0.01; // variance of the additive Gaussian noise
    int n_test = 512;
};

struct MultimodalData {
    RegressionDataset train; // labels: 0 = lower branch, 1 = upper branch
    Tensor x_test;           // [n_test,1] grid over (0,1)
};

// Two parallel curves y = a(x)sin(a(x)) (+1 on the upper branch), a(x)=10x-5;
// branches overlap on (0.3,0.6). Rows interleave lower/upper so even indices
// carry label 0 and odd indices label 1.
MultimodalData gen_multimodal(const MultimodalOptions& opt, Rng& rng);

// Noiseless branch curves in raw units.
double multimodal_lower(double x);
double multimodal_upper(double x);

// Period-12 sine plus linear trend plus Gaussian noise; raw units.
std::vector<double> gen_seasonal_series(int64_t t, Rng& rng);

// ---- series handling ----

struct WindowedSeries {
    Tensor inputs;  // [M,h_in]
    Tensor targets; // [M,h_out]

    int64_t size() const { return inputs.defined() ? inputs.extent(0) : 0; }
};

// Adjacent input/target windows slid across the series; M = T - h_in - h_out + 1.
WindowedSeries window_series(const std::vector<double>& series, int64_t h_in, int64_t h_out);

// One numeric value per row, optional non-numeric header line.
std::vector<double> load_csv_series(const std::string& path);

// Chronological split; no shuffling across the boundary.
std::pair<WindowedSeries, WindowedSeries> split_windows(const WindowedSeries& all, double train_fraction);

} // namespace postpred
