#include "postpred/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace postpred {

Standardizer Standardizer::fit(const Tensor& m) {
    if (m.rank() != 2) throw ContractError("Standardizer::fit expects [N,d], got " + shape_str(m.shape()));
    const int64_t n = m.extent(0), d = m.extent(1);
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) s.mean[j] += m.data()[i * d + j];
    }
    for (int64_t j = 0; j < d; ++j) s.mean[j] /= static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            const double c = m.data()[i * d + j] - s.mean[j];
            s.stddev[j] += c * c;
        }
    }
    for (int64_t j = 0; j < d; ++j) {
        s.stddev[j] = std::sqrt(s.stddev[j] / static_cast<double>(n));
        if (s.stddev[j] == 0.0) s.stddev[j] = 1.0; // constant column: leave values centered only
    }
    return s;
}

Tensor Standardizer::apply(const Tensor& m) const {
    const int64_t n = m.extent(0), d = m.extent(1);
    std::vector<double> out(n * d);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = (m.data()[i * d + j] - mean[j]) / stddev[j];
    }
    return Tensor::from_data({n, d}, std::move(out));
}

Tensor Standardizer::invert(const Tensor& m) const {
    const int64_t n = m.extent(0), d = m.extent(1);
    std::vector<double> out(n * d);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = m.data()[i * d + j] * stddev[j] + mean[j];
    }
    return Tensor::from_data({n, d}, std::move(out));
}

void standardize_in_place(RegressionDataset& data) {
    Standardizer sx = Standardizer::fit(data.x);
    Standardizer sy = Standardizer::fit(data.y);
    data.x = sx.apply(data.x);
    data.y = sy.apply(data.y);
    data.x_std = std::move(sx);
    data.y_std = std::move(sy);
}

const std::vector<std::pair<double, double>>& xsinx_extra_points() {
    static const std::vector<std::pair<double, double>> pts = {
        {7.0, -7.0}, {8.5, 7.0}, {10.0, -7.0}, {11.5, 7.0}};
    return pts;
}

XsinxData gen_xsinx(const XsinxOptions& opt, Rng& rng) {
    static const std::vector<std::pair<double, double>> kNoExtras;
    const auto& extras = opt.include_extras ? xsinx_extra_points() : kNoExtras;
    const int n = opt.n_base + static_cast<int>(extras.size());
    std::vector<double> xs(n), ys(n);
    for (int i = 0; i < opt.n_base; ++i) {
        double x;
        if (opt.grid_spacing) {
            x = opt.x_lo + (opt.x_hi - opt.x_lo) * (opt.n_base == 1 ? 0.0 : static_cast<double>(i) /
                                                                               (opt.n_base - 1));
        } else {
            x = rng.uniform(opt.x_lo, opt.x_hi);
        }
        xs[i] = x;
        ys[i] = x * std::sin(x);
    }
    for (size_t i = 0; i < extras.size(); ++i) {
        xs[opt.n_base + i] = extras[i].first;
        ys[opt.n_base + i] = extras[i].second;
    }
    XsinxData out;
    out.train.x = Tensor::from_data({n, 1}, std::move(xs));
    out.train.y = Tensor::from_data({n, 1}, std::move(ys));

    std::vector<double> grid(opt.n_test);
    for (int i = 0; i < opt.n_test; ++i) {
        grid[i] = opt.test_lo + (opt.test_hi - opt.test_lo) * static_cast<double>(i) / (opt.n_test - 1);
    }
    out.x_test = Tensor::from_data({opt.n_test, 1}, std::move(grid));
    return out;
}

double multimodal_lower(double x) {
    const double a = 10.0 * x - 5.0;
    return a * std::sin(a);
}

double multimodal_upper(double x) { return multimodal_lower(x) + 1.0; }

MultimodalData gen_multimodal(const MultimodalOptions& opt, Rng& rng) {
    if (opt.n % 2 != 0) throw ContractError("gen_multimodal: n must be even (equal branch counts)");
    const int per_branch = opt.n / 2;
    const double noise_std = std::sqrt(opt.noise_var);
    std::vector<double> xs(opt.n), ys(opt.n), labels(opt.n);
    for (int i = 0; i < per_branch; ++i) {
        // even row: lower branch on (0,0.6); odd row: upper branch on (0.3,1)
        const double xl = rng.uniform(0.0, 0.6);
        xs[2 * i] = xl;
        ys[2 * i] = multimodal_lower(xl) + noise_std * rng.normal();
        labels[2 * i] = 0.0;
        const double xu = rng.uniform(0.3, 1.0);
        xs[2 * i + 1] = xu;
        ys[2 * i + 1] = multimodal_upper(xu) + noise_std * rng.normal();
        labels[2 * i + 1] = 1.0;
    }
    MultimodalData out;
    out.train.x = Tensor::from_data({opt.n, 1}, std::move(xs));
    out.train.y = Tensor::from_data({opt.n, 1}, std::move(ys));
    out.train.labels = Tensor::from_data({opt.n, 1}, std::move(labels));

    std::vector<double> grid(opt.n_test);
    for (int i = 0; i < opt.n_test; ++i) {
        grid[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(opt.n_test);
    }
    out.x_test = Tensor::from_data({opt.n_test, 1}, std::move(grid));
    return out;
}

std::vector<double> gen_seasonal_series(int64_t t, Rng& rng) {
    std::vector<double> series(t);
    for (int64_t i = 0; i < t; ++i) {
        const double seasonal = 5.0 * std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(i) / 12.0);
        const double trend = 0.002 * static_cast<double>(i);
        series[i] = 10.0 + seasonal + trend + 0.5 * rng.normal();
    }
    return series;
}

WindowedSeries window_series(const std::vector<double>& series, int64_t h_in, int64_t h_out) {
    if (h_in < 1 || h_out < 1) throw ContractError("window_series: window lengths must be >= 1");
    const int64_t t = static_cast<int64_t>(series.size());
    if (t < h_in + h_out) {
        throw ContractError("window_series: series length " + std::to_string(t) +
                            " is shorter than one window (" + std::to_string(h_in + h_out) + ")");
    }
    const int64_t m = t - h_in - h_out + 1;
    std::vector<double> inputs(m * h_in), targets(m * h_out);
    for (int64_t w = 0; w < m; ++w) {
        for (int64_t i = 0; i < h_in; ++i) inputs[w * h_in + i] = series[w + i];
        for (int64_t i = 0; i < h_out; ++i) targets[w * h_out + i] = series[w + h_in + i];
    }
    WindowedSeries out;
    out.inputs = Tensor::from_data({m, h_in}, std::move(inputs));
    out.targets = Tensor::from_data({m, h_out}, std::move(targets));
    return out;
}

std::vector<double> load_csv_series(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open series CSV: " + path);
    std::vector<double> series;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // trim whitespace and a possible trailing CR
        size_t b = line.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) continue;
        size_t e = line.find_last_not_of(" \t\r\n");
        std::string cell = line.substr(b, e - b + 1);
        try {
            size_t used = 0;
            double v = std::stod(cell, &used);
            if (used != cell.size()) throw std::invalid_argument(cell);
            series.push_back(v);
        } catch (const std::exception&) {
            if (line_no == 1) continue; // header line
            throw IngestionError("unparseable value '" + cell + "' at line " + std::to_string(line_no) +
                                 " of " + path);
        }
    }
    if (series.empty()) throw IngestionError("no numeric rows in series CSV: " + path);
    return series;
}

std::pair<WindowedSeries, WindowedSeries> split_windows(const WindowedSeries& all, double train_fraction) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw ContractError("split_windows: train fraction must lie in (0,1)");
    }
    const int64_t m = all.size();
    int64_t n_train = static_cast<int64_t>(std::llround(static_cast<double>(m) * train_fraction));
    n_train = std::max<int64_t>(1, std::min(m - 1, n_train));
    const int64_t h_in = all.inputs.extent(1), h_out = all.targets.extent(1);

    auto take = [&](int64_t begin, int64_t count) {
        WindowedSeries part;
        std::vector<double> in(count * h_in), tg(count * h_out);
        std::copy_n(all.inputs.data().begin() + begin * h_in, count * h_in, in.begin());
        std::copy_n(all.targets.data().begin() + begin * h_out, count * h_out, tg.begin());
        part.inputs = Tensor::from_data({count, h_in}, std::move(in));
        part.targets = Tensor::from_data({count, h_out}, std::move(tg));
        return part;
    };
    return {take(0, n_train), take(n_train, m - n_train)};
}

} // namespace postpred
