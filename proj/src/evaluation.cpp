#include "postpred/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace postpred {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double q) {
    // linear interpolation between order statistics
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

void summarize(PredictiveFan& fan) {
    const int64_t n = fan.n_inputs(), l = fan.n_draws(), o = fan.out_dim();
    fan.mean.assign(n, std::vector<double>(o, 0.0));
    fan.q025.assign(n, std::vector<double>(o, 0.0));
    fan.q50.assign(n, std::vector<double>(o, 0.0));
    fan.q975.assign(n, std::vector<double>(o, 0.0));
    std::vector<double> buf(l);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t k = 0; k < o; ++k) {
            double acc = 0.0;
            for (int64_t s = 0; s < l; ++s) {
                buf[s] = fan.samples[i][s][k];
                acc += buf[s];
            }
            fan.mean[i][k] = acc / static_cast<double>(l);
            std::sort(buf.begin(), buf.end());
            fan.q025[i][k] = quantile_sorted(buf, 0.025);
            fan.q50[i][k] = quantile_sorted(buf, 0.5);
            fan.q975[i][k] = quantile_sorted(buf, 0.975);
        }
    }
}

} // namespace

namespace {

Tensor rows_of(const Tensor& t, int64_t begin, int64_t count) {
    const int64_t d = t.extent(1);
    std::vector<double> data(t.data().begin() + begin * d, t.data().begin() + (begin + count) * d);
    return Tensor::from_data({count, d}, std::move(data));
}

} // namespace

PredictiveFan sample_predictive(const PrimaryModel& primary, PosteriorModel& posterior,
                                const Tensor& x_test, int64_t l_eval, Rng& rng, const Tensor& cond) {
    if (l_eval < 1) throw ContractError("sample_predictive: l_eval must be >= 1");
    NoGradGuard no_grad;
    const int64_t n = x_test.extent(0), o = primary.output_dim();
    PredictiveFan fan;
    fan.x.resize(n);
    for (int64_t i = 0; i < n; ++i) fan.x[i] = x_test.data()[i * x_test.extent(1)];
    fan.samples.assign(n, std::vector<std::vector<double>>(l_eval, std::vector<double>(o)));

    // Evaluate in input chunks to bound the transient theta/activation
    // footprint; unconditioned draws happen once so all chunks share them.
    const int64_t per_row = l_eval * std::max<int64_t>(primary.layout().total_len(), 1);
    const int64_t chunk = std::max<int64_t>(1, std::min<int64_t>(n, 2'000'000 / per_row + 1));

    ThetaBatch shared_theta;
    if (!posterior.is_conditional()) {
        shared_theta = posterior.sample(primary.layout(), l_eval, rng);
    }
    const Tensor& cond_src = cond.defined() ? cond : x_test;
    for (int64_t begin = 0; begin < n; begin += chunk) {
        const int64_t count = std::min(chunk, n - begin);
        Tensor xb = rows_of(x_test, begin, count);
        Tensor preds;
        bool conditional_form;
        if (posterior.is_conditional()) {
            ThetaBatch theta =
                posterior.sample_conditional(primary.layout(), rows_of(cond_src, begin, count), l_eval, rng);
            preds = primary.forward(theta, xb);
            conditional_form = true;
        } else {
            preds = primary.forward(shared_theta, xb);
            conditional_form = false;
        }
        const auto& d = preds.data();
        for (int64_t i = 0; i < count; ++i) {
            for (int64_t s = 0; s < l_eval; ++s) {
                const int64_t base = conditional_form ? (i * l_eval + s) * o : (s * count + i) * o;
                for (int64_t k = 0; k < o; ++k) fan.samples[begin + i][s][k] = d[base + k];
            }
        }
    }
    summarize(fan);
    return fan;
}

PredictiveFan sample_predictive_labeled(const PrimaryModel& primary, PosteriorModel& posterior,
                                        const Tensor& x_test, int64_t l_eval, Rng& rng) {
    if (l_eval < 1) throw ContractError("sample_predictive_labeled: l_eval must be >= 1");
    if (!posterior.is_conditional()) {
        throw ContractError("sample_predictive_labeled: generator must be conditional");
    }
    NoGradGuard no_grad;
    const int64_t n = x_test.extent(0), o = primary.output_dim();
    PredictiveFan fan;
    fan.x.resize(n);
    for (int64_t i = 0; i < n; ++i) fan.x[i] = x_test.data()[i * x_test.extent(1)];
    fan.samples.assign(n, std::vector<std::vector<double>>(l_eval, std::vector<double>(o)));

    for (int64_t s = 0; s < l_eval; ++s) {
        std::vector<double> cond_data(n * (x_test.extent(1) + 1));
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t j = 0; j < x_test.extent(1); ++j) {
                cond_data[i * (x_test.extent(1) + 1) + j] = x_test.data()[i * x_test.extent(1) + j];
            }
            cond_data[i * (x_test.extent(1) + 1) + x_test.extent(1)] =
                rng.uniform01() < 0.5 ? 0.0 : 1.0;
        }
        Tensor cond = Tensor::from_data({n, x_test.extent(1) + 1}, std::move(cond_data));
        ThetaBatch theta = posterior.sample_conditional(primary.layout(), cond, 1, rng);
        Tensor preds = primary.forward(theta, x_test); // [N,1,o]
        for (int64_t i = 0; i < n; ++i) {
            for (int64_t k = 0; k < o; ++k) fan.samples[i][s][k] = preds.data()[i * o + k];
        }
    }
    summarize(fan);
    return fan;
}

double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw ContractError("rmse: prediction/target sizes disagree or are empty");
    }
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

MapeResult mape(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw ContractError("mape: prediction/target sizes disagree or are empty");
    }
    MapeResult r;
    double acc = 0.0;
    int64_t used = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (target[i] == 0.0) {
            ++r.excluded;
            continue;
        }
        acc += std::fabs(pred[i] - target[i]) / std::fabs(target[i]);
        ++used;
    }
    if (used == 0) throw MetricError("mape: all targets are zero");
    r.value = 100.0 * acc / static_cast<double>(used);
    return r;
}

std::vector<double> naive_forecast(const std::vector<double>& window, int64_t horizon) {
    if (window.empty()) throw ContractError("naive_forecast: empty window");
    if (horizon < 1) throw ContractError("naive_forecast: horizon must be >= 1");
    return std::vector<double>(horizon, window.back());
}

Modality detect_bimodality(const std::vector<double>& draws, double curve_lo, double curve_hi) {
    constexpr double kBand = 0.2;
    const int64_t n = static_cast<int64_t>(draws.size());
    const double mid = 0.5 * (curve_lo + curve_hi);
    int64_t n_lo = 0, n_hi = 0, n_mid = 0;
    for (double v : draws) {
        if (std::fabs(v - curve_lo) <= kBand) ++n_lo;
        if (std::fabs(v - curve_hi) <= kBand) ++n_hi;
        if (std::fabs(v - mid) <= kBand) ++n_mid;
    }
    // integer comparison so the 10% mass threshold is exact
    const bool lo_mass = n_lo * 10 >= n;
    const bool hi_mass = n_hi * 10 >= n;
    const bool depleted = n_mid < n_lo && n_mid < n_hi;
    return (lo_mass && hi_mass && depleted) ? Modality::bimodal : Modality::unimodal;
}

ForecastMetrics forecast_metrics(const std::vector<std::vector<double>>& pred,
                                 const std::vector<std::vector<double>>& target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw ContractError("forecast_metrics: window counts disagree or are empty");
    }
    std::vector<double> rmses, mapes;
    ForecastMetrics out;
    for (size_t w = 0; w < pred.size(); ++w) {
        rmses.push_back(rmse(pred[w], target[w]));
        try {
            MapeResult m = mape(pred[w], target[w]);
            out.mape_excluded += m.excluded;
            mapes.push_back(m.value);
        } catch (const MetricError&) {
            out.mape_excluded += static_cast<int64_t>(target[w].size());
        }
    }
    auto mean_std = [](const std::vector<double>& v, double& mean_out, double& std_out) {
        mean_out = 0.0;
        for (double x : v) mean_out += x;
        mean_out /= static_cast<double>(v.size());
        double acc = 0.0;
        for (double x : v) acc += (x - mean_out) * (x - mean_out);
        std_out = v.size() > 1 ? std::sqrt(acc / static_cast<double>(v.size() - 1)) : 0.0;
    };
    mean_std(rmses, out.rmse, out.rmse_std);
    if (mapes.empty()) throw MetricError("forecast_metrics: MAPE undefined, all targets zero");
    mean_std(mapes, out.mape, out.mape_std);
    return out;
}

void write_fan_csv(const std::string& path, const PredictiveFan& fan) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write fan CSV to " + path);
    const int64_t l = fan.n_draws(), o = fan.out_dim();
    out << "x";
    for (int64_t s = 0; s < l; ++s) out << ",sample_" << s;
    out << ",mean,q025,q50,q975\n";
    char buf[64];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf;
    };
    for (int64_t i = 0; i < fan.n_inputs(); ++i) {
        for (int64_t k = 0; k < o; ++k) {
            emit(o == 1 ? fan.x[i] : fan.x[i] + static_cast<double>(k));
            for (int64_t s = 0; s < l; ++s) {
                out << ',';
                emit(fan.samples[i][s][k]);
            }
            out << ',';
            emit(fan.mean[i][k]);
            out << ',';
            emit(fan.q025[i][k]);
            out << ',';
            emit(fan.q50[i][k]);
            out << ',';
            emit(fan.q975[i][k]);
            out << '\n';
        }
    }
}

} // namespace postpred
