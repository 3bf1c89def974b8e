#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "postpred/evaluation.hpp"
#include "support/oracles.hpp"

using namespace postpred;

namespace {

HypernetArch arch_of(std::vector<int64_t> widths, bool conditioned = false, int64_t cond_dim = 0) {
    HypernetArch a;
    a.widths = std::move(widths);
    a.conditioned = conditioned;
    a.cond_dim = cond_dim;
    return a;
}

LatentSpec uniform_latent(int64_t dim) {
    LatentSpec l;
    l.dim = dim;
    return l;
}

} // namespace

TEST_CASE("degenerate generator: all fan curves coincide, zero band width") {
    Rng init(3);
    LinearModel primary(1, 1);
    HypernetPosterior net(arch_of({2, 8, 2}), uniform_latent(2), init);
    net.freeze_input_weights();
    Tensor x_test = Tensor::from_data({16, 1}, std::vector<double>(16, 0.5));
    Rng rng(5);
    PredictiveFan fan = sample_predictive(primary, net, x_test, 30, rng);
    REQUIRE(fan.n_draws() == 30);
    for (int64_t i = 0; i < fan.n_inputs(); ++i) {
        for (int64_t s = 1; s < 30; ++s) {
            CHECK(fan.samples[i][s][0] == fan.samples[i][0][0]);
        }
        CHECK(fan.q975[i][0] - fan.q025[i][0] < 1e-9);
    }
}

TEST_CASE("single-draw fan equals its own mean and quantiles") {
    Rng init(7);
    LinearModel primary(1, 1);
    HypernetPosterior net(arch_of({2, 4, 2}), uniform_latent(2), init);
    Tensor x_test = Tensor::from_data({4, 1}, {0.0, 0.5, 1.0, 1.5});
    Rng rng(11);
    PredictiveFan fan = sample_predictive(primary, net, x_test, 1, rng);
    for (int64_t i = 0; i < 4; ++i) {
        CHECK(fan.mean[i][0] == fan.samples[i][0][0]);
        CHECK(fan.q025[i][0] == fan.samples[i][0][0]);
        CHECK(fan.q975[i][0] == fan.samples[i][0][0]);
    }
}

TEST_CASE("fan mean is the arithmetic mean; quantiles are monotone and bracket it") {
    Rng init(13);
    LinearModel primary(1, 1);
    HypernetPosterior net(arch_of({3, 8, 2}), uniform_latent(3), init);
    Tensor x_test = Tensor::from_data({8, 1}, {-1, -0.5, 0, 0.5, 1, 1.5, 2, 2.5});
    Rng rng(17);
    PredictiveFan fan = sample_predictive(primary, net, x_test, 64, rng);
    for (int64_t i = 0; i < fan.n_inputs(); ++i) {
        double acc = 0.0;
        for (int64_t s = 0; s < fan.n_draws(); ++s) acc += fan.samples[i][s][0];
        CHECK(std::fabs(fan.mean[i][0] - acc / fan.n_draws()) < 1e-12);
        CHECK(fan.q025[i][0] <= fan.q50[i][0]);
        CHECK(fan.q50[i][0] <= fan.q975[i][0]);
        CHECK(fan.q025[i][0] <= fan.mean[i][0]);
        CHECK(fan.mean[i][0] <= fan.q975[i][0]);
    }
}

TEST_CASE("small-sample fan mean converges to the large-sample mean") {
    Rng init(19);
    LinearModel primary(1, 1);
    HypernetPosterior net(arch_of({3, 8, 2}), uniform_latent(3), init);
    Tensor x_test = Tensor::from_data({6, 1}, {-1, 0, 0.5, 1, 1.5, 2});
    Rng rng(23);
    PredictiveFan small = sample_predictive(primary, net, x_test, 30, rng);
    PredictiveFan large = sample_predictive(primary, net, x_test, 3000, rng);
    for (int64_t i = 0; i < 6; ++i) {
        double var = 0.0;
        for (int64_t s = 0; s < large.n_draws(); ++s) {
            const double c = large.samples[i][s][0] - large.mean[i][0];
            var += c * c;
        }
        var /= large.n_draws();
        const double tol = 6.0 * std::sqrt(var / 30.0) + 1e-12;
        CHECK(std::fabs(small.mean[i][0] - large.mean[i][0]) < tol);
    }
}

TEST_CASE("chunked conditional fan equals a single-pass loop oracle") {
    // >256 inputs forces several chunks for this theta size; each (input,draw)
    // cell must still come from its own conditioning row
    Rng init(27);
    LinearModel primary(1, 1);
    HypernetPosterior net(arch_of({2, 6, 2}, true, 1), uniform_latent(2), init);
    const int64_t n = 700;
    std::vector<double> xs(n);
    for (int64_t i = 0; i < n; ++i) xs[i] = -1.0 + 2.0 * static_cast<double>(i) / (n - 1);
    Tensor x_test = Tensor::from_data({n, 1}, xs);
    Rng rng(29);
    PredictiveFan fan = sample_predictive(primary, net, x_test, 3, rng);
    REQUIRE(fan.n_inputs() == n);
    // replay the identical rng stream chunk by chunk through the raw sampler
    Rng replay(29);
    const int64_t per_row = 3 * primary.layout().total_len();
    const int64_t chunk = std::max<int64_t>(1, std::min<int64_t>(n, 2'000'000 / per_row + 1));
    for (int64_t begin = 0; begin < n; begin += chunk) {
        const int64_t count = std::min(chunk, n - begin);
        std::vector<double> block(xs.begin() + begin, xs.begin() + begin + count);
        Tensor xb = Tensor::from_data({count, 1}, block);
        Tensor theta = net.sample_values_conditional(xb, 3, replay); // [count,3,2]
        for (int64_t i = 0; i < count; ++i) {
            for (int64_t s = 0; s < 3; ++s) {
                const double w = theta.data()[(i * 3 + s) * 2];
                const double c = theta.data()[(i * 3 + s) * 2 + 1];
                CHECK(fan.samples[begin + i][s][0] ==
                      doctest::Approx(w * xs[begin + i] + c).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("rmse and mape hand values") {
    CHECK(rmse({0, 0}, {3, 4}) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
    CHECK(std::sqrt(12.5) == doctest::Approx(3.5355339).epsilon(1e-6));
    CHECK(rmse({1, 2, 3}, {1, 2, 3}) == 0.0);

    MapeResult perfect = mape({1, 2, 3}, {1, 2, 3});
    CHECK(perfect.value == 0.0);
    CHECK(perfect.excluded == 0);

    MapeResult ten = mape({1.1, 2.2, -3.3}, {1, 2, -3});
    CHECK(ten.value == doctest::Approx(10.0).epsilon(1e-9));

    MapeResult skip = mape({1.0, 5.0}, {2.0, 0.0});
    CHECK(skip.excluded == 1);
    CHECK(skip.value == doctest::Approx(50.0).epsilon(1e-12));
    CHECK_THROWS_AS(mape({1.0}, {0.0}), MetricError);
    CHECK_THROWS_AS(rmse({1.0}, {1.0, 2.0}), ContractError);
}

TEST_CASE("rmse and mape are invariant under pair permutation") {
    Rng rng(31);
    std::vector<double> pred(20), target(20);
    for (int i = 0; i < 20; ++i) {
        pred[i] = rng.uniform(-5, 5);
        target[i] = rng.uniform(1, 5);
    }
    std::vector<size_t> order(20);
    for (size_t i = 0; i < 20; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<double> pred_p(20), target_p(20);
    for (size_t i = 0; i < 20; ++i) {
        pred_p[i] = pred[order[i]];
        target_p[i] = target[order[i]];
    }
    CHECK(rmse(pred, target) == doctest::Approx(rmse(pred_p, target_p)).epsilon(1e-12));
    CHECK(mape(pred, target).value == doctest::Approx(mape(pred_p, target_p).value).epsilon(1e-12));
}

TEST_CASE("naive forecast repeats the last value") {
    CHECK(naive_forecast({1, 2, 3}, 2) == std::vector<double>{3, 3});
    CHECK_THROWS_AS(naive_forecast({}, 2), ContractError);
    CHECK_THROWS_AS(naive_forecast({1.0}, 0), ContractError);

    // persistence is exact on a constant series
    std::vector<std::vector<double>> preds, targets;
    for (int w = 0; w < 5; ++w) {
        preds.push_back(naive_forecast({4.0, 4.0, 4.0}, 3));
        targets.push_back({4.0, 4.0, 4.0});
    }
    ForecastMetrics fm = forecast_metrics(preds, targets);
    CHECK(fm.rmse == 0.0);
    CHECK(fm.mape == 0.0);
}

TEST_CASE("persistence error on a pure period-12 sine matches the closed form") {
    // s_t = sin(2 pi t / 12); E[(s_{t+h} - s_t)^2] over a whole period is
    // 2 sin^2(pi h / 12), so the per-window RMSE averaged over full periods is
    // sqrt(mean_h 2 sin^2(pi h / 12)).
    const int64_t period = 12, reps = 40, h_in = 6, h_out = 3;
    std::vector<double> series(period * reps);
    for (size_t t = 0; t < series.size(); ++t) {
        series[t] = std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(t) / period);
    }
    std::vector<double> sq_by_h(h_out, 0.0);
    for (int64_t h = 1; h <= h_out; ++h) {
        sq_by_h[h - 1] = 2.0 * std::pow(std::sin(3.14159265358979323846 * h / period), 2);
    }
    double expect_ms = 0.0;
    for (double v : sq_by_h) expect_ms += v;
    expect_ms /= h_out;

    // aggregate squared persistence error over all windows, whole periods only
    double acc = 0.0;
    int64_t count = 0;
    const int64_t m = static_cast<int64_t>(series.size()) - h_in - h_out + 1;
    const int64_t m_whole = (m / period) * period;
    for (int64_t w = 0; w < m_whole; ++w) {
        std::vector<double> window(series.begin() + w, series.begin() + w + h_in);
        auto pred = naive_forecast(window, h_out);
        for (int64_t h = 0; h < h_out; ++h) {
            const double e = pred[h] - series[w + h_in + h];
            acc += e * e;
            ++count;
        }
    }
    CHECK(std::sqrt(acc / count) == doctest::Approx(std::sqrt(expect_ms)).epsilon(1e-9));
}

TEST_CASE("bimodality detector: cluster structure and the 10% threshold") {
    const double lo = -1.0, hi = 1.0;

    std::vector<double> one_curve(100, lo);
    CHECK(detect_bimodality(one_curve, lo, hi) == Modality::unimodal);

    std::vector<double> split;
    for (int i = 0; i < 50; ++i) split.push_back(lo);
    for (int i = 0; i < 50; ++i) split.push_back(hi);
    CHECK(detect_bimodality(split, lo, hi) == Modality::bimodal);

    std::vector<double> nine_percent;
    for (int i = 0; i < 9; ++i) nine_percent.push_back(lo);
    for (int i = 0; i < 91; ++i) nine_percent.push_back(hi);
    CHECK(detect_bimodality(nine_percent, lo, hi) == Modality::unimodal);
    std::vector<double> ten_percent;
    for (int i = 0; i < 10; ++i) ten_percent.push_back(lo);
    for (int i = 0; i < 90; ++i) ten_percent.push_back(hi);
    CHECK(detect_bimodality(ten_percent, lo, hi) == Modality::bimodal);

    // mass between the curves defeats the detection
    std::vector<double> smeared(100, 0.0);
    CHECK(detect_bimodality(smeared, lo, hi) == Modality::unimodal);
}

TEST_CASE("forecast metrics aggregate per-window errors") {
    std::vector<std::vector<double>> preds = {{1, 1}, {2, 2}, {3, 3}};
    std::vector<std::vector<double>> targets = {{1, 1}, {2, 4}, {0, 3}};
    ForecastMetrics fm = forecast_metrics(preds, targets);
    const double r0 = 0.0;
    const double r1 = std::sqrt((0.0 + 4.0) / 2.0);
    const double r2 = std::sqrt((9.0 + 0.0) / 2.0);
    const double mean_r = (r0 + r1 + r2) / 3.0;
    CHECK(fm.rmse == doctest::Approx(mean_r).epsilon(1e-12));
    const double var = (std::pow(r0 - mean_r, 2) + std::pow(r1 - mean_r, 2) + std::pow(r2 - mean_r, 2)) / 2.0;
    CHECK(fm.rmse_std == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    CHECK(fm.mape_excluded == 1);
}

TEST_CASE("fan CSV has the documented columns") {
    Rng init(37);
    LinearModel primary(1, 1);
    HypernetPosterior net(arch_of({2, 4, 2}), uniform_latent(2), init);
    Tensor x_test = Tensor::from_data({3, 1}, {0.0, 1.0, 2.0});
    Rng rng(41);
    PredictiveFan fan = sample_predictive(primary, net, x_test, 4, rng);
    const std::string path = "fan_tmp.csv";
    write_fan_csv(path, fan);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "x,sample_0,sample_1,sample_2,sample_3,mean,q025,q50,q975");
    int rows = 0;
    std::string line;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3);
    in.close();
    std::remove(path.c_str());
}
