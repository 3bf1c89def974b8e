#include "postpred/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace postpred {

namespace {

using nlohmann::json;

std::unique_ptr<Likelihood> build_likelihood(const ExperimentConfig& cfg) {
    switch (cfg.likelihood_kind) {
    case LikelihoodKind::gaussian: return std::make_unique<GaussianLikelihood>(cfg.sigma);
    case LikelihoodKind::l1: return std::make_unique<L1Likelihood>();
    case LikelihoodKind::sse_l2: return std::make_unique<SseL2Likelihood>(cfg.lambda);
    }
    throw ContractError("unknown likelihood kind");
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    const int64_t n = a.extent(0), da = a.extent(1), db = b.extent(1);
    std::vector<double> data(n * (da + db));
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(a.data().begin() + i * da, da, data.begin() + i * (da + db));
        std::copy_n(b.data().begin() + i * db, db, data.begin() + i * (da + db) + da);
    }
    return Tensor::from_data({n, da + db}, std::move(data));
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + path);
    out << text;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

struct RegressionEval {
    double rmse = 0.0, rmse_std = 0.0;
    double mape = 0.0, mape_std = 0.0;
    int64_t mape_excluded = 0;
};

RegressionEval regression_fit_metrics(const PredictiveFan& fan, const Tensor& y) {
    const int64_t n = fan.n_inputs();
    std::vector<double> pred(n), target(n), abs_err(n);
    for (int64_t i = 0; i < n; ++i) {
        pred[i] = fan.mean[i][0];
        target[i] = y.data()[i];
        abs_err[i] = std::fabs(pred[i] - target[i]);
    }
    RegressionEval ev;
    ev.rmse = rmse(pred, target);
    const double mean_abs = mean_of(abs_err);
    double acc = 0.0;
    for (double e : abs_err) acc += (e - mean_abs) * (e - mean_abs);
    ev.rmse_std = n > 1 ? std::sqrt(acc / static_cast<double>(n - 1)) : 0.0;
    MapeResult m = mape(pred, target);
    ev.mape = m.value;
    ev.mape_excluded = m.excluded;
    std::vector<double> apes;
    for (int64_t i = 0; i < n; ++i) {
        if (target[i] != 0.0) apes.push_back(100.0 * abs_err[i] / std::fabs(target[i]));
    }
    const double mean_ape = mean_of(apes);
    acc = 0.0;
    for (double a : apes) acc += (a - mean_ape) * (a - mean_ape);
    ev.mape_std = apes.size() > 1 ? std::sqrt(acc / static_cast<double>(apes.size() - 1)) : 0.0;
    return ev;
}

} // namespace

std::unique_ptr<PrimaryModel> build_primary(const ExperimentConfig& cfg) {
    switch (cfg.primary_kind) {
    case PrimaryKind::linear: return std::make_unique<LinearModel>(1, 1);
    case PrimaryKind::mlp: return std::make_unique<MlpModel>(1, cfg.primary_hidden, 1);
    case PrimaryKind::nbeats: return std::make_unique<NBeatsModel>(cfg.nbeats);
    }
    throw ContractError("unknown primary kind");
}

std::unique_ptr<PosteriorModel> build_posterior(const ExperimentConfig& cfg, const ThetaLayout& layout,
                                                int64_t cond_dim, Rng& init_rng) {
    const int64_t total = layout.total_len();
    if (cfg.posterior_arch.back() != total) {
        throw ContractError("posterior arch output " + std::to_string(cfg.posterior_arch.back()) +
                            " does not match theta length " + std::to_string(total));
    }
    if (cfg.posterior_kind == PosteriorKind::mdn) {
        std::vector<int64_t> trunk(cfg.posterior_arch.begin(), cfg.posterior_arch.end() - 1);
        return std::make_unique<MdnPosterior>(cond_dim, trunk, total, init_rng);
    }

    const bool conditioned = cfg.posterior_kind == PosteriorKind::conditional;
    LatentSpec latent = cfg.latent;
    latent.dim = cfg.posterior_arch.front();

    auto make_hypernet = [&](int64_t out_len) {
        HypernetArch arch;
        arch.widths = cfg.posterior_arch;
        arch.widths.back() = out_len;
        arch.conditioned = conditioned;
        arch.cond_dim = conditioned ? cond_dim : 0;
        arch.output_gain = cfg.init_gain;
        auto net = std::make_shared<HypernetPosterior>(arch, latent, init_rng);
        if (cfg.degenerate) net->freeze_input_weights();
        return net;
    };

    if (!cfg.per_layer) {
        auto net = make_hypernet(total);
        struct Holder final : PosteriorModel {
            // thin ownership wrapper keeping the concrete type available
            std::shared_ptr<HypernetPosterior> net;
            explicit Holder(std::shared_ptr<HypernetPosterior> n) : net(std::move(n)) {}
            bool is_conditional() const override { return net->is_conditional(); }
            int64_t out_len() const override { return net->out_len(); }
            std::vector<Tensor> parameters() const override { return net->parameters(); }
            std::vector<std::pair<std::string, Tensor>> named_parameters() const override {
                return net->named_parameters();
            }
            Tensor sample_values(int64_t l, Rng& rng) override { return net->sample_values(l, rng); }
            Tensor sample_values_conditional(const Tensor& cond, int64_t l, Rng& rng) override {
                return net->sample_values_conditional(cond, l, rng);
            }
        };
        return std::make_unique<Holder>(std::move(net));
    }

    // One sub-generator per (weights, bias) pair of the primary layout.
    std::vector<ComposedPosterior::Part> parts;
    const auto& segs = layout.segments();
    for (size_t i = 0; i < segs.size(); i += 2) {
        const int64_t offset = segs[i].offset;
        int64_t len = segs[i].len;
        if (i + 1 < segs.size()) len += segs[i + 1].len;
        parts.push_back({offset, len, make_hypernet(len)});
    }
    return std::make_unique<ComposedPosterior>(std::move(parts));
}

namespace {

struct PreparedData {
    TrainData train;
    Tensor x_test;          // standardized model inputs for evaluation
    Tensor x_test_raw;      // raw-unit x for region checks (regression kinds)
    std::optional<Standardizer> y_std, x_std;
    // forecast extras
    WindowedSeries test_raw;
    Tensor test_inputs_std;
};

PreparedData prepare_regression(const ExperimentConfig& cfg, Rng& data_rng) {
    PreparedData pd;
    const bool multimodal =
        cfg.kind == ExperimentKind::multimodal_l1 || cfg.kind == ExperimentKind::multimodal_labeled;
    RegressionDataset train;
    Tensor x_test;
    if (multimodal) {
        MultimodalOptions opt;
        opt.n = cfg.n_multimodal;
        opt.noise_var = cfg.noise_var;
        MultimodalData d = gen_multimodal(opt, data_rng);
        train = std::move(d.train);
        x_test = d.x_test;
    } else {
        XsinxOptions opt;
        opt.n_base = cfg.n_base;
        opt.grid_spacing = cfg.grid_spacing;
        opt.include_extras = cfg.include_outliers;
        XsinxData d = gen_xsinx(opt, data_rng);
        train = std::move(d.train);
        x_test = d.x_test;
    }
    pd.x_test_raw = x_test;
    if (cfg.standardize) {
        standardize_in_place(train);
        pd.x_std = train.x_std;
        pd.y_std = train.y_std;
        x_test = train.x_std->apply(x_test);
    }
    pd.train.x = train.x;
    pd.train.y = train.y;
    if (cfg.kind == ExperimentKind::multimodal_labeled) {
        pd.train.cond = concat_cols(train.x, train.labels);
    }
    pd.x_test = x_test;
    return pd;
}

PreparedData prepare_forecast(const ExperimentConfig& cfg) {
    PreparedData pd;
    std::vector<double> raw = load_csv_series(cfg.csv_path);
    const int64_t h_in = cfg.nbeats.input_len, h_out = cfg.nbeats.horizon;
    WindowedSeries all_raw = window_series(raw, h_in, h_out);
    auto [train_raw, test_raw] = split_windows(all_raw, cfg.train_fraction);
    pd.test_raw = test_raw;

    std::vector<double> series = raw;
    if (cfg.standardize) {
        // fit on the stretch of the series that feeds the training windows
        const int64_t prefix = train_raw.size() + h_in + h_out - 1;
        double m = 0.0;
        for (int64_t i = 0; i < prefix; ++i) m += raw[i];
        m /= static_cast<double>(prefix);
        double var = 0.0;
        for (int64_t i = 0; i < prefix; ++i) var += (raw[i] - m) * (raw[i] - m);
        double sd = std::sqrt(var / static_cast<double>(prefix));
        if (sd == 0.0) sd = 1.0;
        Standardizer s;
        s.mean = {m};
        s.stddev = {sd};
        for (double& v : series) v = s.apply1(v);
        pd.y_std = s;
        pd.x_std = s;
    }
    WindowedSeries all_std = window_series(series, h_in, h_out);
    auto [train_std, test_std] = split_windows(all_std, cfg.train_fraction);
    pd.train.x = train_std.inputs;
    pd.train.y = train_std.targets;
    pd.x_test = test_std.inputs;
    pd.test_inputs_std = test_std.inputs;
    return pd;
}

} // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg, const std::string& config_echo_text) {
    const auto wall0 = std::chrono::steady_clock::now();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    RunArtifacts art;
    art.out_dir = cfg.out_dir;
    art.config_echo_path = cfg.out_dir + "/config_echo.cfg";
    art.curve_path = cfg.out_dir + "/training_curve.csv";
    art.fan_path = cfg.out_dir + "/fan.csv";
    art.metrics_path = cfg.out_dir + "/metrics.json";
    art.manifest_path = cfg.out_dir + "/manifest.json";

    std::string echo = config_echo_text;
    if (echo.empty()) {
        echo = std::string("experiment = ") + to_string(cfg.kind) + "\nseed = " + std::to_string(cfg.seed) +
               "\n";
    }
    write_text(art.config_echo_path, echo);

    Rng data_rng(cfg.seed);
    Rng init_rng(cfg.seed + 1);
    Rng eval_rng(cfg.seed + 3);

    PreparedData pd = cfg.kind == ExperimentKind::forecast ? prepare_forecast(cfg)
                                                           : prepare_regression(cfg, data_rng);

    std::unique_ptr<PrimaryModel> primary = build_primary(cfg);
    int64_t cond_dim = primary->input_dim();
    if (cfg.kind == ExperimentKind::multimodal_labeled) cond_dim += 1;
    std::unique_ptr<PosteriorModel> posterior = build_posterior(cfg, primary->layout(), cond_dim, init_rng);
    std::unique_ptr<Likelihood> likelihood = build_likelihood(cfg);

    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed + 2;
    tc.curve_csv_path = art.curve_path;
    art.report = train(*primary, *posterior, *likelihood, pd.train, tc);

    json metrics;
    metrics["schema_version"] = 1;
    metrics["experiment"] = to_string(cfg.kind);
    metrics["seed"] = cfg.seed;

    if (cfg.kind == ExperimentKind::forecast) {
        PredictiveFan fan =
            sample_predictive(*primary, *posterior, pd.test_inputs_std, cfg.eval_mc_samples, eval_rng);
        // report errors in raw units
        if (pd.y_std) {
            for (auto& draws : fan.samples) {
                for (auto& d : draws) {
                    for (double& v : d) v = pd.y_std->invert1(v);
                }
            }
            for (auto* stat : {&fan.mean, &fan.q025, &fan.q50, &fan.q975}) {
                for (auto& row : *stat) {
                    for (double& v : row) v = pd.y_std->invert1(v);
                }
            }
        }
        const int64_t m = fan.n_inputs(), h = fan.out_dim();
        for (int64_t i = 0; i < m; ++i) fan.x[i] = static_cast<double>(i);

        std::vector<std::vector<double>> preds(m), targets(m), naive(m);
        for (int64_t i = 0; i < m; ++i) {
            preds[i] = fan.mean[i];
            targets[i].assign(pd.test_raw.targets.data().begin() + i * h,
                              pd.test_raw.targets.data().begin() + (i + 1) * h);
            const int64_t h_in = pd.test_raw.inputs.extent(1);
            std::vector<double> window(pd.test_raw.inputs.data().begin() + i * h_in,
                                       pd.test_raw.inputs.data().begin() + (i + 1) * h_in);
            naive[i] = naive_forecast(window, h);
        }
        ForecastMetrics fm = forecast_metrics(preds, targets);
        ForecastMetrics nm = forecast_metrics(naive, targets);
        metrics["rmse"] = fm.rmse;
        metrics["rmse_std"] = fm.rmse_std;
        metrics["mape"] = fm.mape;
        metrics["mape_std"] = fm.mape_std;
        metrics["mape_excluded"] = fm.mape_excluded;
        metrics["naive_rmse"] = nm.rmse;
        metrics["naive_rmse_std"] = nm.rmse_std;
        metrics["naive_mape"] = nm.mape;
        metrics["naive_mape_std"] = nm.mape_std;
        metrics["n_test_windows"] = m;
        write_fan_csv(art.fan_path, fan);
    } else {
        const bool labeled = cfg.kind == ExperimentKind::multimodal_labeled;

        // fit quality on the training inputs
        PredictiveFan fan_train =
            labeled ? sample_predictive(*primary, *posterior, pd.train.x, cfg.eval_mc_samples, eval_rng,
                                        pd.train.cond)
                    : sample_predictive(*primary, *posterior, pd.train.x, cfg.eval_mc_samples, eval_rng);
        RegressionEval ev = regression_fit_metrics(fan_train, pd.train.y);
        metrics["rmse"] = ev.rmse;
        metrics["rmse_std"] = ev.rmse_std;
        metrics["mape"] = ev.mape;
        metrics["mape_std"] = ev.mape_std;
        metrics["mape_excluded"] = ev.mape_excluded;

        PredictiveFan fan =
            labeled ? sample_predictive_labeled(*primary, *posterior, pd.x_test, cfg.eval_mc_samples,
                                                eval_rng)
                    : sample_predictive(*primary, *posterior, pd.x_test, cfg.eval_mc_samples, eval_rng);

        if (cfg.kind == ExperimentKind::multimodal_l1 || labeled) {
            int64_t overlap_total = 0, overlap_bimodal = 0, outside_total = 0, outside_unimodal = 0;
            for (int64_t i = 0; i < fan.n_inputs(); ++i) {
                const double rx = pd.x_test_raw.data()[i];
                double lo = multimodal_lower(rx), hi = multimodal_upper(rx);
                if (pd.y_std) {
                    lo = pd.y_std->apply1(lo);
                    hi = pd.y_std->apply1(hi);
                }
                std::vector<double> draws(fan.n_draws());
                for (int64_t s = 0; s < fan.n_draws(); ++s) draws[s] = fan.samples[i][s][0];
                const Modality mode = detect_bimodality(draws, lo, hi);
                if (rx > 0.35 && rx < 0.55) {
                    ++overlap_total;
                    if (mode == Modality::bimodal) ++overlap_bimodal;
                } else if ((rx > 0.0 && rx < 0.25) || (rx > 0.7 && rx < 1.0)) {
                    ++outside_total;
                    if (mode == Modality::unimodal) ++outside_unimodal;
                }
            }
            metrics["bimodal_fraction_overlap"] =
                overlap_total ? static_cast<double>(overlap_bimodal) / overlap_total : 0.0;
            metrics["unimodal_fraction_outside"] =
                outside_total ? static_cast<double>(outside_unimodal) / outside_total : 0.0;
        }
        write_fan_csv(art.fan_path, fan);
    }

    art.metrics = metrics;
    write_text(art.metrics_path, metrics.dump(2) + "\n");

    const auto wall1 = std::chrono::steady_clock::now();
    json manifest;
    manifest["layout_version"] = 1;
    manifest["experiment"] = to_string(cfg.kind);
    manifest["seed"] = cfg.seed;
    manifest["wall_clock_seconds"] = std::chrono::duration<double>(wall1 - wall0).count();
    manifest["epoch_seconds_mean"] = mean_of(art.report.seconds);
    manifest["epochs_run"] = art.report.epochs_run;
    manifest["best_epoch"] = art.report.best_epoch;
    manifest["stopped_early"] = art.report.stopped_early;
    manifest["files"] = {fs::path(art.config_echo_path).filename().string(),
                         fs::path(art.curve_path).filename().string(),
                         fs::path(art.fan_path).filename().string(),
                         fs::path(art.metrics_path).filename().string()};
    write_text(art.manifest_path, manifest.dump(2) + "\n");
    return art;
}

} // namespace postpred
