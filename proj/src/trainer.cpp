#include "postpred/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace postpred {

void adam_step(std::vector<Tensor>& params, AdamState& state, const OptimizerConfig& opt) {
    if (state.m.empty()) {
        for (const Tensor& p : params) {
            state.m.emplace_back(p.numel(), 0.0);
            state.v.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw ContractError("adam_step: optimizer state does not match parameter list");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != static_cast<size_t>(params[i].numel())) {
            throw ContractError("adam_step: moment shape does not match parameter shape");
        }
        const double* g = params[i].has_grad() ? params[i].grad().data() : nullptr;
        auto& w = params[i].raw_data();
        for (size_t j = 0; j < w.size(); ++j) {
            const double gj = g ? g[j] : 0.0;
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * gj;
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * gj * gj;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

void sgd_step(std::vector<Tensor>& params, double lr) {
    for (Tensor& p : params) {
        if (!p.has_grad()) continue;
        const auto& g = p.grad();
        auto& w = p.raw_data();
        for (size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
    }
}

std::vector<std::vector<int64_t>> make_minibatches(int64_t n, int64_t batch_size, Rng& rng) {
    if (batch_size < 1) throw ContractError("make_minibatches: batch size must be >= 1");
    std::vector<int64_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<std::vector<int64_t>> slices;
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t stop = std::min(n, start + batch_size);
        slices.emplace_back(perm.begin() + start, perm.begin() + stop);
    }
    return slices;
}

bool EarlyStopper::observe(double val_loss) {
    ++epoch_;
    if (val_loss < best_ - min_delta_) {
        best_ = val_loss;
        best_epoch_ = epoch_;
        wait_ = 0;
        return true;
    }
    ++wait_;
    return false;
}

namespace {

Tensor gather_rows(const Tensor& t, const std::vector<int64_t>& rows) {
    const int64_t cols = t.extent(1);
    std::vector<double> data(rows.size() * cols);
    for (size_t r = 0; r < rows.size(); ++r) {
        const double* src = t.data().data() + rows[r] * cols;
        std::copy(src, src + cols, data.begin() + r * cols);
    }
    return Tensor::from_data({static_cast<int64_t>(rows.size()), cols}, std::move(data));
}

Tensor batch_loss(const PrimaryModel& primary, PosteriorModel& posterior, const Likelihood& likelihood,
                  const Tensor& x, const Tensor& y, const Tensor& cond, int mc_samples, LossMode mode,
                  Rng& rng) {
    ThetaBatch theta = posterior.is_conditional()
                           ? posterior.sample_conditional(primary.layout(), cond, mc_samples, rng)
                           : posterior.sample(primary.layout(), mc_samples, rng);
    Tensor preds = primary.forward(theta, x);
    Tensor ll = likelihood.log_lik(y, preds, theta);
    return mc_predictive_loss(ll, mc_axis_of(theta), mode);
}

double clip_grads(std::vector<Tensor>& params, double max_norm) {
    double sq = 0.0;
    for (const Tensor& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (Tensor& p : params) {
            if (!p.has_grad()) continue;
            auto& g = p.impl()->grad;
            for (double& v : *g) v *= s;
        }
    }
    return norm;
}

std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params) {
    std::vector<std::vector<double>> snap;
    snap.reserve(params.size());
    for (const Tensor& p : params) snap.push_back(p.data());
    return snap;
}

void restore_params(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
    for (size_t i = 0; i < params.size(); ++i) params[i].raw_data() = snap[i];
}

} // namespace

TrainReport train(const PrimaryModel& primary, PosteriorModel& posterior, const Likelihood& likelihood,
                  const TrainData& data, const TrainConfig& cfg) {
    if (data.size() == 0) throw ContractError("train: dataset is empty");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.mc_samples < 1) {
        throw ContractError("train: epochs, batch_size and mc_samples must all be >= 1");
    }
    if (cfg.early_stopping.val_fraction < 0.0 || cfg.early_stopping.val_fraction >= 1.0) {
        throw ContractError("train: val_fraction must lie in [0,1)");
    }

    Rng rng(cfg.seed);
    const int64_t n = data.size();
    const Tensor& cond_src = data.cond_or_x();

    // Hold-out split for early stopping: seeded shuffle, last fraction.
    std::vector<int64_t> train_idx(n), val_idx;
    std::iota(train_idx.begin(), train_idx.end(), 0);
    const bool use_val = cfg.early_stopping.enabled && cfg.early_stopping.val_fraction > 0.0;
    if (use_val) {
        rng.shuffle(train_idx);
        int64_t n_val = static_cast<int64_t>(std::llround(n * cfg.early_stopping.val_fraction));
        n_val = std::max<int64_t>(1, std::min(n - 1, n_val));
        val_idx.assign(train_idx.end() - n_val, train_idx.end());
        train_idx.resize(n - n_val);
    }

    Tensor val_x, val_y, val_cond;
    if (use_val) {
        val_x = gather_rows(data.x, val_idx);
        val_y = gather_rows(data.y, val_idx);
        val_cond = gather_rows(cond_src, val_idx);
    }

    std::vector<Tensor> params = posterior.parameters();
    AdamState adam;
    EarlyStopper stopper(cfg.early_stopping.patience, cfg.early_stopping.min_delta);
    std::vector<std::vector<double>> best_snapshot;

    TrainReport report;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        auto slices = make_minibatches(static_cast<int64_t>(train_idx.size()), cfg.batch_size, rng);
        double epoch_loss = 0.0;
        int64_t seen = 0;
        for (size_t bi = 0; bi < slices.size(); ++bi) {
            std::vector<int64_t> rows;
            rows.reserve(slices[bi].size());
            for (int64_t k : slices[bi]) rows.push_back(train_idx[k]);
            Tensor xb = gather_rows(data.x, rows);
            Tensor yb = gather_rows(data.y, rows);
            Tensor cb = gather_rows(cond_src, rows);

            for (Tensor& p : params) p.zero_grad();
            Tensor loss = batch_loss(primary, posterior, likelihood, xb, yb, cb, cfg.mc_samples,
                                     cfg.loss_mode, rng);
            const double lv = loss.item();
            if (!std::isfinite(lv)) {
                Tape::active().clear();
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(bi));
            }
            backward(loss);
            if (cfg.grad_clip > 0.0) clip_grads(params, cfg.grad_clip);
            if (cfg.optimizer.kind == OptimizerKind::adam) {
                adam_step(params, adam, cfg.optimizer);
            } else {
                sgd_step(params, cfg.optimizer.lr);
            }
            epoch_loss += lv * static_cast<double>(rows.size());
            seen += static_cast<int64_t>(rows.size());
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(seen));

        if (use_val) {
            NoGradGuard no_grad;
            Tensor vloss = batch_loss(primary, posterior, likelihood, val_x, val_y, val_cond,
                                      cfg.mc_samples, cfg.loss_mode, rng);
            const double vl = vloss.item();
            report.val_loss.push_back(vl);
            if (stopper.observe(vl)) best_snapshot = snapshot_params(params);
        }

        const auto t1 = std::chrono::steady_clock::now();
        report.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
        report.epochs_run = epoch + 1;

        if (use_val && stopper.should_stop()) {
            report.stopped_early = true;
            break;
        }
    }

    if (use_val && !best_snapshot.empty()) {
        restore_params(params, best_snapshot);
        report.best_epoch = stopper.best_epoch();
    } else if (!use_val) {
        report.best_epoch = report.epochs_run - 1;
    }

    if (!cfg.curve_csv_path.empty()) {
        std::ofstream out(cfg.curve_csv_path);
        if (!out) throw IngestionError("train: cannot write curve CSV to " + cfg.curve_csv_path);
        out << "epoch,train_loss,val_loss,seconds\n";
        char buf[96];
        for (int e = 0; e < report.epochs_run; ++e) {
            out << e << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", report.train_loss[e]);
            out << buf << ',';
            if (e < static_cast<int>(report.val_loss.size())) {
                std::snprintf(buf, sizeof(buf), "%.17g", report.val_loss[e]);
                out << buf;
            }
            out << ',';
            std::snprintf(buf, sizeof(buf), "%.6f", report.seconds[e]);
            out << buf << '\n';
        }
    }
    return report;
}

} // namespace postpred
