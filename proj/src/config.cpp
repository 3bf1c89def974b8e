#include "postpred/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace postpred {

namespace {

std::string trim(const std::string& s) {
    const size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

ParsedConfig ParsedConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str(), path);
}

ParsedConfig ParsedConfig::from_string(const std::string& text, const std::string& origin) {
    ParsedConfig pc;
    pc.origin_ = origin;
    pc.raw_text_ = text;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value', got '" +
                              line + "'");
        }
        Entry e;
        e.key = trim(line.substr(0, eq));
        e.value = trim(line.substr(eq + 1));
        e.line = line_no;
        if (e.key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        for (const Entry& prev : pc.entries_) {
            if (prev.key == e.key) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + e.key +
                                  "' (first set at line " + std::to_string(prev.line) + ")");
            }
        }
        pc.entries_.push_back(std::move(e));
    }
    return pc;
}

const ParsedConfig::Entry* ParsedConfig::find(const std::string& key) const {
    for (const Entry& e : entries_) {
        if (e.key == key) return &e;
    }
    return nullptr;
}

std::string format_issues(const std::vector<ValidationIssue>& issues) {
    std::ostringstream os;
    for (const auto& issue : issues) {
        os << issue.field;
        if (issue.line > 0) os << " (line " << issue.line << ")";
        os << ": " << issue.message << "\n";
    }
    return os.str();
}

const char* to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::xsinx: return "xsinx";
    case ExperimentKind::xsinx_linear_primary: return "xsinx_linear_primary";
    case ExperimentKind::multimodal_l1: return "multimodal_l1";
    case ExperimentKind::multimodal_labeled: return "multimodal_labeled";
    case ExperimentKind::forecast: return "forecast";
    }
    return "?";
}

namespace {

// Collects typed values and issues in one pass; shared by validate and build.
class Reader {
public:
    Reader(const ParsedConfig& pc, std::vector<ValidationIssue>& issues) : pc_(pc), issues_(issues) {}

    void issue(const std::string& field, const std::string& message) {
        const auto* e = pc_.find(field);
        issues_.push_back({field, e ? e->line : 0, message});
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return pc_.find(key) != nullptr;
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        seen_.insert(key);
        const auto* e = pc_.find(key);
        return e ? e->value : fallback;
    }

    int64_t get_int(const std::string& key, int64_t fallback, int64_t min_value,
                    int64_t max_value = std::numeric_limits<int64_t>::max()) {
        seen_.insert(key);
        const auto* e = pc_.find(key);
        if (!e) return fallback;
        try {
            size_t used = 0;
            const int64_t v = std::stoll(e->value, &used);
            if (used != e->value.size()) throw std::invalid_argument(e->value);
            if (v < min_value || v > max_value) {
                issue(key, "value " + e->value + " out of range [" + std::to_string(min_value) + "," +
                               (max_value == std::numeric_limits<int64_t>::max()
                                    ? std::string("inf")
                                    : std::to_string(max_value)) +
                               "]");
                return fallback;
            }
            return v;
        } catch (const std::exception&) {
            issue(key, "not an integer: '" + e->value + "'");
            return fallback;
        }
    }

    double get_double(const std::string& key, double fallback) {
        seen_.insert(key);
        const auto* e = pc_.find(key);
        if (!e) return fallback;
        try {
            size_t used = 0;
            const double v = std::stod(e->value, &used);
            if (used != e->value.size()) throw std::invalid_argument(e->value);
            return v;
        } catch (const std::exception&) {
            issue(key, "not a number: '" + e->value + "'");
            return fallback;
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        seen_.insert(key);
        const auto* e = pc_.find(key);
        if (!e) return fallback;
        if (e->value == "true") return true;
        if (e->value == "false") return false;
        issue(key, "expected true or false, got '" + e->value + "'");
        return fallback;
    }

    // Bracket list "[4,16,P]": integers with an optional trailing P placeholder.
    // Returns tokens; -1 encodes P.
    std::optional<std::vector<int64_t>> get_bracket(const std::string& key) {
        seen_.insert(key);
        const auto* e = pc_.find(key);
        if (!e) return std::nullopt;
        std::string v = e->value;
        v.erase(std::remove_if(v.begin(), v.end(), [](char c) { return c == ' ' || c == '\t'; }), v.end());
        if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
            issue(key, "expected a bracket list like [4,16,P], got '" + e->value + "'");
            return std::nullopt;
        }
        std::vector<int64_t> tokens;
        std::string body = v.substr(1, v.size() - 2);
        std::istringstream ss(body);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok == "P") {
                tokens.push_back(-1);
                continue;
            }
            try {
                size_t used = 0;
                const int64_t w = std::stoll(tok, &used);
                if (used != tok.size() || w < 1) throw std::invalid_argument(tok);
                tokens.push_back(w);
            } catch (const std::exception&) {
                issue(key, "bad bracket entry '" + tok + "'");
                return std::nullopt;
            }
        }
        if (tokens.empty()) {
            issue(key, "bracket list is empty");
            return std::nullopt;
        }
        return tokens;
    }

    void check_unknown_keys() {
        for (const auto& e : pc_.entries()) {
            if (!seen_.count(e.key)) {
                issues_.push_back({e.key, e.line, "unknown configuration key"});
            }
        }
    }

private:
    const ParsedConfig& pc_;
    std::vector<ValidationIssue>& issues_;
    std::set<std::string> seen_;
};

void extract(const ParsedConfig& pc, ExperimentConfig& cfg, std::vector<ValidationIssue>& issues) {
    Reader r(pc, issues);

    // experiment kind
    const std::string kind = r.get_string("experiment", "");
    if (kind == "xsinx") cfg.kind = ExperimentKind::xsinx;
    else if (kind == "xsinx_linear_primary") cfg.kind = ExperimentKind::xsinx_linear_primary;
    else if (kind == "multimodal_l1") cfg.kind = ExperimentKind::multimodal_l1;
    else if (kind == "multimodal_labeled") cfg.kind = ExperimentKind::multimodal_labeled;
    else if (kind == "forecast") cfg.kind = ExperimentKind::forecast;
    else if (kind.empty()) r.issue("experiment", "required: one of xsinx, xsinx_linear_primary, multimodal_l1, multimodal_labeled, forecast");
    else r.issue("experiment", "unknown experiment '" + kind + "'");

    cfg.seed = static_cast<uint64_t>(r.get_int("seed", 1, 0));
    cfg.out_dir = r.get_string("out_dir", std::string("runs/") + kind);

    // primary model
    std::string primary_default = "mlp";
    if (cfg.kind == ExperimentKind::xsinx_linear_primary) primary_default = "linear";
    if (cfg.kind == ExperimentKind::forecast) primary_default = "nbeats";
    const std::string primary = r.get_string("primary.kind", primary_default);
    if (primary == "linear") cfg.primary_kind = PrimaryKind::linear;
    else if (primary == "mlp") cfg.primary_kind = PrimaryKind::mlp;
    else if (primary == "nbeats") cfg.primary_kind = PrimaryKind::nbeats;
    else r.issue("primary.kind", "unknown primary model '" + primary + "'");

    if (auto hidden = r.get_bracket("primary.hidden")) {
        for (int64_t w : *hidden) {
            if (w == -1) {
                r.issue("primary.hidden", "P placeholder is not allowed here");
                w = 1;
            }
        }
        cfg.primary_hidden = *hidden;
    }
    cfg.nbeats.input_len = r.get_int("primary.input_len", 6, 1);
    cfg.nbeats.horizon = r.get_int("primary.horizon", 3, 1);
    cfg.nbeats.blocks = r.get_int("primary.blocks", 3, 1);
    cfg.nbeats.fc_width = r.get_int("primary.fc_width", 64, 1);
    cfg.nbeats.fc_depth = r.get_int("primary.fc_depth", 4, 1);
    cfg.nbeats.basis_dim = r.get_int("primary.basis_dim", 32, 1);
    if (cfg.kind == ExperimentKind::forecast && cfg.primary_kind != PrimaryKind::nbeats) {
        r.issue("primary.kind", "forecast experiments require the nbeats primary model");
    }

    // theta length implied by the primary model
    int64_t theta_len = 0;
    {
        const int64_t in_dim = cfg.kind == ExperimentKind::forecast ? cfg.nbeats.input_len : 1;
        switch (cfg.primary_kind) {
        case PrimaryKind::linear: theta_len = in_dim + 1; break;
        case PrimaryKind::mlp: {
            int64_t prev = in_dim;
            for (int64_t h : cfg.primary_hidden) {
                theta_len += prev * h + h;
                prev = h;
            }
            theta_len += prev + 1;
            break;
        }
        case PrimaryKind::nbeats: {
            int64_t prev = cfg.nbeats.input_len;
            for (int64_t i = 0; i < cfg.nbeats.fc_depth; ++i) {
                theta_len += prev * cfg.nbeats.fc_width + cfg.nbeats.fc_width;
                prev = cfg.nbeats.fc_width;
            }
            theta_len += prev * cfg.nbeats.basis_dim + cfg.nbeats.basis_dim;
            theta_len += cfg.nbeats.basis_dim * cfg.nbeats.input_len + cfg.nbeats.input_len;
            theta_len += cfg.nbeats.basis_dim * cfg.nbeats.horizon + cfg.nbeats.horizon;
            break;
        }
        }
    }

    // posterior model
    const std::string posterior = r.get_string("posterior.kind", "conditional");
    if (posterior == "unconditioned") cfg.posterior_kind = PosteriorKind::unconditioned;
    else if (posterior == "conditional") cfg.posterior_kind = PosteriorKind::conditional;
    else if (posterior == "mdn") cfg.posterior_kind = PosteriorKind::mdn;
    else r.issue("posterior.kind", "unknown posterior model '" + posterior + "'");

    std::vector<int64_t> arch = {4, 16, -1};
    if (cfg.posterior_kind == PosteriorKind::mdn) arch = {16, -1};
    if (auto b = r.get_bracket("posterior.arch")) arch = *b;
    for (size_t i = 0; i + 1 < arch.size(); ++i) {
        if (arch[i] == -1) r.issue("posterior.arch", "P placeholder is only allowed as the last entry");
    }
    if (arch.back() == -1) {
        arch.back() = theta_len;
    } else if (arch.back() != theta_len) {
        r.issue("posterior.arch",
                "output width " + std::to_string(arch.back()) + " does not match the primary model's " +
                    std::to_string(theta_len) + " parameters (use P)");
    }
    if (arch.size() < 2 && cfg.posterior_kind != PosteriorKind::mdn) {
        r.issue("posterior.arch", "hypernet bracket needs at least [latent,P]");
    }
    cfg.posterior_arch = arch;

    const std::string latent = r.get_string("posterior.latent", "uniform");
    if (latent == "uniform") cfg.latent.base = LatentSpec::Base::uniform;
    else if (latent == "normal") cfg.latent.base = LatentSpec::Base::standard_normal;
    else r.issue("posterior.latent", "expected uniform or normal, got '" + latent + "'");
    cfg.latent.lo = r.get_double("posterior.latent_lo", -1.0);
    cfg.latent.hi = r.get_double("posterior.latent_hi", 1.0);
    if (!(cfg.latent.lo < cfg.latent.hi)) r.issue("posterior.latent_lo", "latent_lo must be < latent_hi");
    cfg.latent.dim = cfg.posterior_kind == PosteriorKind::mdn ? 0 : arch.front();

    cfg.init_gain = r.get_double("posterior.init_gain", 0.1);
    if (!(cfg.init_gain > 0.0)) r.issue("posterior.init_gain", "init gain must be > 0");
    cfg.per_layer = r.get_bool("posterior.per_layer", false);
    cfg.degenerate = r.get_bool("posterior.degenerate", false);
    if (cfg.posterior_kind == PosteriorKind::mdn && cfg.per_layer) {
        r.issue("posterior.per_layer", "per-layer composition applies to hypernet posteriors only");
    }
    if (cfg.posterior_kind == PosteriorKind::mdn && cfg.degenerate) {
        r.issue("posterior.degenerate", "degenerate freezing applies to hypernet posteriors only");
    }
    if (cfg.kind == ExperimentKind::multimodal_labeled && cfg.posterior_kind != PosteriorKind::conditional) {
        r.issue("posterior.kind", "multimodal_labeled feeds labels to a conditional posterior");
    }

    // likelihood
    std::string lik_default = "gaussian";
    if (cfg.kind == ExperimentKind::multimodal_l1) lik_default = "l1";
    const std::string lik = r.get_string("likelihood.kind", lik_default);
    if (lik == "gaussian") cfg.likelihood_kind = LikelihoodKind::gaussian;
    else if (lik == "l1") cfg.likelihood_kind = LikelihoodKind::l1;
    else if (lik == "sse_l2") cfg.likelihood_kind = LikelihoodKind::sse_l2;
    else r.issue("likelihood.kind", "unknown likelihood '" + lik + "'");
    cfg.sigma = r.get_double("likelihood.sigma", 0.01);
    if (cfg.likelihood_kind == LikelihoodKind::gaussian && !(cfg.sigma > 0.0)) {
        r.issue("likelihood.sigma", "sigma must be > 0");
    }
    cfg.lambda = r.get_double("likelihood.lambda", 0.0);
    if (cfg.lambda < 0.0) r.issue("likelihood.lambda", "lambda must be >= 0");

    // training
    cfg.train.epochs = static_cast<int>(r.get_int("train.epochs", 100, 1));
    cfg.train.batch_size = static_cast<int>(r.get_int("train.batch_size", 32, 1));
    cfg.train.mc_samples = static_cast<int>(r.get_int("train.mc_samples", 10, 1));
    const std::string mode = r.get_string("train.loss_mode", "neg_log_mean_prob");
    if (mode == "neg_log_mean_prob") cfg.train.loss_mode = LossMode::neg_log_mean_prob;
    else if (mode == "mean_prob") cfg.train.loss_mode = LossMode::mean_prob;
    else r.issue("train.loss_mode", "expected neg_log_mean_prob or mean_prob");
    const std::string opt = r.get_string("train.optimizer", "adam");
    if (opt == "adam") cfg.train.optimizer.kind = OptimizerKind::adam;
    else if (opt == "sgd") cfg.train.optimizer.kind = OptimizerKind::sgd;
    else r.issue("train.optimizer", "expected adam or sgd");
    cfg.train.optimizer.lr = r.get_double("train.lr", 0.01);
    if (!(cfg.train.optimizer.lr > 0.0)) r.issue("train.lr", "learning rate must be > 0");
    cfg.train.optimizer.beta1 = r.get_double("train.beta1", 0.9);
    cfg.train.optimizer.beta2 = r.get_double("train.beta2", 0.999);
    cfg.train.optimizer.eps = r.get_double("train.eps", 1e-8);
    cfg.train.grad_clip = r.get_double("train.grad_clip", 0.0);
    if (cfg.train.grad_clip < 0.0) r.issue("train.grad_clip", "grad_clip must be >= 0 (0 disables)");
    cfg.train.early_stopping.enabled = r.get_bool("train.early_stopping", true);
    cfg.train.early_stopping.val_fraction = r.get_double("train.val_fraction", 0.1);
    if (cfg.train.early_stopping.val_fraction < 0.0 || cfg.train.early_stopping.val_fraction >= 1.0) {
        r.issue("train.val_fraction", "val_fraction must lie in [0,1)");
    }
    cfg.train.early_stopping.patience = static_cast<int>(r.get_int("train.patience", 20, 0));
    cfg.train.early_stopping.min_delta = r.get_double("train.min_delta", 1e-4);
    cfg.train.seed = cfg.seed;

    // dataset
    cfg.n_base = static_cast<int>(r.get_int("data.n_base", 32, 1));
    cfg.grid_spacing = r.get_bool("data.grid_spacing", false);
    cfg.include_outliers = r.get_bool("data.include_outliers", true);
    cfg.n_multimodal = static_cast<int>(r.get_int("data.n", 128, 2));
    if (cfg.n_multimodal % 2 != 0) r.issue("data.n", "must be even (equal counts per branch)");
    cfg.noise_var = r.get_double("data.noise_var", 0.01);
    if (cfg.noise_var < 0.0) r.issue("data.noise_var", "noise variance must be >= 0");
    cfg.csv_path = r.get_string("data.csv", "");
    if (cfg.kind == ExperimentKind::forecast && cfg.csv_path.empty()) {
        r.issue("data.csv", "forecast experiments need a series CSV path");
    }
    cfg.train_fraction = r.get_double("data.train_fraction", 0.701);
    if (cfg.train_fraction <= 0.0 || cfg.train_fraction >= 1.0) {
        r.issue("data.train_fraction", "train fraction must lie in (0,1)");
    }
    cfg.standardize = r.get_bool("data.standardize", true);

    cfg.eval_mc_samples = static_cast<int>(r.get_int("eval.mc_samples", 30, 1));

    r.check_unknown_keys();
}

} // namespace

std::vector<ValidationIssue> validate_config(const ParsedConfig& pc) {
    ExperimentConfig cfg;
    std::vector<ValidationIssue> issues;
    extract(pc, cfg, issues);
    return issues;
}

ExperimentConfig build_config(const ParsedConfig& pc) {
    ExperimentConfig cfg;
    std::vector<ValidationIssue> issues;
    extract(pc, cfg, issues);
    if (!issues.empty()) {
        throw ConfigError("invalid configuration (" + pc.origin() + "):\n" + format_issues(issues));
    }
    return cfg;
}

} // namespace postpred
