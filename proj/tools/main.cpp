#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "postpred/config.hpp"
#include "postpred/datasets.hpp"
#include "postpred/experiment.hpp"

namespace {

using namespace postpred;

int cmd_validate(const std::string& path) {
    ParsedConfig pc = ParsedConfig::from_file(path);
    auto issues = validate_config(pc);
    if (issues.empty()) {
        std::cout << "OK: " << path << "\n";
        return 0;
    }
    std::cerr << format_issues(issues);
    return 2;
}

int cmd_run(const std::string& path, std::optional<uint64_t> seed, std::optional<std::string> out_dir) {
    ParsedConfig pc = ParsedConfig::from_file(path);
    auto issues = validate_config(pc);
    if (!issues.empty()) {
        std::cerr << format_issues(issues);
        return 2;
    }
    ExperimentConfig cfg = build_config(pc);
    if (seed) {
        cfg.seed = *seed;
        cfg.train.seed = *seed;
    }
    if (out_dir) cfg.out_dir = *out_dir;
    try {
        RunArtifacts art = run_experiment(cfg, pc.raw_text());
        std::cout << "run complete: " << art.out_dir << "\n";
        std::cout << art.metrics.dump(2) << "\n";
        return 0;
    } catch (const NumericError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 3;
    }
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write " + path);
    out << header << "\n";
    char buf[64];
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
            out << buf;
        }
        out << '\n';
    }
}

int cmd_gen_data(const std::string& kind, const std::string& out_path, uint64_t seed) {
    Rng rng(seed);
    if (kind == "xsinx") {
        XsinxData d = gen_xsinx(XsinxOptions{}, rng);
        std::vector<std::vector<double>> rows;
        for (int64_t i = 0; i < d.train.size(); ++i) {
            rows.push_back({d.train.x.data()[i], d.train.y.data()[i]});
        }
        write_csv(out_path, "x,y", rows);
    } else if (kind == "multimodal") {
        MultimodalData d = gen_multimodal(MultimodalOptions{}, rng);
        std::vector<std::vector<double>> rows;
        for (int64_t i = 0; i < d.train.size(); ++i) {
            rows.push_back({d.train.x.data()[i], d.train.y.data()[i], d.train.labels.data()[i]});
        }
        write_csv(out_path, "x,y,label", rows);
    } else if (kind == "seasonal") {
        std::vector<double> series = gen_seasonal_series(2976, rng);
        std::vector<std::vector<double>> rows;
        for (double v : series) rows.push_back({v});
        write_csv(out_path, "value", rows);
    } else {
        std::cerr << "unknown dataset kind '" << kind << "' (expected xsinx, multimodal or seasonal)\n";
        return 2;
    }
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Posterior-predictive training of implicit parameter distributions"};
    app.require_subcommand(1);

    std::string cfg_path, data_kind, data_out;
    std::optional<uint64_t> seed_override;
    std::optional<std::string> out_dir_override;
    uint64_t gen_seed = 1;

    auto* run = app.add_subcommand("run", "execute an experiment config and write a run directory");
    run->add_option("config", cfg_path, "config file")->required();
    run->add_option("--seed", seed_override, "override the config seed");
    run->add_option("--out-dir", out_dir_override, "override the output directory");

    auto* validate = app.add_subcommand("validate", "check a config without running it");
    validate->add_option("config", cfg_path, "config file")->required();

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset CSV");
    gen->add_option("kind", data_kind, "xsinx | multimodal | seasonal")->required();
    gen->add_option("out", data_out, "output CSV path")->required();
    gen->add_option("--seed", gen_seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(cfg_path, seed_override, out_dir_override);
        if (validate->parsed()) return cmd_validate(cfg_path);
        if (gen->parsed()) return cmd_gen_data(data_kind, data_out, gen_seed);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const postpred::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
