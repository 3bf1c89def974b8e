#include "doctest.h"

#include <string>

#include "postpred/config.hpp"

using namespace postpred;

namespace {

std::string issues_text(const ParsedConfig& pc) { return format_issues(validate_config(pc)); }

const std::string kValidBase = R"(experiment = xsinx
seed = 7
primary.kind = mlp
primary.hidden = [512]
posterior.kind = conditional
posterior.arch = [4,16,P]
likelihood.kind = gaussian
likelihood.sigma = 0.01
train.epochs = 10
train.batch_size = 32
train.mc_samples = 10
eval.mc_samples = 30
)";

} // namespace

TEST_CASE("a full valid config produces an empty report") {
    ParsedConfig pc = ParsedConfig::from_string(kValidBase);
    CHECK(validate_config(pc).empty());
    ExperimentConfig cfg = build_config(pc);
    CHECK(cfg.kind == ExperimentKind::xsinx);
    CHECK(cfg.seed == 7);
    CHECK(cfg.primary_hidden == std::vector<int64_t>{512});
    // P resolved: 1*512+512 + 512*1+1
    CHECK(cfg.posterior_arch == std::vector<int64_t>{4, 16, 1537});
}

TEST_CASE("parser: comments, blanks, syntax errors, duplicates") {
    ParsedConfig pc = ParsedConfig::from_string("# comment\n\nexperiment = xsinx # trailing\n");
    REQUIRE(pc.entries().size() == 1);
    CHECK(pc.entries()[0].key == "experiment");
    CHECK(pc.entries()[0].value == "xsinx");
    CHECK(pc.entries()[0].line == 3);

    CHECK_THROWS_WITH_AS(ParsedConfig::from_string("experiment xsinx\n"), doctest::Contains(":1:"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(ParsedConfig::from_string("a = 1\na = 2\n"), doctest::Contains("duplicate"),
                         ConfigError);
}

TEST_CASE("posterior arch mismatch names both lengths") {
    std::string text = kValidBase;
    text.replace(text.find("[4,16,P]"), 8, "[4,16,9]");
    ParsedConfig pc = ParsedConfig::from_string(text);
    auto issues = validate_config(pc);
    REQUIRE(!issues.empty());
    CHECK(issues[0].field == "posterior.arch");
    CHECK(issues[0].line == 6);
    CHECK(issues[0].message.find("9") != std::string::npos);
    CHECK(issues[0].message.find("1537") != std::string::npos);
}

TEST_CASE("negative sigma is rejected with its line number") {
    std::string text = kValidBase;
    text.replace(text.find("0.01"), 4, "-0.5");
    ParsedConfig pc = ParsedConfig::from_string(text);
    auto issues = validate_config(pc);
    REQUIRE(!issues.empty());
    bool found = false;
    for (const auto& issue : issues) {
        if (issue.field == "likelihood.sigma") {
            found = true;
            CHECK(issue.line == 8);
        }
    }
    CHECK(found);
}

TEST_CASE("unknown keys, bad enums, bad brackets and bad numbers are all reported") {
    ParsedConfig pc = ParsedConfig::from_string(
        "experiment = warp\nmystery.key = 3\nposterior.arch = [4,,P]\ntrain.epochs = many\n");
    auto issues = validate_config(pc);
    auto has = [&](const std::string& field) {
        for (const auto& issue : issues) {
            if (issue.field == field) return true;
        }
        return false;
    };
    CHECK(has("experiment"));
    CHECK(has("mystery.key"));
    CHECK(has("posterior.arch"));
    CHECK(has("train.epochs"));
}

TEST_CASE("experiment-specific constraints") {
    // forecast requires a csv and the nbeats primary
    ParsedConfig pc = ParsedConfig::from_string("experiment = forecast\nprimary.kind = linear\n");
    auto issues = validate_config(pc);
    bool csv = false, primary = false;
    for (const auto& issue : issues) {
        if (issue.field == "data.csv") csv = true;
        if (issue.field == "primary.kind") primary = true;
    }
    CHECK(csv);
    CHECK(primary);

    // labeled multimodal requires the conditional generator
    ParsedConfig pc2 =
        ParsedConfig::from_string("experiment = multimodal_labeled\nposterior.kind = unconditioned\n");
    auto issues2 = validate_config(pc2);
    bool kind = false;
    for (const auto& issue : issues2) {
        if (issue.field == "posterior.kind") kind = true;
    }
    CHECK(kind);

    // P placeholder may only close the bracket
    ParsedConfig pc3 = ParsedConfig::from_string(kValidBase + "posterior.per_layer = true\n");
    CHECK(validate_config(pc3).empty());
    std::string bad = kValidBase;
    bad.replace(bad.find("[4,16,P]"), 8, "[P,16,P]");
    CHECK(!validate_config(ParsedConfig::from_string(bad)).empty());
}

TEST_CASE("build_config throws with the collected issues when invalid") {
    ParsedConfig pc = ParsedConfig::from_string("experiment = nope\n");
    CHECK_THROWS_AS(build_config(pc), ConfigError);
}

TEST_CASE("validate accepts exactly what build accepts") {
    const std::string texts[] = {
        kValidBase,
        "experiment = nope\n",
        "experiment = multimodal_l1\ntrain.val_fraction = 1.5\n",
        "experiment = xsinx\nposterior.kind = mdn\nposterior.arch = [16,P]\n",
        "experiment = xsinx\ndata.n = 7\n",
    };
    for (const std::string& text : texts) {
        ParsedConfig pc = ParsedConfig::from_string(text);
        const bool valid = validate_config(pc).empty();
        bool built = true;
        try {
            build_config(pc);
        } catch (const ConfigError&) {
            built = false;
        }
        CHECK(valid == built);
    }
}

TEST_CASE("every bundled config validates") {
    const char* names[] = {"xsinx.cfg",           "xsinx_unconditioned.cfg", "xsinx_mdn.cfg",
                           "xsinx_linear.cfg",    "multimodal_l1.cfg",       "multimodal_labeled.cfg",
                           "forecast.cfg"};
    for (const char* name : names) {
        ParsedConfig pc = ParsedConfig::from_file(std::string(POSTPRED_CONFIG_DIR) + "/" + name);
        INFO(name, ": ", issues_text(pc));
        CHECK(validate_config(pc).empty());
    }
}
