// pcgkit: batch driver for synth -> condition -> featurize -> evaluate.

#include "oracles.hpp"
#include "pcgkit/errors.hpp"
#include "pcgkit/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pcgkit;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kInternal = 3 };

struct Common {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_seed = true) {
    cmd->add_option("--config", c.config, "key = value config file");
    cmd->add_option("--set", c.overrides, "override a config key (key=value), repeatable");
    if (with_seed) cmd->add_option("--seed", c.seed, "overrides the config seed");
    cmd->add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
}

PipelineConfig resolve(const Common& c) {
    PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : PipelineConfig::load(c.config);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

void print_report(const char* title, const EvalReport& r) {
    std::printf("%s: Acc %.4f  UAR %.4f  TPR %.4f  TNR %.4f  F1+ %.4f  F1- %.4f  MCC %.4f\n", title, r.acc, r.uar,
                r.tpr, r.tnr, r.f1_pos, r.f1_neg, r.mcc);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"pcgkit: multichannel PCG conditioning and feature extraction"};
    app.require_subcommand(1);

    Common common;
    std::string out, manifest, input, pred, truth;
    std::size_t batches = 100;

    auto* synth = app.add_subcommand("synth", "generate a synthetic multichannel dataset");
    add_common(synth, common);
    synth->add_option("--out", out, "output directory")->required();

    auto* condition = app.add_subcommand("condition", "gate, filter and normalise every subject");
    add_common(condition, common);
    condition->add_option("--manifest", manifest, "subject manifest (TSV)")->required();
    condition->add_option("--out", out, "output directory")->required();

    auto* featurize = app.add_subcommand("featurize", "plan fragments and write MFCC feature files per split");
    add_common(featurize, common);
    featurize->add_option("--in", input, "directory written by `condition`")->required();
    featurize->add_option("--out", out, "output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "fragment and subject level metrics");
    evaluate->add_option("--pred", pred, "predictions: subject fragment_index label")->required();
    evaluate->add_option("--truth", truth, "truth file written by `featurize`")->required();
    evaluate->add_option("--out", out, "report directory")->required();

    auto* loss_check = app.add_subcommand("loss-check", "compare the objective with reference implementations");
    loss_check->add_option("--seed", common.seed, "batch generator seed");
    loss_check->add_option("--batches", batches, "random batches")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*synth) {
            const auto s = cmd_synth(resolve(common), out, common.jobs);
            std::printf("synth: %zu subjects (%zu CAD) -> %s\n", s.subjects, s.cad, s.manifest.string().c_str());
        } else if (*condition) {
            const auto s = cmd_condition(manifest, resolve(common), out, common.jobs);
            std::printf("condition: %zu ok, %zu skipped, %zu failed\n", s.count("ok"), s.count("skip"),
                        s.count("fail"));
            for (const auto& e : s.entries)
                if (e.status != "ok") std::fprintf(stderr, "  %s %s: %s\n", e.subject_id.c_str(), e.status.c_str(),
                                                   e.message.c_str());
        } else if (*featurize) {
            const auto s = cmd_featurize(input, resolve(common), out, common.jobs);
            std::printf("featurize: train targets CAD=%zu NOR=%zu\n", s.train_targets.cad, s.train_targets.nor);
            for (const auto& [split, by_label] : s.fragments)
                std::printf("  %-5s CAD %zu  NOR %zu\n", split.c_str(), by_label.at(Label::CAD),
                            by_label.at(Label::NOR));
            for (const auto& e : s.excluded) std::fprintf(stderr, "  excluded: %s\n", e.c_str());
        } else if (*evaluate) {
            const auto r = cmd_evaluate(pred, truth, out);
            print_report("fragment", r.fragment);
            print_report("subject ", r.subject);
        } else if (*loss_check) {
            bool ok = true;
            for (const auto& r : oracle::run_loss_checks(batches, common.seed.value_or(1))) {
                std::printf("%-4s %-28s max |diff| = %.3e\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                            r.max_abs_error);
                ok = ok && r.pass;
            }
            return ok ? kOk : kInternal;
        }
        return kOk;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kInternal;
    }
}
