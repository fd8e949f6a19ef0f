#include "alloc_count.hpp"

#include "engage/config.hpp"
#include "engage/error.hpp"
#include "engage/pipeline.hpp"
#include "engage/text.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

enum ExitCode { ok = 0, failure = 1, config_error = 2, data_error = 3, budget_violation = 4 };

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string dir = "work";
};

engage::RunConfig effective_config(const Common& common) {
    engage::RunConfig cfg = common.config_path.empty() ? engage::RunConfig{} : engage::RunConfig::load(common.config_path);
    for (const auto& o : common.overrides) cfg.apply_override(o);
    cfg.validate();
    return cfg;
}

void print_training(const engage::TrainingReport& r) {
    std::cout << "initial loss " << r.initial_loss << '\n';
    for (std::size_t e = 0; e < r.stage1_epoch_loss.size(); ++e) {
        std::cout << "stage 1 epoch " << e + 1 << " loss " << r.stage1_epoch_loss[e] << '\n';
    }
    for (std::size_t e = 0; e < r.stage2_epoch_loss.size(); ++e) {
        std::cout << "stage 2 epoch " << e + 1 << " loss " << r.stage2_epoch_loss[e] << '\n';
    }
    std::cout << "steps " << r.steps << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Engagement prediction pipeline: synthetic data, features, training, evaluation and latency bench"};
    app.require_subcommand(1);
    Common common;
    bool enforce = false;
    bool dump_config = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config_path, "key = value config file")->check(CLI::ExistingFile);
        sub->add_option("-s,--set", common.overrides, "override, key=value (repeatable)");
        sub->add_option("-d,--dir", common.dir, "work directory holding the artifacts")->capture_default_str();
    };
    struct Entry {
        const char* name;
        const char* help;
    };
    const Entry entries[] = {
        {"gen", "generate the synthetic log, follower sets and token embeddings"},
        {"fit-sketch", "fit the sketch codec on the token embeddings"},
        {"partition", "write the day-window, random and holdout plans"},
        {"build-store", "build the per-chunk feature stores and the evaluation store"},
        {"featurize", "assemble feature rows for both training stages"},
        {"train", "train the model in two stages"},
        {"predict", "score the evaluation holdout"},
        {"eval", "compute AP/RCE, overall and per popularity group"},
        {"bench", "single-prediction latency on one pinned core"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& e : entries) {
        auto* sub = app.add_subcommand(e.name, e.help);
        add_common(sub);
        subs.push_back(sub);
    }
    subs.back()->add_flag("--enforce", enforce, "exit 4 when the latency budget is exceeded");
    app.add_flag("--print-config", dump_config, "print the effective configuration and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return config_error;
    }

    try {
        const auto cfg = effective_config(common);
        if (dump_config) {
            for (const auto& line : cfg.lines()) std::cout << line << '\n';
            return ok;
        }
        const engage::WorkDir dir{common.dir};
        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "gen") {
            engage::run_gen(cfg, dir);
        } else if (name == "fit-sketch") {
            engage::run_fit_sketch(cfg, dir);
        } else if (name == "partition") {
            engage::run_partition(cfg, dir);
        } else if (name == "build-store") {
            engage::run_build_store(cfg, dir);
        } else if (name == "featurize") {
            engage::run_featurize(cfg, dir);
        } else if (name == "train") {
            print_training(engage::run_train(cfg, dir));
        } else if (name == "predict") {
            engage::run_predict(cfg, dir);
        } else if (name == "eval") {
            std::cout << engage::format_report(engage::run_eval(cfg, dir));
        } else if (name == "bench") {
            engage::BenchOptions options;
            options.warmup = cfg.bench.warmup;
            options.predictions = cfg.bench.predictions;
            options.cpu = cfg.bench.cpu;
            options.allocation_counter = engage::tools::allocation_count;
            const auto r = engage::run_bench(cfg, dir, options);
            std::printf("predictions %zu  pinned %s\n", r.predictions, r.pinned ? "yes" : "no");
            std::printf("p50 %.4f ms  p95 %.4f ms  max %.4f ms  mean %.4f ms\n", r.p50_ms, r.p95_ms, r.max_ms,
                        r.mean_ms);
            std::printf("allocations during timed loop %llu  wall %.2f s\n",
                        static_cast<unsigned long long>(r.allocations), r.wall_seconds);
            const bool within = r.p95_ms <= cfg.bench.budget_p95_ms && r.p50_ms <= cfg.bench.budget_p50_ms;
            std::printf("budget p50 <= %.2f ms, p95 <= %.2f ms: %s\n", cfg.bench.budget_p50_ms,
                        cfg.bench.budget_p95_ms, within ? "met" : "exceeded");
            if (enforce && !within) return budget_violation;
        }
    } catch (const engage::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const engage::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const engage::DivergenceError& e) {
        std::cerr << "training diverged at step " << e.step() << ": " << e.what() << '\n';
        return data_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
    return ok;
}
