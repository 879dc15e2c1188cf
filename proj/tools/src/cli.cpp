// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/cli/cli.hpp"

#include <cstdlib>
#include <functional>
#include <memory>
#include <ostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "forgetlab/http_rewriter.hpp"

#ifndef FORGETLAB_VERSION
#define FORGETLAB_VERSION "0.0.0"
#endif

namespace forgetlab::cli {

namespace {

/// Options of one subcommand, each paired with the RunConfig field it sets.
/// Only options present on the command line are applied.
class Binder {
public:
    explicit Binder(CLI::App* app) : app_(app) {}

    template <typename T, typename Setter>
    CLI::Option* option(const std::string& name, const std::string& help, Setter setter) {
        auto value = std::make_shared<T>();
        auto* opt = app_->add_option(name, *value, help);
        bindings_.push_back({opt, [value, setter](RunConfig& c) { setter(c, *value); }});
        return opt;
    }

    template <typename Setter>
    CLI::Option* flag(const std::string& name, const std::string& help, Setter setter) {
        auto* opt = app_->add_flag(name, help);
        bindings_.push_back({opt, [setter](RunConfig& c) { setter(c); }});
        return opt;
    }

    void apply(RunConfig& config) const {
        for (const auto& [opt, set] : bindings_) {
            if (opt->count() > 0) set(config);
        }
    }

    [[nodiscard]] CLI::App* app() const noexcept { return app_; }

private:
    CLI::App* app_;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> bindings_;
};

void add_suite_options(Binder& b) {
    b.option<int>("--n-tasks", "Number of synthetic tasks", [](RunConfig& c, int v) { c.suite.n_tasks = v; });
    b.option<int>("--samples", "Samples per task", [](RunConfig& c, int v) { c.suite.samples_per_task = v; });
    b.option<int>("--d-in", "Input width", [](RunConfig& c, int v) { c.suite.d_in = v; });
    b.option<int>("--classes", "Content classes per task", [](RunConfig& c, int v) { c.suite.content_classes = v; });
}

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError(what);
}

}  // namespace

std::string version_string() { return std::string("forgetlab ") + FORGETLAB_VERSION; }

Invocation parse_invocation(const std::vector<std::string>& args) {
    CLI::App app{"Desk-scale continual instruction tuning lab", "forgetlab"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", version_string());

    std::string config_path;
    auto add_config = [&](CLI::App* sub) { sub->add_option("--config", config_path, "JSON run config"); };

    auto* asd_cmd = app.add_subcommand("asd", "Diversify the answer styles of a JSONL dataset");
    Binder asd(asd_cmd);
    add_config(asd_cmd);
    asd.option<std::string>("--input", "Input dataset", [](RunConfig& c, const std::string& v) { c.asd.input = v; });
    asd.option<std::string>("--output", "Output dataset", [](RunConfig& c, const std::string& v) { c.asd.output = v; });
    asd.option<double>("--x", "Percent of each task to transform", [](RunConfig& c, double v) { c.asd.x_percent = v; });
    asd.option<std::uint64_t>("--seed", "Transformation seed", [](RunConfig& c, std::uint64_t v) { c.asd.seed = v; });
    asd.option<std::string>("--rewriter", "template | http",
                            [](RunConfig& c, const std::string& v) { c.asd.rewriter.kind = v; });
    asd.option<std::string>("--endpoint", "Rewriter service URL",
                            [](RunConfig& c, const std::string& v) { c.asd.rewriter.endpoint = v; });
    asd.option<int>("--timeout-ms", "Per-request timeout", [](RunConfig& c, int v) { c.asd.rewriter.timeout_ms = v; });
    asd.option<int>("--retries", "Retries per request", [](RunConfig& c, int v) { c.asd.rewriter.retries = v; });
    asd.flag("--strict", "Fail on the first rewriter error", [](RunConfig& c) { c.asd.strict = true; });
    asd.option<std::string>("--overrides", "Per-task rule overrides",
                            [](RunConfig& c, const std::string& v) { c.asd.overrides = v; });
    asd.option<int>("--threads", "Worker threads (0 = all cores)", [](RunConfig& c, int v) { c.asd.threads = v; });

    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic task suite");
    Binder synth(synth_cmd);
    add_config(synth_cmd);
    synth.option<std::string>("--out", "Output container", [](RunConfig& c, const std::string& v) { c.out = v; });
    synth.option<double>("--mix", "Percent of non-dominant styles", [](RunConfig& c, double v) {
        c.suite.style_mix_percent = v;
    });
    synth.option<std::uint64_t>("--seed", "Suite seed", [](RunConfig& c, std::uint64_t v) { c.suite.seed = v; });
    add_suite_options(synth);

    auto* train_cmd = app.add_subcommand("train", "Train a task sequence for each mode and seed");
    Binder tr(train_cmd);
    add_config(train_cmd);
    tr.option<std::string>("--tasks", "Task-suite container (default: generate one per seed)",
                           [](RunConfig& c, const std::string& v) { c.tasks = v; });
    tr.option<std::string>("--mode", "plain | reglora, comma-separated",
                           [](RunConfig& c, const std::string& v) { c.modes = parse_mode_list(v); });
    tr.option<double>("--m", "Key-element percent", [](RunConfig& c, double v) { c.train.reg.m_percent = v; });
    tr.option<double>("--lambda", "Mask penalty weight", [](RunConfig& c, double v) { c.train.reg.lambda = v; });
    auto* mix_opt = tr.option<double>("--mix", "Style mix of generated suites",
                                      [](RunConfig& c, double v) { c.suite.style_mix_percent = v; });
    tr.option<std::string>("--seeds", "Comma-separated seeds",
                           [](RunConfig& c, const std::string& v) { c.seeds = parse_seed_list(v); });
    tr.option<std::string>("--out", "Run directory", [](RunConfig& c, const std::string& v) { c.out = v; });
    tr.option<int>("--epochs", "Epochs per task", [](RunConfig& c, int v) { c.train.epochs = v; });
    tr.option<double>("--lr", "Learning rate", [](RunConfig& c, double v) { c.train.learning_rate = v; });
    tr.option<std::string>("--optimizer", "adam | sgd",
                           [](RunConfig& c, const std::string& v) { c.train.optimizer = train::parse_optimizer(v); });
    tr.option<int>("--batch-size", "Minibatch size", [](RunConfig& c, int v) { c.train.batch_size = v; });
    tr.option<int>("--rank", "LoRA rank", [](RunConfig& c, int v) { c.train.rank = v; });
    tr.option<int>("--width", "Hidden width", [](RunConfig& c, int v) { c.train.width = v; });
    tr.option<int>("--trunk-layers", "Hidden layers (1 or 2)", [](RunConfig& c, int v) { c.train.trunk_layers = v; });
    add_suite_options(tr);

    auto* report_cmd = app.add_subcommand("report", "Summarize a training run");
    Binder report(report_cmd);
    report.option<std::string>("--run", "Run directory", [](RunConfig& c, const std::string& v) { c.run_dir = v; });

    auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a task suite");
    Binder ev(eval_cmd);
    add_config(eval_cmd);
    ev.option<std::string>("--checkpoint", "Checkpoint file",
                           [](RunConfig& c, const std::string& v) { c.checkpoint = v; });
    ev.option<std::string>("--tasks", "Task-suite container", [](RunConfig& c, const std::string& v) { c.tasks = v; });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        return {"help", {}, app.help()};
    } catch (const CLI::CallForVersion&) {
        return {"version", {}, version_string()};
    }

    const Binder* chosen = nullptr;
    for (const Binder* b : {&asd, &synth, &tr, &report, &ev}) {
        if (b->app()->parsed()) chosen = b;
    }
    Invocation inv;
    inv.command = chosen->app()->get_name();
    if (!config_path.empty()) inv.config = load_config_file(config_path, inv.config);
    chosen->apply(inv.config);

    auto& c = inv.config;
    if (c.asd.rewriter.endpoint.empty()) {
        if (const char* env = std::getenv(rewrite::kRewriterUrlEnv)) c.asd.rewriter.endpoint = env;
    }
    if (inv.command == "asd") {
        require(!c.asd.input.empty(), "asd needs --input");
        require(!c.asd.output.empty(), "asd needs --output");
    } else if (inv.command == "synth") {
        require(!c.out.empty(), "synth needs --out");
    } else if (inv.command == "train") {
        require(!c.out.empty(), "train needs --out");
        if (!c.tasks.empty() && mix_opt->count() > 0) {
            throw ValidationError("--mix applies to generated suites only; it cannot be combined with --tasks");
        }
    } else if (inv.command == "report") {
        require(!c.run_dir.empty(), "report needs --run");
    } else if (inv.command == "eval") {
        require(!c.checkpoint.empty(), "eval needs --checkpoint");
        require(!c.tasks.empty(), "eval needs --tasks");
    }
    c.validate();
    return inv;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Invocation inv;
    try {
        inv = parse_invocation(args);
    } catch (const CLI::Error& e) {
        err << "error: " << e.what() << "\nusage: forgetlab <asd|synth|train|report|eval> [options]\n";
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }

    if (inv.command == "help" || inv.command == "version") {
        out << inv.text << '\n';
        return kExitOk;
    }
    try {
        std::string summary;
        if (inv.command == "asd") summary = run_asd(inv.config, out, err);
        else if (inv.command == "synth") summary = run_synth(inv.config, out);
        else if (inv.command == "train") summary = run_train(inv.config, out);
        else if (inv.command == "report") summary = run_report(inv.config, out);
        else summary = run_eval(inv.config, out);
        out << summary << '\n';
        return kExitOk;
    } catch (const RewriterError& e) {
        err << "rewriter error: " << e.what() << '\n';
        return kExitRewriter;
    } catch (const DivergenceError& e) {
        err << "training diverged: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }
}

}  // namespace forgetlab::cli
