// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <set>

#include <json.hpp>

#include "forgetlab/asd_engine.hpp"
#include "forgetlab/checkpoint.hpp"
#include "forgetlab/error.hpp"
#include "forgetlab/http_rewriter.hpp"
#include "forgetlab/metrics.hpp"
#include "forgetlab/qa_format.hpp"
#include "forgetlab/rewriter.hpp"

namespace forgetlab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kMatrixNames[] = {"joint", "style", "content"};

// Appended to the template pool so tiny datasets still have distractors.
const std::vector<std::string> kFallbackAnswers = {
    "red", "blue", "green", "two", "three", "left", "right", "dog", "cat", "car", "tree", "table",
};

std::vector<std::string> template_pool(const qa::Dataset& ds) {
    std::vector<std::string> pool;
    std::set<std::string> seen;
    auto push = [&](const std::string& s) {
        if (!s.empty() && seen.insert(s).second) pool.push_back(s);
    };
    for (const auto& s : ds.samples()) {
        if (s.format == qa::QuestionFormat::MultipleChoice) {
            for (const auto& o : s.options) push(o);
        } else if (s.format != qa::QuestionFormat::YesNo) {
            push(s.gt_label);
        }
    }
    for (const auto& w : kFallbackAnswers) push(w);
    return pool;
}

std::unique_ptr<rewrite::Rewriter> make_rewriter(const AsdSettings& a, const qa::Dataset& ds) {
    if (a.rewriter.kind == "template") return std::make_unique<rewrite::TemplateRewriter>(template_pool(ds), a.seed);
    if (a.rewriter.endpoint.empty()) {
        throw ValidationError(std::string("--rewriter http needs --endpoint or $") + rewrite::kRewriterUrlEnv);
    }
    rewrite::HttpPolicy policy;
    policy.timeout = std::chrono::milliseconds(a.rewriter.timeout_ms);
    policy.retries = a.rewriter.retries;
    return std::make_unique<rewrite::HttpRewriter>(a.rewriter.endpoint, policy);
}

std::string fixed(double v, int digits = 2) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

ordered_json summary_json(const metrics::Summary& s) {
    return {{"mft", s.mft}, {"mfn", s.mfn}, {"maa", s.maa}, {"bwt", s.bwt}};
}

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

}  // namespace

std::string run_asd(const RunConfig& config, std::ostream& out, std::ostream& err) {
    const auto& a = config.asd;
    const asd::RuleOverrides overrides = a.overrides.empty() ? asd::RuleOverrides{} : asd::load_rule_overrides(a.overrides);
    const auto task = fs::path(a.input).stem().string();
    const auto rules = overrides.find(task);
    const auto registry = rules == overrides.end() ? qa::RfpRegistry{} : asd::registry_for(rules->second);
    const auto input = qa::load_dataset(a.input, registry);

    auto rewriter = make_rewriter(a, input);
    asd::TransformOptions options;
    options.strict = a.strict;
    options.threads = static_cast<std::size_t>(a.threads);
    const auto result = asd::transform_dataset(input, a.x_percent, *rewriter, a.seed, overrides, options);

    ensure_parent(a.output);
    qa::save_dataset(result.dataset, a.output);
    io::write_file(a.output + ".log.json", result.log.to_json());
    io::write_file(a.output + ".config.json", to_json(config) + "\n");

    const auto& log = result.log;
    for (const auto& e : log.entries) {
        if (!e.success) err << "warning: " << e.id << " kept as-is: " << e.error << '\n';
    }
    out << "transformed " << (log.attempted() - log.failures()) << " of " << input.size() << " samples ("
        << log.failures() << " rewriter failures)\n";

    ordered_json s;
    s["command"] = "asd";
    s["status"] = "ok";
    s["input_samples"] = input.size();
    s["output_samples"] = result.dataset.size();
    s["transformed"] = log.attempted() - log.failures();
    s["failures"] = log.failures();
    s["out_of_band"] = log.out_of_band();
    auto& hist = s["histogram"];
    for (const auto f : qa::kAllFormats) hist[std::string(qa::format_tag(f))] = result.dataset.count(f);
    s["output"] = a.output;
    return s.dump();
}

std::string run_synth(const RunConfig& config, std::ostream& out) {
    const auto suite = toy::generate_task_suite(config.suite);
    ensure_parent(config.out);
    io::write_task_suite(config.out, suite);
    io::write_file(config.out + ".config.json", to_json(config) + "\n");
    out << "wrote " << suite.size() << " tasks x " << config.suite.samples_per_task << " samples to " << config.out
        << '\n';

    ordered_json s;
    s["command"] = "synth";
    s["status"] = "ok";
    s["tasks"] = suite.size();
    s["samples_per_task"] = config.suite.samples_per_task;
    s["mix"] = config.suite.style_mix_percent;
    s["output"] = config.out;
    return s.dump();
}

std::string run_train(const RunConfig& config, std::ostream& out) {
    const fs::path root(config.out);
    fs::create_directories(root);
    io::write_file((root / "config.json").string(), to_json(config) + "\n");

    std::vector<toy::ToyTask> fixed_suite;
    if (!config.tasks.empty()) fixed_suite = io::read_task_suite(config.tasks);

    ordered_json manifest;
    manifest["version"] = 1;
    manifest["tasks"] = config.tasks.empty() ? ordered_json("generated") : ordered_json(config.tasks);
    manifest["mix"] = fixed_suite.empty() ? config.suite.style_mix_percent : fixed_suite.front().style_mix_percent;
    auto& runs = manifest["runs"] = ordered_json::array();
    std::map<std::string, std::vector<double>> bwt_by_mode;

    for (const auto mode : config.modes) {
        for (const auto seed : config.seeds) {
            auto tasks = fixed_suite;
            if (tasks.empty()) {
                auto p = config.suite;
                p.seed = seed;
                tasks = toy::generate_task_suite(p);
            }
            auto tc = config.train;
            tc.mode = mode;
            tc.seed = seed;
            const auto result = train::run_sequence(tasks, tc);

            const auto rel = fs::path(std::string(train::mode_tag(mode))) / ("seed" + std::to_string(seed));
            fs::create_directories(root / rel);
            ordered_json entry;
            entry["mode"] = train::mode_tag(mode);
            entry["seed"] = seed;
            const metrics::AccuracyMatrix* mats[] = {&result.joint, &result.style, &result.content};
            for (int m = 0; m < 3; ++m) {
                const auto file = rel / (std::string(kMatrixNames[m]) + ".csv");
                io::write_file((root / file).string(), metrics::to_csv(*mats[m]));
                entry["matrices"][kMatrixNames[m]] = file.generic_string();
                entry["summary"][kMatrixNames[m]] = summary_json(metrics::summarize(*mats[m]));
            }
            auto& cps = entry["checkpoints"] = ordered_json::array();
            for (std::size_t t = 0; t < result.checkpoints.size(); ++t) {
                const auto file = rel / ("task" + std::to_string(t) + ".flab");
                io::write_checkpoint((root / file).string(), result.checkpoints[t]);
                cps.push_back(file.generic_string());
            }
            ordered_json losses = ordered_json::array();
            for (const auto& log : result.logs) {
                ordered_json task_log;
                task_log["task"] = log.task;
                for (const auto& e : log.epochs) task_log["total"].push_back(e.mean.total());
                losses.push_back(std::move(task_log));
            }
            io::write_file((root / rel / "losses.json").string(), losses.dump() + "\n");

            const auto joint = metrics::summarize(result.joint);
            bwt_by_mode[std::string(train::mode_tag(mode))].push_back(joint.bwt);
            out << train::mode_tag(mode) << " seed " << seed << ": joint MFT " << fixed(joint.mft) << " MFN "
                << fixed(joint.mfn) << " BWT " << fixed(joint.bwt) << '\n';
            runs.push_back(std::move(entry));
        }
    }
    io::write_file((root / "manifest.json").string(), manifest.dump(2) + "\n");

    ordered_json s;
    s["command"] = "train";
    s["status"] = "ok";
    s["runs"] = runs.size();
    s["out"] = config.out;
    for (const auto& [mode, values] : bwt_by_mode) {
        double sum = 0;
        for (const double v : values) sum += v;
        s["mean_joint_bwt"][mode] = sum / static_cast<double>(values.size());
    }
    return s.dump();
}

std::string run_report(const RunConfig& config, std::ostream& out) {
    const fs::path root(config.run_dir);
    ordered_json manifest;
    try {
        manifest = ordered_json::parse(io::read_file((root / "manifest.json").string()));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("manifest.json: ") + e.what());
    }

    struct Acc {
        metrics::Summary sum;
        int n = 0;
    };
    std::vector<std::string> mode_order;
    std::map<std::string, std::map<std::string, Acc>> means;  // mode -> matrix -> running sum

    auto row = [&](const std::string& mode, const std::string& seed, const std::string& matrix,
                   const metrics::Summary& s) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-8s %-5s %-8s %8.2f %8.2f %8.2f %8.2f\n", mode.c_str(), seed.c_str(),
                      matrix.c_str(), s.mft, s.mfn, s.maa, s.bwt);
        out << buf;
    };
    char header[128];
    std::snprintf(header, sizeof header, "%-8s %-5s %-8s %8s %8s %8s %8s\n", "mode", "seed", "matrix", "MFT", "MFN",
                  "MAA", "BWT");
    out << header;

    try {
        for (const auto& run : manifest.at("runs")) {
            const auto mode = run.at("mode").get<std::string>();
            const auto seed = std::to_string(run.at("seed").get<std::uint64_t>());
            if (!means.count(mode)) mode_order.push_back(mode);
            for (const auto& [matrix, rel] : run.at("matrices").items()) {
                const auto a = metrics::from_csv(io::read_file((root / rel.get<std::string>()).string()));
                const auto s = metrics::summarize(a);
                row(mode, seed, matrix, s);
                auto& acc = means[mode][matrix];
                acc.sum.mft += s.mft;
                acc.sum.mfn += s.mfn;
                acc.sum.maa += s.maa;
                acc.sum.bwt += s.bwt;
                ++acc.n;
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest.json: ") + e.what());
    }

    ordered_json s;
    s["command"] = "report";
    s["status"] = "ok";
    s["runs"] = manifest.at("runs").size();
    for (const auto& mode : mode_order) {
        for (const auto* matrix : kMatrixNames) {
            const auto found = means[mode].find(matrix);
            if (found == means[mode].end()) continue;
            const auto& acc = found->second;
            const double n = acc.n;
            const metrics::Summary m{acc.sum.mft / n, acc.sum.mfn / n, acc.sum.maa / n, acc.sum.bwt / n};
            row(mode, "mean", matrix, m);
            s["means"][mode][matrix] = summary_json(m);
        }
    }
    return s.dump();
}

std::string run_eval(const RunConfig& config, std::ostream& out) {
    const auto checkpoint = io::read_checkpoint(config.checkpoint);
    const auto model = train::model_from_checkpoint(checkpoint);
    const auto tasks = io::read_task_suite(config.tasks);

    ordered_json s;
    s["command"] = "eval";
    s["status"] = "ok";
    s["tasks_completed"] = checkpoint.tasks_completed;
    auto& list = s["tasks"] = ordered_json::array();
    double joint_sum = 0;
    for (const auto& t : tasks) {
        const auto acc = train::evaluate(model, t);
        out << t.name << ": joint " << fixed(100 * acc.joint) << " style " << fixed(100 * acc.style) << " content "
            << fixed(100 * acc.content) << '\n';
        list.push_back({{"name", t.name}, {"joint", 100 * acc.joint}, {"style", 100 * acc.style},
                        {"content", 100 * acc.content}});
        joint_sum += acc.joint;
    }
    s["mean_joint"] = tasks.empty() ? 0.0 : 100 * joint_sum / static_cast<double>(tasks.size());
    s["config"] = json::parse(to_json(config));
    return s.dump();
}

}  // namespace forgetlab::cli
