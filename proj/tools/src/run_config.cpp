// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/cli/run_config.hpp"

#include <charconv>

#include <json.hpp>

#include "forgetlab/checkpoint.hpp"
#include "forgetlab/error.hpp"

namespace forgetlab::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <typename T>
void read_key(const json& obj, const std::string& section, const std::string& key, T& into) {
    try {
        into = obj.get<T>();
    } catch (const json::exception& e) {
        throw ValidationError("config key '" + section + "." + key + "': " + e.what());
    }
}

void apply_rewriter(const json& j, RewriterSettings& r) {
    if (!j.is_object()) throw ValidationError("config section 'asd.rewriter' must be an object");
    for (const auto& [key, v] : j.items()) {
        if (key == "kind") read_key(v, "asd.rewriter", key, r.kind);
        else if (key == "endpoint") read_key(v, "asd.rewriter", key, r.endpoint);
        else if (key == "timeout_ms") read_key(v, "asd.rewriter", key, r.timeout_ms);
        else if (key == "retries") read_key(v, "asd.rewriter", key, r.retries);
        else throw ValidationError("unknown config key 'asd.rewriter." + key + "'");
    }
}

void apply_asd(const json& j, AsdSettings& a) {
    if (!j.is_object()) throw ValidationError("config section 'asd' must be an object");
    for (const auto& [key, v] : j.items()) {
        if (key == "input") read_key(v, "asd", key, a.input);
        else if (key == "output") read_key(v, "asd", key, a.output);
        else if (key == "overrides") read_key(v, "asd", key, a.overrides);
        else if (key == "x") read_key(v, "asd", key, a.x_percent);
        else if (key == "seed") read_key(v, "asd", key, a.seed);
        else if (key == "strict") read_key(v, "asd", key, a.strict);
        else if (key == "threads") read_key(v, "asd", key, a.threads);
        else if (key == "rewriter") apply_rewriter(v, a.rewriter);
        else throw ValidationError("unknown config key 'asd." + key + "'");
    }
}

void apply_suite(const json& j, toy::SuiteParams& s) {
    if (!j.is_object()) throw ValidationError("config section 'suite' must be an object");
    for (const auto& [key, v] : j.items()) {
        if (key == "n_tasks") read_key(v, "suite", key, s.n_tasks);
        else if (key == "samples_per_task") read_key(v, "suite", key, s.samples_per_task);
        else if (key == "d_in") read_key(v, "suite", key, s.d_in);
        else if (key == "content_classes") read_key(v, "suite", key, s.content_classes);
        else if (key == "mix") read_key(v, "suite", key, s.style_mix_percent);
        else if (key == "seed") read_key(v, "suite", key, s.seed);
        else if (key == "background_noise") read_key(v, "suite", key, s.background_noise);
        else throw ValidationError("unknown config key 'suite." + key + "'");
    }
}

}  // namespace

void RunConfig::validate() const {
    if (!(asd.x_percent >= 0.0 && asd.x_percent <= 100.0)) {
        throw ValidationError("x must be in [0, 100], got " + std::to_string(asd.x_percent));
    }
    if (asd.rewriter.kind != "template" && asd.rewriter.kind != "http") {
        throw ValidationError("rewriter must be 'template' or 'http', got '" + asd.rewriter.kind + "'");
    }
    if (asd.rewriter.timeout_ms <= 0) throw ValidationError("timeout-ms must be positive");
    if (asd.rewriter.retries < 0 || asd.rewriter.retries > 5) throw ValidationError("retries must be in [0, 5]");
    if (asd.threads < 0) throw ValidationError("threads must be >= 0");
    suite.validate();
    train.validate();
    if (modes.empty()) throw ValidationError("at least one mode is required");
    if (seeds.empty()) throw ValidationError("at least one seed is required");
}

std::string to_json(const RunConfig& c) {
    ordered_json j;
    auto& a = j["asd"];
    a["input"] = c.asd.input;
    a["output"] = c.asd.output;
    a["overrides"] = c.asd.overrides;
    a["x"] = c.asd.x_percent;
    a["seed"] = c.asd.seed;
    a["strict"] = c.asd.strict;
    a["threads"] = c.asd.threads;
    a["rewriter"] = {{"kind", c.asd.rewriter.kind},
                     {"endpoint", c.asd.rewriter.endpoint},
                     {"timeout_ms", c.asd.rewriter.timeout_ms},
                     {"retries", c.asd.rewriter.retries}};
    auto& s = j["suite"];
    s["n_tasks"] = c.suite.n_tasks;
    s["samples_per_task"] = c.suite.samples_per_task;
    s["d_in"] = c.suite.d_in;
    s["content_classes"] = c.suite.content_classes;
    s["mix"] = c.suite.style_mix_percent;
    s["seed"] = c.suite.seed;
    s["background_noise"] = c.suite.background_noise;
    j["train"] = ordered_json::parse(io::train_config_json(c.train));
    auto& modes = j["modes"] = ordered_json::array();
    for (const auto m : c.modes) modes.push_back(train::mode_tag(m));
    j["seeds"] = c.seeds;
    j["tasks"] = c.tasks;
    j["out"] = c.out;
    j["run"] = c.run_dir;
    j["checkpoint"] = c.checkpoint;
    return j.dump(2);
}

RunConfig apply_config_json(std::string_view json_text, RunConfig c) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config file: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("config file must hold a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "asd") apply_asd(v, c.asd);
        else if (key == "suite") apply_suite(v, c.suite);
        else if (key == "train") c.train = io::parse_train_config_json(v.dump(), c.train);
        else if (key == "modes") {
            std::vector<std::string> tags;
            read_key(v, "", key, tags);
            c.modes.clear();
            for (const auto& t : tags) c.modes.push_back(train::parse_mode(t));
        } else if (key == "seeds") read_key(v, "", key, c.seeds);
        else if (key == "tasks") read_key(v, "", key, c.tasks);
        else if (key == "out") read_key(v, "", key, c.out);
        else if (key == "run") read_key(v, "", key, c.run_dir);
        else if (key == "checkpoint") read_key(v, "", key, c.checkpoint);
        else throw ValidationError("unknown config key '" + key + "'");
    }
    return c;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    return apply_config_json(io::read_file(path), std::move(base));
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
    std::vector<std::uint64_t> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = std::min(text.find(',', pos), text.size());
        const auto item = text.substr(pos, comma - pos);
        std::uint64_t v = 0;
        const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc{} || end != item.data() + item.size()) {
            throw ValidationError("bad seed list '" + std::string(text) + "'");
        }
        out.push_back(v);
        pos = comma + 1;
    }
    return out;
}

std::vector<train::Mode> parse_mode_list(std::string_view text) {
    std::vector<train::Mode> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto comma = std::min(text.find(',', pos), text.size());
        out.push_back(train::parse_mode(text.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

}  // namespace forgetlab::cli
