// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "forgetlab/toy_tasks.hpp"
#include "forgetlab/trainer.hpp"

namespace forgetlab::cli {

struct RewriterSettings {
    std::string kind = "template";  // "template" | "http"
    std::string endpoint;            // falls back to $FORGETLAB_REWRITER_URL
    int timeout_ms = 10000;
    int retries = 2;
};

struct AsdSettings {
    std::string input;
    std::string output;
    std::string overrides;
    double x_percent = 20.0;
    std::uint64_t seed = 0;
    bool strict = false;
    int threads = 1;
    RewriterSettings rewriter;
};

/// Everything a subcommand can be configured with. Sections not used by a
/// subcommand are carried along unchanged so the emitted config is complete.
struct RunConfig {
    AsdSettings asd;
    toy::SuiteParams suite = default_suite();
    train::TrainConfig train;
    std::vector<train::Mode> modes{train::Mode::RegLoRA};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::string tasks;       // task-suite container; empty = generate per seed
    std::string out;         // synth: file, train: directory
    std::string run_dir;     // report
    std::string checkpoint;  // eval

    /// Throws ValidationError naming the first bad field.
    void validate() const;

    [[nodiscard]] static toy::SuiteParams default_suite() {
        toy::SuiteParams p;
        p.style_mix_percent = 20.0;
        return p;
    }
};

/// Pretty-printed JSON with sections "asd", "suite", "train", plus the
/// top-level lists and paths.
[[nodiscard]] std::string to_json(const RunConfig& config);

/// Applies the keys present in `json_text` on top of `base`. Unknown keys
/// and wrong types throw ValidationError.
[[nodiscard]] RunConfig apply_config_json(std::string_view json_text, RunConfig base);
[[nodiscard]] RunConfig load_config_file(const std::string& path, RunConfig base);

/// "0,1,4" -> {0, 1, 4}. Throws ValidationError on empty or malformed lists.
[[nodiscard]] std::vector<std::uint64_t> parse_seed_list(std::string_view text);
/// "plain,reglora" -> both modes, in the given order.
[[nodiscard]] std::vector<train::Mode> parse_mode_list(std::string_view text);

}  // namespace forgetlab::cli
