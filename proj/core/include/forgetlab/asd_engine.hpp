// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "forgetlab/qa_format.hpp"
#include "forgetlab/random.hpp"
#include "forgetlab/rewriter.hpp"
#include "forgetlab/rfp.hpp"

namespace forgetlab::asd {

using qa::Dataset;
using qa::InstructionSample;
using qa::QuestionFormat;

/// nullopt means the sample keeps its source format.
using Assignment = std::optional<QuestionFormat>;

struct TransformPlan {
    std::uint64_t seed = 0;
    double x_percent = 0.0;
    QuestionFormat source = QuestionFormat::ShortAnswer;
    std::vector<Assignment> assignments;
    std::array<std::size_t, qa::kAllFormats.size()> quotas{};  // per target format; source slot stays 0

    [[nodiscard]] std::size_t size() const noexcept { return assignments.size(); }
    [[nodiscard]] std::size_t transformed() const noexcept;
    [[nodiscard]] std::size_t retained() const noexcept { return size() - transformed(); }
    [[nodiscard]] std::size_t quota(QuestionFormat f) const noexcept { return quotas[qa::format_index(f)]; }
};

/// The four formats other than `source`, in canonical order. Remainders of
/// the equal split go to the front of this list.
[[nodiscard]] std::array<QuestionFormat, 4> alternative_formats(QuestionFormat source) noexcept;

/// Number of samples to transform: n * x / 100 rounded to nearest, ties to even.
[[nodiscard]] std::size_t transform_count(std::size_t n, double x_percent);

/// Splits round(n*X/100) samples equally over the four alternative formats
/// and retains the rest. Which indices move is a seeded shuffle.
[[nodiscard]] TransformPlan plan_partition(std::size_t n, double x_percent, QuestionFormat source,
                                           std::uint64_t seed);

struct BoundingBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

[[nodiscard]] std::optional<BoundingBox> parse_box(std::string_view text);
[[nodiscard]] std::string format_box(const BoundingBox& box);
[[nodiscard]] double iou(const BoundingBox& a, const BoundingBox& b) noexcept;

/// `count` distinct boxes inside [0,1]^2, each with IoU < 0.5 against `gt`.
[[nodiscard]] std::vector<std::string> box_distractors(const BoundingBox& gt, std::size_t count, Rng& rng);

/// Task-specific adjustments to the general conversion rules.
struct TaskRules {
    /// Closed answer space: Y/N and MCQ distractors are drawn from this list
    /// instead of the rewriter.
    std::vector<std::string> distractor_pool;
    /// GT labels are "[x1, y1, x2, y2]" boxes; distractors are random boxes.
    bool box_distractors = false;
    /// MCQ -> short keeps the options, rendered "a, b, or c", with the
    /// "Directly give the answer." prompt.
    bool short_keeps_options = false;
    /// Replaces the catalog prompt for a target format.
    std::map<QuestionFormat, std::string> rfp_overrides;
};

using RuleOverrides = std::map<std::string, TaskRules>;

/// Reads `{"tasks": {"<name>": {...}}}`; keys per task: distractor_pool,
/// box_distractors, short_keeps_options, rfp_overrides (format tag -> text).
[[nodiscard]] RuleOverrides load_rule_overrides(const std::string& path);
[[nodiscard]] RuleOverrides parse_rule_overrides(const std::string& json_text);

/// Registry accepting the rule set's override prompts.
[[nodiscard]] qa::RfpRegistry registry_for(const TaskRules& rules);

[[nodiscard]] InstructionSample to_yes_no(const InstructionSample& sample, bool want_correct,
                                          rewrite::Rewriter& rewriter, Rng& rng, const TaskRules& rules = {});
[[nodiscard]] InstructionSample to_mcq(const InstructionSample& sample, rewrite::Rewriter& rewriter, Rng& rng,
                                       const TaskRules& rules = {});
[[nodiscard]] InstructionSample to_short(const InstructionSample& sample, rewrite::Rewriter& rewriter, Rng& rng,
                                         bool want_rewrite, const TaskRules& rules = {});
/// `length_class` is BriefExplanation (about 20 words) or
/// DetailedExplanation (about 50 words).
[[nodiscard]] InstructionSample to_explanatory(const InstructionSample& sample, QuestionFormat length_class,
                                               rewrite::Rewriter& rewriter, const TaskRules& rules = {});

[[nodiscard]] constexpr int target_words(QuestionFormat length_class) noexcept {
    return length_class == QuestionFormat::DetailedExplanation ? 50 : 20;
}

struct WordBand {
    std::size_t lo;
    std::size_t hi;
};

/// Accepted GT length for explanation targets: [10,35] brief, [30,75] detail.
[[nodiscard]] constexpr WordBand word_band(QuestionFormat length_class) noexcept {
    return length_class == QuestionFormat::DetailedExplanation ? WordBand{30, 75} : WordBand{10, 35};
}

struct LogEntry {
    std::string id;
    QuestionFormat source = QuestionFormat::ShortAnswer;
    QuestionFormat target = QuestionFormat::ShortAnswer;
    int rewriter_calls = 0;
    bool success = false;
    std::string error;
    /// GT word count for explanation targets and whether it lies in the band.
    std::optional<std::size_t> gt_words;
    bool in_band = true;
};

struct TransformLog {
    std::vector<LogEntry> entries;  // one per non-retained planned sample, input order

    [[nodiscard]] std::size_t attempted() const noexcept { return entries.size(); }
    [[nodiscard]] std::size_t failures() const noexcept;
    [[nodiscard]] std::size_t succeeded(QuestionFormat target) const noexcept;
    [[nodiscard]] std::size_t out_of_band() const noexcept;
    [[nodiscard]] std::string to_json() const;
};

struct TransformOptions {
    bool strict = false;   // rethrow the first rewriter failure instead of retaining
    std::size_t threads = 1;  // 0 = hardware concurrency
};

struct TransformResult {
    Dataset dataset;
    TransformLog log;
};

/// Applies the ASD paradigm to every source format present in `input`.
/// Output order and size equal the input's. Per-sample rewriter failures fall
/// back to the original sample and are logged; in strict mode the first one
/// (by input order) is rethrown.
[[nodiscard]] TransformResult transform_dataset(const Dataset& input, double x_percent,
                                                rewrite::Rewriter& rewriter, std::uint64_t seed,
                                                const RuleOverrides& overrides = {},
                                                const TransformOptions& options = {});

}  // namespace forgetlab::asd
