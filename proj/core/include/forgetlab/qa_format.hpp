// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace forgetlab::qa {

enum class QuestionFormat {
    YesNo,
    MultipleChoice,
    ShortAnswer,
    BriefExplanation,
    DetailedExplanation,
};

inline constexpr std::array<QuestionFormat, 5> kAllFormats = {
    QuestionFormat::YesNo,
    QuestionFormat::MultipleChoice,
    QuestionFormat::ShortAnswer,
    QuestionFormat::BriefExplanation,
    QuestionFormat::DetailedExplanation,
};

[[nodiscard]] constexpr std::size_t format_index(QuestionFormat f) noexcept {
    return static_cast<std::size_t>(f);
}

/// Wire tag used in dataset files: yes_no, mcq, short, brief, detail.
[[nodiscard]] std::string_view format_tag(QuestionFormat f) noexcept;
[[nodiscard]] std::optional<QuestionFormat> parse_format_tag(std::string_view tag) noexcept;

/// Yes/No, multiple-choice and short answers are direct answers; the two
/// explanation formats are not.
[[nodiscard]] constexpr bool has_direct_answer(QuestionFormat f) noexcept {
    return f == QuestionFormat::YesNo || f == QuestionFormat::MultipleChoice ||
           f == QuestionFormat::ShortAnswer;
}

struct Provenance {
    enum class Kind { Original, Transformed };

    Kind kind = Kind::Original;
    QuestionFormat source = QuestionFormat::YesNo;
    QuestionFormat target = QuestionFormat::YesNo;

    [[nodiscard]] static Provenance original() noexcept { return {}; }
    [[nodiscard]] static Provenance transformed(QuestionFormat from, QuestionFormat to) noexcept {
        return {Kind::Transformed, from, to};
    }
    [[nodiscard]] bool is_transformed() const noexcept { return kind == Kind::Transformed; }

    friend bool operator==(const Provenance& a, const Provenance& b) noexcept {
        if (a.kind != b.kind) return false;
        return a.kind == Kind::Original || (a.source == b.source && a.target == b.target);
    }
};

struct InstructionSample {
    std::string id;
    std::string image;
    std::string question;
    std::string rfp;
    std::vector<std::string> options;
    std::string gt_label;
    QuestionFormat format = QuestionFormat::ShortAnswer;
    Provenance provenance;

    friend bool operator==(const InstructionSample&, const InstructionSample&) = default;
};

/// Letter for a zero-based option index: 0 -> "A".
[[nodiscard]] std::string option_letter(std::size_t index);
/// Zero-based index for an option letter, if it is a single letter A..Z.
[[nodiscard]] std::optional<std::size_t> option_index(std::string_view letter) noexcept;

/// Extra response-format prompts accepted per format on top of the built-in
/// catalog (task-specific overrides).
class RfpRegistry {
public:
    void allow(QuestionFormat f, std::string rfp);
    [[nodiscard]] bool accepts(QuestionFormat f, const std::string& rfp) const;

private:
    std::map<QuestionFormat, std::vector<std::string>> extra_;
};

/// Violations of the sample invariants; empty means valid.
[[nodiscard]] std::vector<std::string> validate_sample(const InstructionSample& sample,
                                                       const RfpRegistry& registry = {});

/// Segments joined with a single newline: question, option list, RFP.
/// Multiple-choice options render as "A. text"; a short-answer option list
/// renders as "a, b, or c".
[[nodiscard]] std::string render_instruction(const InstructionSample& sample);

using FormatHistogram = std::array<std::size_t, kAllFormats.size()>;

class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::string name) : name_(std::move(name)) {}

    /// Appends a sample; throws ValidationError on a duplicate id.
    void add(InstructionSample sample);

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }
    [[nodiscard]] const std::vector<InstructionSample>& samples() const noexcept { return samples_; }
    [[nodiscard]] std::size_t size() const noexcept { return samples_.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples_.empty(); }
    [[nodiscard]] const FormatHistogram& histogram() const noexcept { return histogram_; }
    [[nodiscard]] std::size_t count(QuestionFormat f) const noexcept {
        return histogram_[format_index(f)];
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.name_ == b.name_ && a.samples_ == b.samples_;
    }

private:
    std::string name_;
    std::vector<InstructionSample> samples_;
    std::unordered_set<std::string> ids_;
    FormatHistogram histogram_{};
};

/// Parses JSONL text, one sample object per line. Blank lines are skipped.
/// Throws ValidationError naming the line and field on malformed records,
/// duplicate ids, or invariant violations.
[[nodiscard]] Dataset parse_dataset(std::string_view text, std::string name = {},
                                    const RfpRegistry& registry = {});

[[nodiscard]] std::string serialize_sample(const InstructionSample& sample);
[[nodiscard]] std::string serialize_dataset(const Dataset& dataset);

[[nodiscard]] Dataset load_dataset(const std::string& path, const RfpRegistry& registry = {});
void save_dataset(const Dataset& dataset, const std::string& path);

}  // namespace forgetlab::qa
