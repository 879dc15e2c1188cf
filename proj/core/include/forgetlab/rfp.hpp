// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

#include "forgetlab/qa_format.hpp"

namespace forgetlab::asd {

inline constexpr std::string_view kRfpYesNo = "Is the answer correct? Answer 'Yes' or 'No'.";
inline constexpr std::string_view kRfpMultipleChoice =
    "Answer with the option's letter from the given choices directly.";
inline constexpr std::string_view kRfpShort = "Answer the question using a single word or phrase.";
inline constexpr std::string_view kRfpBriefDirect =
    "Answer the question and provide a brief explanation.";
inline constexpr std::string_view kRfpBriefDescriptive =
    "Answer the question using a brief explanation/description.";
inline constexpr std::string_view kRfpDetailDirect =
    "Answer the question and provide a detailed explanation.";
inline constexpr std::string_view kRfpDetailDescriptive =
    "Answer the question using a detailed explanation/description.";

/// Used instead of kRfpShort when a short-answer conversion keeps the option
/// list as "a, b, or c".
inline constexpr std::string_view kRfpShortWithOptions = "Directly give the answer.";

/// Response format prompt for a conversion into `target`. Only the two
/// explanation formats depend on whether the source had a direct answer.
[[nodiscard]] constexpr std::string_view rfp_for(qa::QuestionFormat target,
                                                 bool source_has_direct_answer) noexcept {
    using qa::QuestionFormat;
    switch (target) {
        case QuestionFormat::YesNo: return kRfpYesNo;
        case QuestionFormat::MultipleChoice: return kRfpMultipleChoice;
        case QuestionFormat::ShortAnswer: return kRfpShort;
        case QuestionFormat::BriefExplanation:
            return source_has_direct_answer ? kRfpBriefDirect : kRfpBriefDescriptive;
        case QuestionFormat::DetailedExplanation:
            return source_has_direct_answer ? kRfpDetailDirect : kRfpDetailDescriptive;
    }
    return kRfpShort;
}

/// True if `rfp` is a built-in prompt for samples in format `f`.
[[nodiscard]] bool is_catalog_rfp(qa::QuestionFormat f, std::string_view rfp) noexcept;

}  // namespace forgetlab::asd
