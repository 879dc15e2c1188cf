// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/rfp.hpp"

namespace forgetlab::asd {

bool is_catalog_rfp(qa::QuestionFormat f, std::string_view rfp) noexcept {
    using qa::QuestionFormat;
    switch (f) {
        case QuestionFormat::YesNo: return rfp == kRfpYesNo;
        case QuestionFormat::MultipleChoice: return rfp == kRfpMultipleChoice;
        case QuestionFormat::ShortAnswer: return rfp == kRfpShort || rfp == kRfpShortWithOptions;
        case QuestionFormat::BriefExplanation:
            return rfp == kRfpBriefDirect || rfp == kRfpBriefDescriptive;
        case QuestionFormat::DetailedExplanation:
            return rfp == kRfpDetailDirect || rfp == kRfpDetailDescriptive;
    }
    return false;
}

}  // namespace forgetlab::asd
