// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/rewriter.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <sstream>

#include "forgetlab/error.hpp"
#include "forgetlab/random.hpp"

namespace forgetlab::rewrite {

namespace {

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (const char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) words.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

[[noreturn]] void violation(const std::string& what) {
    throw RewriterError(RewriterFailure::ContractViolation, what);
}

}  // namespace

std::string_view kind_tag(RewriteKind kind) noexcept {
    switch (kind) {
        case RewriteKind::IncorrectAnswer: return "incorrect_answer";
        case RewriteKind::Distractors: return "distractors";
        case RewriteKind::RewriteYNQuestion: return "rewrite_yn_question";
        case RewriteKind::Condense: return "condense";
        case RewriteKind::Explain: return "explain";
        case RewriteKind::Reformulate: return "reformulate";
    }
    return "incorrect_answer";
}

RewriteRequest RewriteRequest::incorrect_answer(std::string question, std::string gt) {
    RewriteRequest r;
    r.kind = RewriteKind::IncorrectAnswer;
    r.question = std::move(question);
    r.gt_label = std::move(gt);
    return r;
}

RewriteRequest RewriteRequest::distractors(std::string question, std::string gt) {
    auto r = incorrect_answer(std::move(question), std::move(gt));
    r.kind = RewriteKind::Distractors;
    return r;
}

RewriteRequest RewriteRequest::rewrite_yn_question(std::string question, std::string gt) {
    auto r = incorrect_answer(std::move(question), std::move(gt));
    r.kind = RewriteKind::RewriteYNQuestion;
    return r;
}

RewriteRequest RewriteRequest::condense(std::string question, std::string gt, int max_words) {
    auto r = incorrect_answer(std::move(question), std::move(gt));
    r.kind = RewriteKind::Condense;
    r.max_words = max_words;
    return r;
}

RewriteRequest RewriteRequest::explain(std::string question, std::string gt, int target_words) {
    auto r = incorrect_answer(std::move(question), std::move(gt));
    r.kind = RewriteKind::Explain;
    r.target_words = target_words;
    return r;
}

RewriteRequest RewriteRequest::reformulate(std::string question, std::string gt, int target_words) {
    auto r = explain(std::move(question), std::move(gt), target_words);
    r.kind = RewriteKind::Reformulate;
    return r;
}

std::size_t expected_arity(RewriteKind kind) noexcept {
    switch (kind) {
        case RewriteKind::Distractors: return 3;
        case RewriteKind::RewriteYNQuestion: return 2;
        default: return 1;
    }
}

void check_request(const RewriteRequest& request) {
    if (request.kind == RewriteKind::Distractors && request.count != 3) {
        throw ValidationError("distractor requests must ask for exactly 3 options");
    }
    if ((request.kind == RewriteKind::Explain || request.kind == RewriteKind::Reformulate) &&
        request.target_words != 20 && request.target_words != 50) {
        throw ValidationError("target_words must be 20 or 50");
    }
    if (request.kind == RewriteKind::Condense && request.max_words < 1) {
        throw ValidationError("max_words must be positive");
    }
}

void check_response(const RewriteRequest& request, const RewriteResponse& response) {
    const auto arity = expected_arity(request.kind);
    if (response.texts.size() != arity) {
        violation(std::string(kind_tag(request.kind)) + " expects " + std::to_string(arity) +
                  " text(s), got " + std::to_string(response.texts.size()));
    }
    for (const auto& t : response.texts) {
        if (word_count(t) == 0) violation(std::string(kind_tag(request.kind)) + " returned an empty text");
    }
    switch (request.kind) {
        case RewriteKind::Distractors:
            for (std::size_t i = 0; i < response.texts.size(); ++i) {
                if (iequals(response.texts[i], request.gt_label)) {
                    violation("distractor '" + response.texts[i] + "' equals the ground truth");
                }
                for (std::size_t j = i + 1; j < response.texts.size(); ++j) {
                    if (iequals(response.texts[i], response.texts[j])) {
                        violation("duplicate distractor '" + response.texts[i] + "'");
                    }
                }
            }
            break;
        case RewriteKind::IncorrectAnswer:
            if (iequals(response.texts.front(), request.gt_label)) {
                violation("incorrect answer equals the ground truth");
            }
            break;
        case RewriteKind::RewriteYNQuestion:
            if (iequals(response.texts[1], "yes") || iequals(response.texts[1], "no")) {
                violation("rewritten question must not have a yes/no answer");
            }
            break;
        case RewriteKind::Condense:
            if (word_count(response.texts.front()) > static_cast<std::size_t>(request.max_words)) {
                violation("condensed answer exceeds " + std::to_string(request.max_words) + " words");
            }
            break;
        default:
            break;
    }
}

std::size_t word_count(std::string_view text) noexcept {
    std::size_t n = 0;
    bool in_word = false;
    for (const char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

bool iequals(std::string_view a, std::string_view b) noexcept {
    return std::equal(a.begin(), a.end(), b.begin(), b.end(), [](char x, char y) {
        return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
    });
}

std::string pad_to_words(std::string_view seed_text, std::size_t n) {
    auto words = split_words(seed_text);
    const auto filler = split_words(TemplateRewriter::kFiller);
    for (std::size_t i = 0; words.size() < n; ++i) words.push_back(filler[i % filler.size()]);
    words.resize(n);
    if (!words.empty()) {
        auto& last = words.back();
        while (!last.empty() && std::ispunct(static_cast<unsigned char>(last.back()))) last.pop_back();
        if (last.empty()) last = "it";
        last += '.';
    }
    return join_words(words);
}

TemplateRewriter::TemplateRewriter(std::vector<std::string> pool, std::uint64_t pool_seed)
    : pool_(std::move(pool)), pool_seed_(pool_seed) {}

std::vector<std::string> TemplateRewriter::pick(const RewriteRequest& request, std::size_t n,
                                                bool skip_yes_no) const {
    std::vector<std::string> out;
    if (pool_.empty()) return out;
    std::size_t offset = 0;
    if (pool_seed_ != 0) {
        const auto h = std::hash<std::string>{}(request.question + '\x1f' + request.gt_label);
        offset = static_cast<std::size_t>(mix_seed(pool_seed_, h) % pool_.size());
    }
    for (std::size_t i = 0; i < pool_.size() && out.size() < n; ++i) {
        const auto& candidate = pool_[(offset + i) % pool_.size()];
        if (word_count(candidate) == 0 || iequals(candidate, request.gt_label)) continue;
        if (skip_yes_no && (iequals(candidate, "yes") || iequals(candidate, "no"))) continue;
        const bool dup = std::any_of(out.begin(), out.end(), [&](const auto& o) { return iequals(o, candidate); });
        if (!dup) out.push_back(candidate);
    }
    return out;
}

RewriteResponse TemplateRewriter::rewrite(const RewriteRequest& request) {
    check_request(request);
    RewriteResponse resp;
    switch (request.kind) {
        case RewriteKind::IncorrectAnswer: {
            resp.texts = pick(request, 1, false);
            break;
        }
        case RewriteKind::Distractors: {
            resp.texts = pick(request, static_cast<std::size_t>(request.count), false);
            break;
        }
        case RewriteKind::RewriteYNQuestion: {
            auto answer = pick(request, 1, true);
            if (answer.empty()) break;
            std::string_view q = request.question;
            while (!q.empty() && (q.back() == '?' || std::isspace(static_cast<unsigned char>(q.back())))) {
                q.remove_suffix(1);
            }
            resp.texts = {"What is the answer to: " + std::string(q) + "?", answer.front()};
            break;
        }
        case RewriteKind::Condense: {
            auto words = split_words(request.gt_label);
            if (words.size() > static_cast<std::size_t>(request.max_words)) {
                words.resize(static_cast<std::size_t>(request.max_words));
            }
            resp.texts = {join_words(words)};
            break;
        }
        case RewriteKind::Explain:
            resp.texts = {pad_to_words({}, static_cast<std::size_t>(request.target_words))};
            break;
        case RewriteKind::Reformulate:
            resp.texts = {pad_to_words(request.gt_label, static_cast<std::size_t>(request.target_words))};
            break;
    }
    if (resp.texts.size() != expected_arity(request.kind)) {
        throw RewriterError(RewriterFailure::Unavailable,
                            "template pool cannot satisfy " + std::string(kind_tag(request.kind)) +
                                " for gt '" + request.gt_label + "'");
    }
    check_response(request, resp);
    return resp;
}

}  // namespace forgetlab::rewrite
