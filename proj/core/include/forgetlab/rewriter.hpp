// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace forgetlab::rewrite {

enum class RewriteKind {
    IncorrectAnswer,
    Distractors,
    RewriteYNQuestion,
    Condense,
    Explain,
    Reformulate,
};

[[nodiscard]] std::string_view kind_tag(RewriteKind kind) noexcept;

struct RewriteRequest {
    RewriteKind kind = RewriteKind::IncorrectAnswer;
    int count = 3;          // Distractors
    int max_words = 10;     // Condense
    int target_words = 20;  // Explain, Reformulate
    std::string question;
    std::string gt_label;
    std::string image;
    std::map<std::string, std::string> context;

    [[nodiscard]] static RewriteRequest incorrect_answer(std::string question, std::string gt);
    [[nodiscard]] static RewriteRequest distractors(std::string question, std::string gt);
    [[nodiscard]] static RewriteRequest rewrite_yn_question(std::string question, std::string gt);
    [[nodiscard]] static RewriteRequest condense(std::string question, std::string gt, int max_words = 10);
    [[nodiscard]] static RewriteRequest explain(std::string question, std::string gt, int target_words);
    [[nodiscard]] static RewriteRequest reformulate(std::string question, std::string gt, int target_words);
};

struct RewriteResponse {
    std::vector<std::string> texts;

    friend bool operator==(const RewriteResponse&, const RewriteResponse&) = default;
};

/// Number of texts a response of this kind must carry.
[[nodiscard]] std::size_t expected_arity(RewriteKind kind) noexcept;

/// Throws ValidationError unless count == 3 and target_words is 20 or 50.
void check_request(const RewriteRequest& request);

/// Throws RewriterError(ContractViolation) when a response breaks the arity
/// or distinctness contract of its request. Distractors must be pairwise
/// distinct and differ from gt_label (ASCII case-insensitive); condensed
/// answers must fit in max_words.
void check_response(const RewriteRequest& request, const RewriteResponse& response);

[[nodiscard]] std::size_t word_count(std::string_view text) noexcept;
[[nodiscard]] bool iequals(std::string_view a, std::string_view b) noexcept;

/// Answer-rewriting backend. Implementations must be safe to call
/// concurrently.
class Rewriter {
public:
    virtual ~Rewriter() = default;
    /// Returns a response that satisfies check_response, or throws RewriterError.
    [[nodiscard]] virtual RewriteResponse rewrite(const RewriteRequest& request) = 0;
    [[nodiscard]] virtual std::string_view name() const noexcept = 0;
};

/// Deterministic rule-based backend drawing replacement answers from a pool.
///
/// With pool_seed 0 the pool is scanned from its first entry; any other seed
/// starts the scan at an offset hashed from (seed, question, gt_label).
class TemplateRewriter final : public Rewriter {
public:
    explicit TemplateRewriter(std::vector<std::string> pool, std::uint64_t pool_seed = 0);

    [[nodiscard]] RewriteResponse rewrite(const RewriteRequest& request) override;
    [[nodiscard]] std::string_view name() const noexcept override { return "template"; }

    [[nodiscard]] const std::vector<std::string>& pool() const noexcept { return pool_; }

    /// Words cycled by Explain and used to pad Reformulate.
    static constexpr std::string_view kFiller =
        "The image shows details that support this answer because the relevant object and its "
        "attributes are clearly visible in the scene.";

private:
    [[nodiscard]] std::vector<std::string> pick(const RewriteRequest& request, std::size_t n,
                                                bool skip_yes_no) const;

    std::vector<std::string> pool_;
    std::uint64_t pool_seed_;
};

/// Exactly `n` words: the words of `seed_text` followed by cycled filler, with
/// a closing period.
[[nodiscard]] std::string pad_to_words(std::string_view seed_text, std::size_t n);

}  // namespace forgetlab::rewrite
