// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/asd_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "forgetlab/error.hpp"
#include "forgetlab/parallel.hpp"

namespace forgetlab::asd {

namespace {

using rewrite::RewriteRequest;
using rewrite::Rewriter;

// Stream ids keep plan, balance and per-sample randomness independent.
constexpr std::uint64_t kPlanStream = 0x504c414eULL;
constexpr std::uint64_t kBalanceStream = 0x42414cULL;
constexpr std::uint64_t kSampleStream = 0x53414d50ULL;

void require_source_differs(const InstructionSample& s, QuestionFormat target) {
    if (s.format == target) {
        throw ValidationError("sample '" + s.id + "' is already in format " + std::string(qa::format_tag(target)));
    }
}

std::size_t correct_option(const InstructionSample& s) {
    const auto idx = qa::option_index(s.gt_label);
    if (!idx || *idx >= s.options.size()) {
        throw ValidationError("sample '" + s.id + "' has an invalid option letter '" + s.gt_label + "'");
    }
    return *idx;
}

/// The answer text the sample states directly (option content for MCQ).
std::string answer_text(const InstructionSample& s) {
    if (s.format == QuestionFormat::MultipleChoice) return s.options[correct_option(s)];
    return s.gt_label;
}

std::string rfp_or_override(const TaskRules& rules, QuestionFormat target, std::string_view fallback) {
    const auto it = rules.rfp_overrides.find(target);
    return it != rules.rfp_overrides.end() ? it->second : std::string(fallback);
}

InstructionSample converted(const InstructionSample& s, QuestionFormat target) {
    InstructionSample out;
    out.id = s.id;
    out.image = s.image;
    out.question = s.question;
    out.format = target;
    out.provenance = qa::Provenance::transformed(s.format, target);
    return out;
}

rewrite::RewriteResponse call(Rewriter& rewriter, const RewriteRequest& request, const InstructionSample& s) {
    auto req = request;
    req.image = s.image;
    req.context["sample_id"] = s.id;
    auto resp = rewriter.rewrite(req);
    rewrite::check_response(req, resp);
    return resp;
}

std::vector<std::string> draw_from_pool(const std::vector<std::string>& pool, const std::string& exclude,
                                        std::size_t count, Rng& rng) {
    std::vector<std::string> eligible;
    for (const auto& p : pool) {
        if (rewrite::iequals(p, exclude)) continue;
        if (std::none_of(eligible.begin(), eligible.end(), [&](const auto& e) { return rewrite::iequals(e, p); })) {
            eligible.push_back(p);
        }
    }
    if (eligible.size() < count) {
        throw RewriterError(RewriterFailure::Unavailable,
                            "distractor pool has " + std::to_string(eligible.size()) + " usable entries, need " +
                                std::to_string(count));
    }
    std::shuffle(eligible.begin(), eligible.end(), rng);
    eligible.resize(count);
    return eligible;
}

/// Answers that are wrong for `s`; source depends on the task rules.
std::vector<std::string> wrong_answers(const InstructionSample& s, const std::string& correct, std::size_t count,
                                       Rewriter& rewriter, Rng& rng, const TaskRules& rules) {
    if (rules.box_distractors) {
        const auto gt = parse_box(correct);
        if (!gt) throw RewriterError(RewriterFailure::Unavailable, "gt '" + correct + "' is not a bounding box");
        return box_distractors(*gt, count, rng);
    }
    if (!rules.distractor_pool.empty()) return draw_from_pool(rules.distractor_pool, correct, count, rng);
    if (count == 1) return call(rewriter, RewriteRequest::incorrect_answer(s.question, correct), s).texts;
    return call(rewriter, RewriteRequest::distractors(s.question, correct), s).texts;
}

std::string join_answer(std::string direct, const std::string& explanation) {
    while (!direct.empty() && std::isspace(static_cast<unsigned char>(direct.back()))) direct.pop_back();
    if (direct.empty()) return explanation;
    const char last = direct.back();
    if (last == '.' || last == '!' || last == '?') return direct + " " + explanation;
    return direct + ". " + explanation;
}

QuestionFormat parse_tag_or_throw(const std::string& tag) {
    const auto f = qa::parse_format_tag(tag);
    if (!f) throw ValidationError("unknown format tag '" + tag + "' in rule overrides");
    return *f;
}

}  // namespace

std::size_t TransformPlan::transformed() const noexcept {
    return std::accumulate(quotas.begin(), quotas.end(), std::size_t{0});
}

std::array<QuestionFormat, 4> alternative_formats(QuestionFormat source) noexcept {
    std::array<QuestionFormat, 4> out{};
    std::size_t k = 0;
    for (const auto f : qa::kAllFormats) {
        if (f != source) out[k++] = f;
    }
    return out;
}

std::size_t transform_count(std::size_t n, double x_percent) {
    const double exact = static_cast<double>(n) * x_percent / 100.0;
    // nearbyint honours the default round-to-nearest-even mode.
    return static_cast<std::size_t>(std::nearbyint(exact));
}

TransformPlan plan_partition(std::size_t n, double x_percent, QuestionFormat source, std::uint64_t seed) {
    if (!(x_percent >= 0.0 && x_percent <= 100.0)) {
        throw ValidationError("x_percent must be in [0, 100]");
    }
    TransformPlan plan;
    plan.seed = seed;
    plan.x_percent = x_percent;
    plan.source = source;
    plan.assignments.assign(n, std::nullopt);

    const auto t = transform_count(n, x_percent);
    const auto alts = alternative_formats(source);
    for (std::size_t k = 0; k < alts.size(); ++k) {
        plan.quotas[qa::format_index(alts[k])] = t / 4 + (k < t % 4 ? 1 : 0);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(seed, kPlanStream + qa::format_index(source));
    std::shuffle(order.begin(), order.end(), rng);

    std::size_t cursor = 0;
    for (const auto f : alts) {
        for (std::size_t q = 0; q < plan.quota(f); ++q) plan.assignments[order[cursor++]] = f;
    }
    return plan;
}

std::optional<BoundingBox> parse_box(std::string_view text) {
    std::string s(text);
    const auto open = s.find('[');
    const auto close = s.rfind(']');
    if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
    std::stringstream in(s.substr(open + 1, close - open - 1));
    std::array<double, 4> v{};
    for (std::size_t i = 0; i < 4; ++i) {
        std::string item;
        if (!std::getline(in, item, ',')) return std::nullopt;
        char* end = nullptr;
        v[i] = std::strtod(item.c_str(), &end);
        if (end == item.c_str()) return std::nullopt;
        while (*end != '\0') {
            if (!std::isspace(static_cast<unsigned char>(*end))) return std::nullopt;
            ++end;
        }
    }
    std::string rest;
    if (std::getline(in, rest)) return std::nullopt;
    BoundingBox b{v[0], v[1], v[2], v[3]};
    if (!(b.x2 > b.x1 && b.y2 > b.y1)) return std::nullopt;
    return b;
}

std::string format_box(const BoundingBox& b) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "[%.2f, %.2f, %.2f, %.2f]", b.x1, b.y1, b.x2, b.y2);
    return buf;
}

double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::string> box_distractors(const BoundingBox& gt, std::size_t count, Rng& rng) {
    std::vector<std::string> out;
    const auto gt_text = format_box(gt);
    const auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
    for (int attempt = 0; attempt < 10000 && out.size() < count; ++attempt) {
        double a = uniform_real(rng, 0.0, 1.0), b = uniform_real(rng, 0.0, 1.0);
        double c = uniform_real(rng, 0.0, 1.0), d = uniform_real(rng, 0.0, 1.0);
        BoundingBox box{round2(std::min(a, b)), round2(std::min(c, d)), round2(std::max(a, b)),
                        round2(std::max(c, d))};
        if (box.x2 - box.x1 < 0.05 || box.y2 - box.y1 < 0.05) continue;
        if (iou(box, gt) >= 0.5) continue;
        auto text = format_box(box);
        if (text == gt_text || std::find(out.begin(), out.end(), text) != out.end()) continue;
        out.push_back(std::move(text));
    }
    if (out.size() < count) {
        throw RewriterError(RewriterFailure::Unavailable, "could not place low-IoU distractor boxes");
    }
    return out;
}

RuleOverrides parse_rule_overrides(const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("rule overrides: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_object()) {
        throw ValidationError("rule overrides must be {\"tasks\": {...}}");
    }
    RuleOverrides out;
    for (const auto& [name, spec] : doc["tasks"].items()) {
        if (!spec.is_object()) throw ValidationError("rule overrides for '" + name + "' must be an object");
        TaskRules rules;
        for (const auto& [key, value] : spec.items()) {
            try {
                if (key == "distractor_pool") {
                    rules.distractor_pool = value.get<std::vector<std::string>>();
                } else if (key == "box_distractors") {
                    rules.box_distractors = value.get<bool>();
                } else if (key == "short_keeps_options") {
                    rules.short_keeps_options = value.get<bool>();
                } else if (key == "rfp_overrides") {
                    for (const auto& [tag, text] : value.items()) {
                        rules.rfp_overrides[parse_tag_or_throw(tag)] = text.get<std::string>();
                    }
                } else {
                    throw ValidationError("unknown key '" + key + "'");
                }
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError("rule overrides for '" + name + "', key '" + key + "': " + e.what());
            } catch (const ValidationError& e) {
                throw ValidationError("rule overrides for '" + name + "': " + e.what());
            }
        }
        out.emplace(name, std::move(rules));
    }
    return out;
}

RuleOverrides load_rule_overrides(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open rule overrides '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_rule_overrides(buf.str());
}

qa::RfpRegistry registry_for(const TaskRules& rules) {
    qa::RfpRegistry reg;
    for (const auto& [f, text] : rules.rfp_overrides) reg.allow(f, text);
    return reg;
}

InstructionSample to_yes_no(const InstructionSample& s, bool want_correct, Rewriter& rewriter, Rng& rng,
                            const TaskRules& rules) {
    require_source_differs(s, QuestionFormat::YesNo);
    const auto correct = answer_text(s);
    std::string candidate;
    if (want_correct) {
        candidate = correct;
    } else if (s.format == QuestionFormat::MultipleChoice) {
        const auto right = correct_option(s);
        std::vector<std::size_t> wrong;
        for (std::size_t i = 0; i < s.options.size(); ++i) {
            if (i != right) wrong.push_back(i);
        }
        if (wrong.empty()) throw RewriterError(RewriterFailure::Unavailable, "no incorrect option to offer");
        candidate = s.options[wrong[uniform_index(rng, wrong.size())]];
    } else {
        candidate = wrong_answers(s, correct, 1, rewriter, rng, rules).front();
    }
    auto out = converted(s, QuestionFormat::YesNo);
    out.question = s.question + "\n" + candidate;
    out.rfp = rfp_or_override(rules, QuestionFormat::YesNo, kRfpYesNo);
    out.gt_label = want_correct ? "Yes" : "No";
    return out;
}

InstructionSample to_mcq(const InstructionSample& s, Rewriter& rewriter, Rng& rng, const TaskRules& rules) {
    require_source_differs(s, QuestionFormat::MultipleChoice);
    auto out = converted(s, QuestionFormat::MultipleChoice);
    out.rfp = rfp_or_override(rules, QuestionFormat::MultipleChoice, kRfpMultipleChoice);
    if (s.format == QuestionFormat::YesNo) {
        out.options = {"Yes", "No"};
        out.gt_label = s.gt_label == "Yes" ? "A" : "B";
        return out;
    }
    const auto correct = answer_text(s);
    auto distractors = wrong_answers(s, correct, 3, rewriter, rng, rules);
    std::vector<std::string> options{correct};
    options.insert(options.end(), distractors.begin(), distractors.end());
    for (std::size_t i = 0; i < options.size(); ++i) {
        for (std::size_t j = i + 1; j < options.size(); ++j) {
            if (rewrite::iequals(options[i], options[j])) {
                throw RewriterError(RewriterFailure::ContractViolation, "options are not pairwise distinct");
            }
        }
    }
    std::shuffle(options.begin(), options.end(), rng);
    const auto pos = static_cast<std::size_t>(std::find(options.begin(), options.end(), correct) - options.begin());
    out.options = std::move(options);
    out.gt_label = qa::option_letter(pos);
    return out;
}

InstructionSample to_short(const InstructionSample& s, Rewriter& rewriter, Rng& /*rng*/, bool want_rewrite,
                           const TaskRules& rules) {
    require_source_differs(s, QuestionFormat::ShortAnswer);
    auto out = converted(s, QuestionFormat::ShortAnswer);
    out.rfp = rfp_or_override(rules, QuestionFormat::ShortAnswer, kRfpShort);
    switch (s.format) {
        case QuestionFormat::YesNo:
            if (want_rewrite) {
                const auto resp = call(rewriter, RewriteRequest::rewrite_yn_question(s.question, s.gt_label), s);
                out.question = resp.texts[0];
                out.gt_label = resp.texts[1];
            } else {
                out.gt_label = s.gt_label;
            }
            break;
        case QuestionFormat::MultipleChoice:
            out.gt_label = answer_text(s);
            if (rules.short_keeps_options) {
                out.options = s.options;
                out.rfp = std::string(kRfpShortWithOptions);
            }
            break;
        default: {
            const auto resp = call(rewriter, RewriteRequest::condense(s.question, s.gt_label, 10), s);
            out.gt_label = resp.texts.front();
            break;
        }
    }
    return out;
}

InstructionSample to_explanatory(const InstructionSample& s, QuestionFormat length_class, Rewriter& rewriter,
                                 const TaskRules& rules) {
    if (length_class != QuestionFormat::BriefExplanation && length_class != QuestionFormat::DetailedExplanation) {
        throw ValidationError("explanation target must be brief or detail");
    }
    require_source_differs(s, length_class);
    const bool direct = qa::has_direct_answer(s.format);
    const int words = target_words(length_class);
    auto out = converted(s, length_class);
    out.rfp = rfp_or_override(rules, length_class, rfp_for(length_class, direct));
    if (direct) {
        const auto answer = answer_text(s);
        const auto resp = call(rewriter, RewriteRequest::explain(s.question, answer, words), s);
        out.gt_label = join_answer(answer, resp.texts.front());
    } else {
        const auto resp = call(rewriter, RewriteRequest::reformulate(s.question, s.gt_label, words), s);
        out.gt_label = resp.texts.front();
    }
    return out;
}

std::size_t TransformLog::failures() const noexcept {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.success; }));
}

std::size_t TransformLog::succeeded(QuestionFormat target) const noexcept {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) {
        return e.success && e.target == target;
    }));
}

std::size_t TransformLog::out_of_band() const noexcept {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.in_band; }));
}

std::string TransformLog::to_json() const {
    nlohmann::ordered_json doc;
    nlohmann::ordered_json summary;
    summary["attempted"] = attempted();
    summary["failures"] = failures();
    summary["out_of_band"] = out_of_band();
    nlohmann::ordered_json per_target;
    for (const auto f : qa::kAllFormats) per_target[std::string(qa::format_tag(f))] = succeeded(f);
    summary["succeeded"] = std::move(per_target);
    doc["summary"] = std::move(summary);
    auto& list = doc["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["source"] = qa::format_tag(e.source);
        j["target"] = qa::format_tag(e.target);
        j["rewriter_calls"] = e.rewriter_calls;
        j["success"] = e.success;
        if (!e.error.empty()) j["error"] = e.error;
        if (e.gt_words) {
            j["gt_words"] = *e.gt_words;
            j["in_band"] = e.in_band;
        }
        list.push_back(std::move(j));
    }
    return doc.dump(2);
}

namespace {

class CountingRewriter final : public Rewriter {
public:
    explicit CountingRewriter(Rewriter& inner) : inner_(inner) {}
    rewrite::RewriteResponse rewrite(const RewriteRequest& request) override {
        ++calls_;
        return inner_.rewrite(request);
    }
    std::string_view name() const noexcept override { return inner_.name(); }
    int calls() const noexcept { return calls_; }

private:
    Rewriter& inner_;
    int calls_ = 0;
};

struct SampleJob {
    QuestionFormat target = QuestionFormat::ShortAnswer;
    bool want_correct = false;  // Y/N targets
    bool want_rewrite = false;  // Y/N source -> short
};

/// Splits `members` (already in input order) into a true half and a false half
/// of sizes differing by at most one, chosen by a seeded shuffle.
std::vector<bool> balanced_flags(std::size_t n, Rng& rng) {
    std::vector<bool> flags(n, false);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < (n + 1) / 2; ++k) flags[order[k]] = true;
    return flags;
}

}  // namespace

TransformResult transform_dataset(const Dataset& input, double x_percent, Rewriter& rewriter, std::uint64_t seed,
                                  const RuleOverrides& overrides, const TransformOptions& options) {
    if (!(x_percent >= 0.0 && x_percent <= 100.0)) throw ValidationError("x_percent must be in [0, 100]");
    const auto& samples = input.samples();
    const auto rules_it = overrides.find(input.name());
    const TaskRules rules = rules_it != overrides.end() ? rules_it->second : TaskRules{};

    std::vector<std::optional<SampleJob>> jobs(samples.size());
    for (const auto source : qa::kAllFormats) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (samples[i].format == source) members.push_back(i);
        }
        if (members.empty()) continue;
        const auto plan = plan_partition(members.size(), x_percent, source, seed);

        std::vector<std::size_t> yn_targets, short_targets;
        for (std::size_t k = 0; k < members.size(); ++k) {
            const auto& a = plan.assignments[k];
            if (!a) continue;
            jobs[members[k]] = SampleJob{*a};
            if (*a == QuestionFormat::YesNo) yn_targets.push_back(members[k]);
            if (*a == QuestionFormat::ShortAnswer && source == QuestionFormat::YesNo) short_targets.push_back(members[k]);
        }
        auto rng = make_rng(seed, kBalanceStream + qa::format_index(source));
        const auto correct = balanced_flags(yn_targets.size(), rng);
        for (std::size_t k = 0; k < yn_targets.size(); ++k) jobs[yn_targets[k]]->want_correct = correct[k];
        const auto rewrite_flags = balanced_flags(short_targets.size(), rng);
        for (std::size_t k = 0; k < short_targets.size(); ++k) jobs[short_targets[k]]->want_rewrite = rewrite_flags[k];
    }

    std::vector<InstructionSample> outputs(samples.begin(), samples.end());
    std::vector<std::optional<LogEntry>> entries(samples.size());
    std::vector<std::exception_ptr> errors(samples.size());
    const bool template_backend = rewriter.name() == "template";

    parallel_for(samples.size(), options.threads, [&](std::size_t i) {
        if (!jobs[i]) return;
        const auto& job = *jobs[i];
        const auto& s = samples[i];
        auto rng = make_rng(seed, kSampleStream ^ (static_cast<std::uint64_t>(i) << 8));
        CountingRewriter counted(rewriter);
        LogEntry entry;
        entry.id = s.id;
        entry.source = s.format;
        entry.target = job.target;
        try {
            InstructionSample out;
            switch (job.target) {
                case QuestionFormat::YesNo: out = to_yes_no(s, job.want_correct, counted, rng, rules); break;
                case QuestionFormat::MultipleChoice: out = to_mcq(s, counted, rng, rules); break;
                case QuestionFormat::ShortAnswer: out = to_short(s, counted, rng, job.want_rewrite, rules); break;
                default: {
                    out = to_explanatory(s, job.target, counted, rules);
                    const auto band = word_band(job.target);
                    entry.gt_words = rewrite::word_count(out.gt_label);
                    entry.in_band = *entry.gt_words >= band.lo && *entry.gt_words <= band.hi;
                    if (!entry.in_band && template_backend) {
                        throw RewriterError(RewriterFailure::ContractViolation,
                                            "template explanation has " + std::to_string(*entry.gt_words) +
                                                " words, outside [" + std::to_string(band.lo) + ", " +
                                                std::to_string(band.hi) + "]");
                    }
                    break;
                }
            }
            outputs[i] = std::move(out);
            entry.success = true;
        } catch (const RewriterError& e) {
            entry.success = false;
            entry.error = e.what();
            entry.in_band = true;
            entry.gt_words.reset();
            errors[i] = std::current_exception();
        }
        entry.rewriter_calls = counted.calls();
        entries[i] = std::move(entry);
    });

    if (options.strict) {
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    TransformResult result{Dataset(input.name()), {}};
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        result.dataset.add(std::move(outputs[i]));
        if (entries[i]) result.log.entries.push_back(std::move(*entries[i]));
    }
    return result;
}

}  // namespace forgetlab::asd
