// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/qa_format.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "forgetlab/error.hpp"
#include "forgetlab/rfp.hpp"

namespace forgetlab::qa {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::array<std::string_view, 8> kFieldNames = {
    "id", "image", "question", "rfp", "options", "gt_label", "format", "provenance",
};

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

[[noreturn]] void field_error(std::size_t line, std::string_view field, const std::string& why) {
    throw ValidationError(line_prefix(line) + "field '" + std::string(field) + "': " + why);
}

std::string read_string(const nlohmann::json& obj, std::string_view field, std::size_t line) {
    const auto it = obj.find(field);
    if (it == obj.end()) field_error(line, field, "missing");
    if (!it->is_string()) field_error(line, field, "expected string");
    return it->get<std::string>();
}

QuestionFormat read_format(const nlohmann::json& value, std::string_view field, std::size_t line) {
    if (!value.is_string()) field_error(line, field, "expected format tag string");
    const auto tag = value.get<std::string>();
    const auto f = parse_format_tag(tag);
    if (!f) field_error(line, field, "unknown format tag '" + tag + "'");
    return *f;
}

Provenance read_provenance(const nlohmann::json& obj, std::size_t line) {
    const auto it = obj.find("provenance");
    if (it == obj.end()) field_error(line, "provenance", "missing");
    if (!it->is_object()) field_error(line, "provenance", "expected object");
    const auto& p = *it;
    const auto kind = p.find("kind");
    if (kind == p.end() || !kind->is_string()) field_error(line, "provenance.kind", "expected string");
    const auto k = kind->get<std::string>();
    if (k == "original") {
        if (p.size() != 1) field_error(line, "provenance", "original provenance takes no other keys");
        return Provenance::original();
    }
    if (k == "transformed") {
        for (const auto& [key, _] : p.items()) {
            if (key != "kind" && key != "source" && key != "target") {
                field_error(line, "provenance." + key, "unknown field");
            }
        }
        const auto src = p.find("source");
        const auto dst = p.find("target");
        if (src == p.end()) field_error(line, "provenance.source", "missing");
        if (dst == p.end()) field_error(line, "provenance.target", "missing");
        return Provenance::transformed(read_format(*src, "provenance.source", line),
                                       read_format(*dst, "provenance.target", line));
    }
    field_error(line, "provenance.kind", "expected 'original' or 'transformed'");
}

InstructionSample parse_record(std::string_view text, std::size_t line) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(line_prefix(line) + "malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw ValidationError(line_prefix(line) + "record must be a JSON object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(kFieldNames.begin(), kFieldNames.end(), key) == kFieldNames.end()) {
            field_error(line, key, "unknown field");
        }
    }

    InstructionSample s;
    s.id = read_string(obj, "id", line);
    s.image = read_string(obj, "image", line);
    s.question = read_string(obj, "question", line);
    s.rfp = read_string(obj, "rfp", line);
    s.gt_label = read_string(obj, "gt_label", line);

    const auto opts = obj.find("options");
    if (opts == obj.end()) field_error(line, "options", "missing");
    if (!opts->is_array()) field_error(line, "options", "expected array of strings");
    for (const auto& o : *opts) {
        if (!o.is_string()) field_error(line, "options", "expected array of strings");
        s.options.push_back(o.get<std::string>());
    }

    const auto fmt = obj.find("format");
    if (fmt == obj.end()) field_error(line, "format", "missing");
    s.format = read_format(*fmt, "format", line);
    s.provenance = read_provenance(obj, line);
    return s;
}

}  // namespace

std::string_view format_tag(QuestionFormat f) noexcept {
    switch (f) {
        case QuestionFormat::YesNo: return "yes_no";
        case QuestionFormat::MultipleChoice: return "mcq";
        case QuestionFormat::ShortAnswer: return "short";
        case QuestionFormat::BriefExplanation: return "brief";
        case QuestionFormat::DetailedExplanation: return "detail";
    }
    return "short";
}

std::optional<QuestionFormat> parse_format_tag(std::string_view tag) noexcept {
    for (const auto f : kAllFormats) {
        if (format_tag(f) == tag) return f;
    }
    return std::nullopt;
}

std::string option_letter(std::size_t index) {
    if (index >= 26) throw ValidationError("option index " + std::to_string(index) + " has no letter");
    return std::string(1, static_cast<char>('A' + index));
}

std::optional<std::size_t> option_index(std::string_view letter) noexcept {
    if (letter.size() != 1 || letter[0] < 'A' || letter[0] > 'Z') return std::nullopt;
    return static_cast<std::size_t>(letter[0] - 'A');
}

void RfpRegistry::allow(QuestionFormat f, std::string rfp) { extra_[f].push_back(std::move(rfp)); }

bool RfpRegistry::accepts(QuestionFormat f, const std::string& rfp) const {
    if (asd::is_catalog_rfp(f, rfp)) return true;
    const auto it = extra_.find(f);
    return it != extra_.end() && std::find(it->second.begin(), it->second.end(), rfp) != it->second.end();
}

std::vector<std::string> validate_sample(const InstructionSample& s, const RfpRegistry& registry) {
    std::vector<std::string> out;
    if (s.id.empty()) out.emplace_back("id must be non-empty");

    switch (s.format) {
        case QuestionFormat::MultipleChoice:
            if (s.options.empty()) {
                out.emplace_back("multiple-choice sample requires a non-empty option list");
            } else if (s.options.size() > 26) {
                out.emplace_back("multiple-choice sample has more than 26 options");
            } else {
                const auto idx = option_index(s.gt_label);
                if (!idx) {
                    out.emplace_back("multiple-choice gt_label '" + s.gt_label +
                                     "' is not a single option letter");
                } else if (*idx >= s.options.size()) {
                    out.emplace_back("multiple-choice gt_label '" + s.gt_label +
                                     "' is out of range for " + std::to_string(s.options.size()) +
                                     " options");
                }
            }
            break;
        case QuestionFormat::YesNo:
            if (s.gt_label != "Yes" && s.gt_label != "No") {
                out.emplace_back("yes/no gt_label must be 'Yes' or 'No', got '" + s.gt_label + "'");
            }
            break;
        default:
            break;
    }

    if (!s.options.empty() && s.format != QuestionFormat::MultipleChoice &&
        s.format != QuestionFormat::ShortAnswer) {
        out.emplace_back("options are only allowed for multiple-choice or short-answer samples");
    }
    if (!registry.accepts(s.format, s.rfp)) {
        out.emplace_back("rfp '" + s.rfp + "' is not a registered prompt for format " +
                         std::string(format_tag(s.format)));
    }
    if (s.provenance.is_transformed()) {
        if (s.provenance.source == s.provenance.target) {
            out.emplace_back("transformed provenance has identical source and target");
        }
        if (s.provenance.target != s.format) {
            out.emplace_back("transformed provenance target differs from sample format");
        }
    }
    return out;
}

std::string render_instruction(const InstructionSample& s) {
    std::string out = s.question;
    const auto append = [&out](const std::string& segment) {
        if (!out.empty()) out += '\n';
        out += segment;
    };
    if (s.format == QuestionFormat::MultipleChoice) {
        for (std::size_t i = 0; i < s.options.size(); ++i) {
            append(option_letter(i) + ". " + s.options[i]);
        }
    } else if (!s.options.empty()) {
        std::string list;
        for (std::size_t i = 0; i < s.options.size(); ++i) {
            if (i > 0) list += s.options.size() == 2 ? " " : ", ";
            if (i > 0 && i + 1 == s.options.size()) list += "or ";
            list += s.options[i];
        }
        append(list);
    }
    append(s.rfp);
    return out;
}

void Dataset::add(InstructionSample sample) {
    if (!ids_.insert(sample.id).second) {
        throw ValidationError("duplicate sample id '" + sample.id + "'");
    }
    ++histogram_[format_index(sample.format)];
    samples_.push_back(std::move(sample));
}

Dataset parse_dataset(std::string_view text, std::string name, const RfpRegistry& registry) {
    Dataset ds(std::move(name));
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        auto sample = parse_record(line, line_no);
        const auto violations = validate_sample(sample, registry);
        if (!violations.empty()) {
            throw ValidationError(line_prefix(line_no) + "sample '" + sample.id + "': " + violations.front());
        }
        try {
            ds.add(std::move(sample));
        } catch (const ValidationError& e) {
            throw ValidationError(line_prefix(line_no) + e.what());
        }
    }
    return ds;
}

std::string serialize_sample(const InstructionSample& s) {
    ojson obj;
    obj["id"] = s.id;
    obj["image"] = s.image;
    obj["question"] = s.question;
    obj["rfp"] = s.rfp;
    obj["options"] = s.options;
    obj["gt_label"] = s.gt_label;
    obj["format"] = format_tag(s.format);
    ojson prov;
    if (s.provenance.is_transformed()) {
        prov["kind"] = "transformed";
        prov["source"] = format_tag(s.provenance.source);
        prov["target"] = format_tag(s.provenance.target);
    } else {
        prov["kind"] = "original";
    }
    obj["provenance"] = std::move(prov);
    return obj.dump();
}

std::string serialize_dataset(const Dataset& dataset) {
    std::string out;
    for (const auto& s : dataset.samples()) {
        out += serialize_sample(s);
        out += '\n';
    }
    return out;
}

Dataset load_dataset(const std::string& path, const RfpRegistry& registry) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    auto stem = path;
    if (const auto slash = stem.find_last_of('/'); slash != std::string::npos) stem = stem.substr(slash + 1);
    if (const auto dot = stem.rfind('.'); dot != std::string::npos && dot > 0) stem = stem.substr(0, dot);
    return parse_dataset(buf.str(), stem, registry);
}

void save_dataset(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write dataset '" + path + "'");
    out << serialize_dataset(dataset);
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace forgetlab::qa
