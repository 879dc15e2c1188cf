// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "forgetlab/error.hpp"

namespace forgetlab::io {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using reglora::Matrix;

ordered_json matrix_json(const Matrix& m) {
    ordered_json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    auto& data = j["data"] = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    return j;
}

Matrix parse_matrix(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || !data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw ValidationError("matrix payload does not match its shape");
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)].get<double>();
    }
    return m;
}

std::string container(std::string_view kind, const ordered_json& body) {
    std::string out(kMagic);
    out += '\n';
    out += kind;
    out += '\n';
    out += body.dump();
    out += '\n';
    return out;
}

json open_container(std::string_view text, std::string_view kind) {
    const auto first = text.find('\n');
    if (first == std::string_view::npos || text.substr(0, first) != kMagic) {
        throw ValidationError("not a FLAB1 container (bad magic header)");
    }
    const auto second = text.find('\n', first + 1);
    if (second == std::string_view::npos) throw ValidationError("FLAB1 container is truncated");
    const auto found = text.substr(first + 1, second - first - 1);
    if (found != kind) {
        throw ValidationError("FLAB1 container holds '" + std::string(found) + "', expected '" + std::string(kind) + "'");
    }
    try {
        return json::parse(text.substr(second + 1));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("FLAB1 body: ") + e.what());
    }
}

template <typename Fn>
auto guarded(std::string_view what, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw ValidationError(std::string(what) + ": " + e.what());
    }
}

ordered_json config_object(const train::TrainConfig& c) {
    ordered_json j;
    j["mode"] = train::mode_tag(c.mode);
    j["optimizer"] = train::optimizer_tag(c.optimizer);
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["beta2"] = c.beta2;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["seed"] = c.seed;
    j["rank"] = c.rank;
    j["width"] = c.width;
    j["trunk_layers"] = c.trunk_layers;
    j["lora_scale"] = c.lora_scale;
    j["m_percent"] = c.reg.m_percent;
    j["lambda"] = c.reg.lambda;
    return j;
}

train::TrainConfig apply_config(const json& j, train::TrainConfig c) {
    if (!j.is_object()) throw ValidationError("train config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        try {
            if (key == "mode") c.mode = train::parse_mode(v.get<std::string>());
            else if (key == "optimizer") c.optimizer = train::parse_optimizer(v.get<std::string>());
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "momentum") c.momentum = v.get<double>();
            else if (key == "beta2") c.beta2 = v.get<double>();
            else if (key == "batch_size") c.batch_size = v.get<int>();
            else if (key == "epochs") c.epochs = v.get<int>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "rank") c.rank = v.get<int>();
            else if (key == "width") c.width = v.get<int>();
            else if (key == "trunk_layers") c.trunk_layers = v.get<int>();
            else if (key == "lora_scale") c.lora_scale = v.get<double>();
            else if (key == "m_percent") c.reg.m_percent = v.get<double>();
            else if (key == "lambda") c.reg.lambda = v.get<double>();
            else throw ValidationError("unknown train config key '" + key + "'");
        } catch (const json::exception& e) {
            throw ValidationError("train config key '" + key + "': " + e.what());
        }
    }
    return c;
}

}  // namespace

std::string train_config_json(const train::TrainConfig& config) { return config_object(config).dump(); }

train::TrainConfig parse_train_config_json(std::string_view text, const train::TrainConfig& base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("train config: ") + e.what());
    }
    return apply_config(j, base);
}

std::string encode_checkpoint(const train::Checkpoint& cp) {
    ordered_json body;
    body["tasks_completed"] = cp.tasks_completed;
    body["config"] = config_object(cp.config);
    auto& layers = body["layers"] = ordered_json::array();
    for (const auto& l : cp.layers) {
        ordered_json j;
        j["name"] = l.name;
        j["task_count"] = l.task_count;
        j["weight"] = matrix_json(l.weight);
        j["mask_sum"] = matrix_json(l.mask_sum);
        layers.push_back(std::move(j));
    }
    return container("checkpoint", body);
}

train::Checkpoint decode_checkpoint(std::string_view text) {
    const auto body = open_container(text, "checkpoint");
    return guarded("checkpoint", [&] {
        train::Checkpoint cp;
        cp.tasks_completed = body.at("tasks_completed").get<int>();
        cp.config = apply_config(body.at("config"), {});
        for (const auto& l : body.at("layers")) {
            cp.layers.push_back({l.at("name").get<std::string>(), parse_matrix(l.at("weight")),
                                 parse_matrix(l.at("mask_sum")), l.at("task_count").get<int>()});
        }
        return cp;
    });
}

std::string encode_task_suite(const std::vector<toy::ToyTask>& tasks) {
    ordered_json body;
    auto& list = body["tasks"] = ordered_json::array();
    for (const auto& t : tasks) {
        ordered_json j;
        j["name"] = t.name;
        j["dominant_style"] = t.dominant_style;
        j["style_mix_percent"] = t.style_mix_percent;
        j["content_classes"] = t.content_classes;
        j["inputs"] = matrix_json(t.inputs);
        auto& styles = j["styles"] = json::array();
        auto& contents = j["contents"] = json::array();
        for (const auto& y : t.targets) {
            styles.push_back(y.style);
            contents.push_back(y.content);
        }
        list.push_back(std::move(j));
    }
    return container("task_suite", body);
}

std::vector<toy::ToyTask> decode_task_suite(std::string_view text) {
    const auto body = open_container(text, "task_suite");
    return guarded("task suite", [&] {
        std::vector<toy::ToyTask> out;
        for (const auto& j : body.at("tasks")) {
            toy::ToyTask t;
            t.name = j.at("name").get<std::string>();
            t.dominant_style = j.at("dominant_style").get<int>();
            t.style_mix_percent = j.at("style_mix_percent").get<double>();
            t.content_classes = j.at("content_classes").get<int>();
            t.inputs = parse_matrix(j.at("inputs"));
            const auto styles = j.at("styles").get<std::vector<int>>();
            const auto contents = j.at("contents").get<std::vector<int>>();
            if (styles.size() != contents.size() || static_cast<Eigen::Index>(styles.size()) != t.inputs.rows()) {
                throw ValidationError("task '" + t.name + "' has mismatched inputs and targets");
            }
            for (std::size_t i = 0; i < styles.size(); ++i) t.targets.push_back({styles[i], contents[i]});
            out.push_back(std::move(t));
        }
        return out;
    });
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << contents;
    if (!out) throw IoError("write failed for '" + path + "'");
}

void write_checkpoint(const std::string& path, const train::Checkpoint& cp) { write_file(path, encode_checkpoint(cp)); }

train::Checkpoint read_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

void write_task_suite(const std::string& path, const std::vector<toy::ToyTask>& tasks) {
    write_file(path, encode_task_suite(tasks));
}

std::vector<toy::ToyTask> read_task_suite(const std::string& path) { return decode_task_suite(read_file(path)); }

}  // namespace forgetlab::io
