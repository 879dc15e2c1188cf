// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forgetlab/error.hpp"
#include "forgetlab/random.hpp"

namespace forgetlab::train {

namespace {

constexpr std::uint64_t kBaseStream = 0xBA5E0000ULL;
constexpr std::uint64_t kAdapterStream = 0xADA00000ULL;
constexpr std::uint64_t kBatchStream = 0xBA7C0000ULL;

/// Row-wise log-softmax.
Matrix log_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        out.row(i) = logits.row(i).array() - lse;
    }
    return out;
}

template <typename Label>
double mean_ce(const Matrix& log_probs, std::span<const toy::ToyTarget> targets, Label label) {
    double s = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) s -= log_probs(static_cast<Eigen::Index>(i), label(targets[i]));
    return s / static_cast<double>(targets.size());
}

/// Gradient of mean CE with respect to the logits.
template <typename Label>
Matrix ce_logit_grad(const Matrix& log_probs, std::span<const toy::ToyTarget> targets, Label label) {
    Matrix g = log_probs.array().exp();
    for (std::size_t i = 0; i < targets.size(); ++i) g(static_cast<Eigen::Index>(i), label(targets[i])) -= 1.0;
    return g / static_cast<double>(targets.size());
}

const auto style_of = [](const toy::ToyTarget& t) { return static_cast<Eigen::Index>(t.style); };
const auto content_of = [](const toy::ToyTarget& t) { return static_cast<Eigen::Index>(t.content); };

void check_batch(const ToyModel& model, const Matrix& inputs, std::span<const toy::ToyTarget> targets) {
    if (targets.empty()) throw ValidationError("batch must be non-empty");
    if (static_cast<std::size_t>(inputs.rows()) != targets.size()) {
        throw ShapeError("batch has " + std::to_string(inputs.rows()) + " inputs but " +
                         std::to_string(targets.size()) + " targets");
    }
    if (inputs.cols() != model.layers().front().base.cols()) {
        throw ShapeError("input width " + std::to_string(inputs.cols()) + " does not match the model");
    }
    const auto classes = model.layers().back().base.rows();
    for (const auto& t : targets) {
        if (t.style < 0 || t.style >= toy::kStyles || t.content < 0 || t.content >= classes) {
            throw ValidationError("target label out of range");
        }
    }
}

bool use_reg(const TrainConfig& config) { return config.mode == Mode::RegLoRA; }

struct MomentState {
    Matrix first;
    Matrix second;
};

void step(Matrix& param, const Matrix& grad, MomentState& state, const TrainConfig& config, long t) {
    if (config.optimizer == OptimizerKind::SgdMomentum) {
        state.first = config.momentum * state.first + grad;
        param -= config.learning_rate * state.first;
        return;
    }
    constexpr double eps = 1e-8;
    state.first = config.momentum * state.first + (1.0 - config.momentum) * grad;
    state.second = config.beta2 * state.second + (1.0 - config.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(config.momentum, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    param.array() -= config.learning_rate * (state.first.array() / c1) / ((state.second.array() / c2).sqrt() + eps);
}

}  // namespace

std::string_view mode_tag(Mode mode) noexcept { return mode == Mode::PlainLoRA ? "plain" : "reglora"; }

Mode parse_mode(std::string_view tag) {
    if (tag == "plain") return Mode::PlainLoRA;
    if (tag == "reglora") return Mode::RegLoRA;
    throw ValidationError("mode must be 'plain' or 'reglora', got '" + std::string(tag) + "'");
}

std::string_view optimizer_tag(OptimizerKind kind) noexcept {
    return kind == OptimizerKind::Adam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view tag) {
    if (tag == "adam") return OptimizerKind::Adam;
    if (tag == "sgd") return OptimizerKind::SgdMomentum;
    throw ValidationError("optimizer must be 'adam' or 'sgd', got '" + std::string(tag) + "'");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("beta2 must be in [0, 1)");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (rank < 1) throw ValidationError("rank must be >= 1");
    if (width < 1) throw ValidationError("width must be >= 1");
    if (trunk_layers < 1 || trunk_layers > 2) throw ValidationError("trunk_layers must be 1 or 2");
    if (!(lora_scale > 0.0) || !std::isfinite(lora_scale)) throw ValidationError("lora_scale must be > 0");
    reg.validate();
}

ToyModel::ToyModel(int d_in, int content_classes, const TrainConfig& config)
    : seed_(config.seed), scale_(config.lora_scale), rank_(config.rank) {
    config.validate();
    if (d_in < 1 || content_classes < 2) throw ValidationError("model needs d_in >= 1 and >= 2 content classes");
    std::normal_distribution<double> normal(0.0, 1.0);
    int in = d_in;
    for (int l = 0; l < config.trunk_layers; ++l) {
        auto rng = make_rng(seed_, kBaseStream + static_cast<std::uint64_t>(l));
        Matrix w(config.width, in);
        const double sd = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = sd * normal(rng);
        }
        layers_.push_back({"trunk" + std::to_string(l), std::move(w), {}, {}});
        in = config.width;
    }
    layers_.push_back({"style_head", Matrix::Zero(toy::kStyles, in), {}, {}});
    layers_.push_back({"content_head", Matrix::Zero(content_classes, in), {}, {}});
    for (auto& layer : layers_) layer.stack = reglora::RegMaskStack::empty(layer.base.rows(), layer.base.cols());
    reset_adapters();
}

ToyModel::ToyModel(std::vector<Layer> layers, std::uint64_t seed, int generation, double lora_scale, int rank)
    : layers_(std::move(layers)), seed_(seed), generation_(generation), scale_(lora_scale), rank_(rank) {
    if (layers_.size() < 3) throw ValidationError("model needs at least one trunk layer and two heads");
    reset_adapters();
}

void ToyModel::reset_adapters() {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto& layer = layers_[i];
        const auto stream = kAdapterStream + (static_cast<std::uint64_t>(generation_) << 8) + i;
        layer.adapter =
            reglora::init_adapter(layer.base.cols(), layer.base.rows(), rank_, mix_seed(seed_, stream), scale_);
    }
}

Logits ToyModel::forward(const Matrix& inputs) const {
    Matrix a = inputs;
    for (std::size_t l = 0; l < trunk_layers(); ++l) {
        a = (a * layers_[l].effective().transpose()).array().tanh().matrix();
    }
    const auto& style = layers_[layers_.size() - 2];
    const auto& content = layers_.back();
    return {a * style.effective().transpose(), a * content.effective().transpose()};
}

std::vector<toy::Prediction> ToyModel::predict(const Matrix& inputs) const {
    const auto logits = forward(inputs);
    std::vector<toy::Prediction> out(static_cast<std::size_t>(inputs.rows()));
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
        Eigen::Index s = 0, c = 0;
        logits.style.row(i).maxCoeff(&s);
        logits.content.row(i).maxCoeff(&c);
        out[static_cast<std::size_t>(i)] = {static_cast<int>(s), static_cast<int>(c)};
    }
    return out;
}

LossParts task_loss(const ToyModel& model, const Matrix& inputs, std::span<const toy::ToyTarget> targets,
                    const TrainConfig& config) {
    check_batch(model, inputs, targets);
    const auto logits = model.forward(inputs);
    LossParts parts;
    parts.ce_style = mean_ce(log_softmax(logits.style), targets, style_of);
    parts.ce_content = mean_ce(log_softmax(logits.content), targets, content_of);
    if (use_reg(config)) {
        for (const auto& layer : model.layers()) {
            parts.reg += reglora::reg_loss(layer.adapter, layer.stack, config.reg.lambda);
        }
    }
    return parts;
}

LossAndGrad task_loss_grad(const ToyModel& model, const Matrix& inputs, std::span<const toy::ToyTarget> targets,
                           const TrainConfig& config) {
    check_batch(model, inputs, targets);
    const auto& layers = model.layers();
    const std::size_t trunk = model.trunk_layers();

    std::vector<Matrix> weights;
    weights.reserve(layers.size());
    for (const auto& layer : layers) weights.push_back(layer.effective());

    // activations[l] is the input of layer l (trunk) or of the heads (l = trunk).
    std::vector<Matrix> activations{inputs};
    for (std::size_t l = 0; l < trunk; ++l) {
        activations.push_back((activations.back() * weights[l].transpose()).array().tanh().matrix());
    }
    const Matrix& features = activations.back();
    const Matrix style_lp = log_softmax(features * weights[trunk].transpose());
    const Matrix content_lp = log_softmax(features * weights[trunk + 1].transpose());

    LossAndGrad out;
    out.loss.ce_style = mean_ce(style_lp, targets, style_of);
    out.loss.ce_content = mean_ce(content_lp, targets, content_of);

    std::vector<Matrix> weight_grads(layers.size());
    const Matrix d_style = ce_logit_grad(style_lp, targets, style_of);
    const Matrix d_content = ce_logit_grad(content_lp, targets, content_of);
    weight_grads[trunk] = d_style.transpose() * features;
    weight_grads[trunk + 1] = d_content.transpose() * features;
    Matrix upstream = d_style * weights[trunk] + d_content * weights[trunk + 1];
    for (std::size_t l = trunk; l-- > 0;) {
        const Matrix& act = activations[l + 1];
        const Matrix dz = upstream.cwiseProduct((1.0 - act.array().square()).matrix());
        weight_grads[l] = dz.transpose() * activations[l];
        if (l > 0) upstream = dz * weights[l];
    }

    out.grads.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& adapter = layers[l].adapter;
        out.grads[l].a = adapter.scale * adapter.b.transpose() * weight_grads[l];
        out.grads[l].b = adapter.scale * weight_grads[l] * adapter.a.transpose();
        if (use_reg(config) && !layers[l].stack.is_empty()) {
            out.loss.reg += reglora::reg_loss(adapter, layers[l].stack, config.reg.lambda);
            const auto reg = reglora::reg_loss_grad(adapter, layers[l].stack, config.reg.lambda);
            out.grads[l].a += reg.a;
            out.grads[l].b += reg.b;
        }
    }
    return out;
}

TrainingLog train_task(ToyModel& model, const toy::ToyTask& task, const TrainConfig& config) {
    config.validate();
    TrainingLog log;
    log.task = task.name;
    const auto n = task.train_size();
    if (n == 0 || config.epochs == 0) return log;

    auto& layers = model.layers();
    std::vector<MomentState> state_a, state_b;
    for (const auto& layer : layers) {
        const auto& ad = layer.adapter;
        state_a.push_back({Matrix::Zero(ad.a.rows(), ad.a.cols()), Matrix::Zero(ad.a.rows(), ad.a.cols())});
        state_b.push_back({Matrix::Zero(ad.b.rows(), ad.b.cols()), Matrix::Zero(ad.b.rows(), ad.b.cols())});
    }

    auto rng = make_rng(config.seed, kBatchStream + static_cast<std::uint64_t>(model.generation()));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto batch = static_cast<std::size_t>(config.batch_size);
    long t = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochLog entry{epoch, {}};
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const auto end = std::min(n, start + batch);
            Matrix x(static_cast<Eigen::Index>(end - start), task.inputs.cols());
            std::vector<toy::ToyTarget> y;
            y.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                x.row(static_cast<Eigen::Index>(k - start)) = task.inputs.row(static_cast<Eigen::Index>(order[k]));
                y.push_back(task.targets[order[k]]);
            }
            const auto lg = task_loss_grad(model, x, y, config);
            if (!std::isfinite(lg.loss.total())) {
                throw DivergenceError("non-finite loss on " + task.name + " at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batches));
            }
            ++t;
            for (std::size_t l = 0; l < layers.size(); ++l) {
                step(layers[l].adapter.a, lg.grads[l].a, state_a[l], config, t);
                step(layers[l].adapter.b, lg.grads[l].b, state_b[l], config, t);
                const auto& ad = layers[l].adapter;
                if (!(ad.scale * (ad.b * ad.a)).allFinite()) {
                    throw DivergenceError("adapter of " + layers[l].name + " overflowed on " + task.name +
                                          " at epoch " + std::to_string(epoch) + ", batch " +
                                          std::to_string(batches));
                }
            }
            entry.mean.ce_style += lg.loss.ce_style;
            entry.mean.ce_content += lg.loss.ce_content;
            entry.mean.reg += lg.loss.reg;
            ++batches;
        }
        const auto nb = static_cast<double>(batches);
        entry.mean.ce_style /= nb;
        entry.mean.ce_content /= nb;
        entry.mean.reg /= nb;
        log.epochs.push_back(entry);
    }
    return log;
}

std::vector<reglora::RegMaskStack> finish_task(ToyModel& model, const TrainConfig& config) {
    std::vector<reglora::RegMaskStack> stacks;
    for (auto& layer : model.layers()) {
        const Matrix delta = reglora::delta_w(layer.adapter);
        layer.stack = reglora::accumulate_mask(layer.stack, reglora::select_key_elements(delta, config.reg.m_percent));
        layer.base = layer.base + delta;
        stacks.push_back(layer.stack);
    }
    model.advance_generation();
    model.reset_adapters();
    return stacks;
}

TaskAccuracy evaluate(const ToyModel& model, const toy::ToyTask& task) {
    const auto preds = model.predict(task.held_out_inputs());
    const auto targets = task.held_out_targets();
    return {toy::style_accuracy(preds, targets), toy::content_accuracy(preds, targets),
            toy::joint_accuracy(preds, targets)};
}

Checkpoint make_checkpoint(const ToyModel& model, const TrainConfig& config) {
    Checkpoint cp;
    cp.config = config;
    cp.tasks_completed = model.generation();
    for (const auto& layer : model.layers()) {
        cp.layers.push_back({layer.name, layer.effective(), layer.stack.sum, layer.stack.task_count});
    }
    return cp;
}

ToyModel model_from_checkpoint(const Checkpoint& cp) {
    std::vector<Layer> layers;
    for (const auto& s : cp.layers) {
        if (s.weight.rows() != s.mask_sum.rows() || s.weight.cols() != s.mask_sum.cols()) {
            throw ShapeError("checkpoint layer '" + s.name + "' has mismatched weight and mask shapes");
        }
        layers.push_back({s.name, s.weight, {}, {s.mask_sum, s.task_count}});
    }
    return ToyModel(std::move(layers), cp.config.seed, cp.tasks_completed, cp.config.lora_scale, cp.config.rank);
}

SequenceResult run_sequence(std::span<const toy::ToyTask> tasks, const TrainConfig& config) {
    config.validate();
    if (tasks.empty()) throw ValidationError("run_sequence needs at least one task");
    const auto d_in = static_cast<int>(tasks.front().inputs.cols());
    const int classes = tasks.front().content_classes;
    for (const auto& t : tasks) {
        if (t.inputs.cols() != d_in || t.content_classes != classes) {
            throw ValidationError("all tasks in a sequence must share input width and content classes");
        }
    }

    ToyModel model(d_in, classes, config);
    const auto n = tasks.size();
    SequenceResult result{metrics::AccuracyMatrix(n), metrics::AccuracyMatrix(n), metrics::AccuracyMatrix(n), {}, {}, {}};
    for (std::size_t j = 0; j < n; ++j) {
        result.logs.push_back(train_task(model, tasks[j], config));
        std::vector<Matrix> deltas;
        for (const auto& layer : model.layers()) deltas.push_back(reglora::delta_w(layer.adapter));
        result.deltas.push_back(std::move(deltas));
        finish_task(model, config);
        for (std::size_t i = 0; i <= j; ++i) {
            const auto acc = evaluate(model, tasks[i]);
            result.joint.set(j, i, 100.0 * acc.joint);
            result.style.set(j, i, 100.0 * acc.style);
            result.content.set(j, i, 100.0 * acc.content);
        }
        result.checkpoints.push_back(make_checkpoint(model, config));
    }
    return result;
}

}  // namespace forgetlab::train
