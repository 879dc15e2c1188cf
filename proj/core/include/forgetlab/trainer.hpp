// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forgetlab/metrics.hpp"
#include "forgetlab/reglora.hpp"
#include "forgetlab/toy_tasks.hpp"

namespace forgetlab::train {

using reglora::Matrix;

enum class Mode { PlainLoRA, RegLoRA };
enum class OptimizerKind { SgdMomentum, Adam };

[[nodiscard]] std::string_view mode_tag(Mode mode) noexcept;  // "plain" | "reglora"
[[nodiscard]] Mode parse_mode(std::string_view tag);
[[nodiscard]] std::string_view optimizer_tag(OptimizerKind kind) noexcept;  // "sgd" | "adam"
[[nodiscard]] OptimizerKind parse_optimizer(std::string_view tag);

struct TrainConfig {
    Mode mode = Mode::RegLoRA;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 0.01;
    double momentum = 0.9;  // SGD momentum, Adam beta1
    double beta2 = 0.999;
    int batch_size = 32;
    int epochs = 30;
    std::uint64_t seed = 0;
    int rank = 4;
    int width = 64;
    int trunk_layers = 1;
    double lora_scale = 1.0;
    reglora::RegConfig reg;

    void validate() const;
};

/// A frozen base weight, its adapter for the current task, and the masks of
/// finished tasks.
struct Layer {
    std::string name;
    Matrix base;
    reglora::LoraAdapter adapter;
    reglora::RegMaskStack stack;

    [[nodiscard]] Matrix effective() const { return base + reglora::delta_w(adapter); }
};

struct Logits {
    Matrix style;    // batch x 5
    Matrix content;  // batch x C
};

/// tanh trunk of 1-2 LoRA-wrapped linear layers feeding a style head and a
/// content head, both LoRA-wrapped as well. No biases; the constant prior
/// column of the input plays that role.
class ToyModel {
public:
    ToyModel(int d_in, int content_classes, const TrainConfig& config);
    /// Restores merged weights and masks; adapters start fresh.
    ToyModel(std::vector<Layer> layers, std::uint64_t seed, int generation, double lora_scale, int rank);

    [[nodiscard]] Logits forward(const Matrix& inputs) const;
    [[nodiscard]] std::vector<toy::Prediction> predict(const Matrix& inputs) const;

    [[nodiscard]] std::vector<Layer>& layers() noexcept { return layers_; }
    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::size_t trunk_layers() const noexcept { return layers_.size() - 2; }
    [[nodiscard]] int generation() const noexcept { return generation_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] int rank() const noexcept { return rank_; }
    [[nodiscard]] double lora_scale() const noexcept { return scale_; }

    /// Fresh adapters for the next task, seeded by (seed, generation, layer).
    void reset_adapters();
    void advance_generation() noexcept { ++generation_; }

private:
    std::vector<Layer> layers_;  // trunk..., style head, content head
    std::uint64_t seed_ = 0;
    int generation_ = 0;
    double scale_ = 1.0;
    int rank_ = 4;
};

struct LossParts {
    double ce_style = 0.0;
    double ce_content = 0.0;
    double reg = 0.0;

    [[nodiscard]] double total() const noexcept { return ce_style + ce_content + reg; }
};

/// Mean per-sample cross-entropy of both heads plus, in RegLoRA mode, the
/// mask penalty summed over layers. The penalty is zero while no task has
/// finished.
[[nodiscard]] LossParts task_loss(const ToyModel& model, const Matrix& inputs, std::span<const toy::ToyTarget> targets,
                                  const TrainConfig& config);

/// Analytic gradient of task_loss with respect to every adapter, plus the
/// loss itself.
struct LossAndGrad {
    LossParts loss;
    std::vector<reglora::AdapterGrad> grads;  // one per layer
};

[[nodiscard]] LossAndGrad task_loss_grad(const ToyModel& model, const Matrix& inputs,
                                         std::span<const toy::ToyTarget> targets, const TrainConfig& config);

struct EpochLog {
    int epoch = 0;
    LossParts mean;  // averaged over batches
};

struct TrainingLog {
    std::string task;
    std::vector<EpochLog> epochs;
};

/// Trains the current adapters on the task's training split. Base weights
/// are never written. Throws DivergenceError on a non-finite loss.
TrainingLog train_task(ToyModel& model, const toy::ToyTask& task, const TrainConfig& config);

/// Marks key elements of each layer's update, merges the adapter into the
/// base weight, and starts fresh adapters. Returns the updated stacks.
std::vector<reglora::RegMaskStack> finish_task(ToyModel& model, const TrainConfig& config);

struct TaskAccuracy {
    double style = 0.0;
    double content = 0.0;
    double joint = 0.0;
};

/// Accuracy on the task's held-out split, as fractions.
[[nodiscard]] TaskAccuracy evaluate(const ToyModel& model, const toy::ToyTask& task);

/// Merged weights and masks after a task, plus the configuration that
/// produced them.
struct Checkpoint {
    struct LayerState {
        std::string name;
        Matrix weight;
        Matrix mask_sum;
        int task_count = 0;
    };
    std::vector<LayerState> layers;
    TrainConfig config;
    int tasks_completed = 0;
};

[[nodiscard]] Checkpoint make_checkpoint(const ToyModel& model, const TrainConfig& config);
[[nodiscard]] ToyModel model_from_checkpoint(const Checkpoint& checkpoint);

struct SequenceResult {
    metrics::AccuracyMatrix joint;
    metrics::AccuracyMatrix style;
    metrics::AccuracyMatrix content;
    std::vector<TrainingLog> logs;
    std::vector<Checkpoint> checkpoints;  // one per task, after finish_task
    /// Update of each task's adapters, captured before merging: [task][layer].
    std::vector<std::vector<Matrix>> deltas;
};

/// Trains `tasks` in order. After task j, row j of each matrix holds the
/// held-out accuracy (percent) on tasks 0..j.
[[nodiscard]] SequenceResult run_sequence(std::span<const toy::ToyTask> tasks, const TrainConfig& config);

}  // namespace forgetlab::train
