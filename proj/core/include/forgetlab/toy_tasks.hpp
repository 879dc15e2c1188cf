// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace forgetlab::toy {

inline constexpr int kStyles = 5;
/// Input column that is always 1 (a learnable prior shared by all tasks).
inline constexpr int kPriorColumn = kStyles;
/// First content-feature column.
inline constexpr int kFeatureOffset = kStyles + 1;

/// A sample's answer: the response style and the content class.
struct ToyTarget {
    int style = 0;
    int content = 0;

    friend bool operator==(const ToyTarget&, const ToyTarget&) = default;
};

using Prediction = ToyTarget;

/// One synthetic classification task. Inputs are row vectors laid out as a
/// one-hot request for the answer style (first kStyles columns), a constant
/// prior column, then content features. Only the task's own feature block carries signal; the
/// other blocks hold low-amplitude noise.
struct ToyTask {
    std::string name;
    Eigen::MatrixXd inputs;  // samples x d_in
    std::vector<ToyTarget> targets;
    int dominant_style = 0;
    double style_mix_percent = 0.0;
    int content_classes = 0;

    [[nodiscard]] std::size_t size() const noexcept { return targets.size(); }
    /// The last 20% of samples (rounded down) are held out for evaluation.
    [[nodiscard]] std::size_t held_out_begin() const noexcept { return size() - size() / 5; }
    [[nodiscard]] std::size_t train_size() const noexcept { return held_out_begin(); }
    [[nodiscard]] std::span<const ToyTarget> held_out_targets() const noexcept {
        return std::span<const ToyTarget>(targets).subspan(held_out_begin());
    }
    [[nodiscard]] Eigen::MatrixXd held_out_inputs() const {
        return inputs.bottomRows(static_cast<Eigen::Index>(size() - held_out_begin()));
    }

    friend bool operator==(const ToyTask&, const ToyTask&) = default;
};

struct SuiteParams {
    int n_tasks = 3;
    int samples_per_task = 500;
    int d_in = 20;
    int content_classes = 4;
    double style_mix_percent = 0.0;
    std::uint64_t seed = 0;
    /// Per-dimension standard deviation of the off-block feature noise.
    double background_noise = 0.05;

    /// Throws ValidationError on non-positive sizes, n_tasks < 2, fewer than
    /// two content classes, a mix outside [0, 100], or d_in too small to give
    /// every task a feature block of at least two dimensions.
    void validate() const;
    /// Width of each task's feature block.
    [[nodiscard]] int block_width() const noexcept;
};

/// Task t has dominant style t mod 5. Exactly round(n*mix/100) samples carry
/// other styles, split equally over the four (remainder to the lowest style
/// ids first). Content is the argmax of a per-task random linear map of the
/// task's feature block; samples below a fixed logit margin are redrawn.
[[nodiscard]] std::vector<ToyTask> generate_task_suite(const SuiteParams& params);

/// Fraction of predictions with the right style (content ignored).
[[nodiscard]] double style_accuracy(std::span<const Prediction> predictions, std::span<const ToyTarget> targets);
/// Fraction of predictions with the right content (style ignored).
[[nodiscard]] double content_accuracy(std::span<const Prediction> predictions, std::span<const ToyTarget> targets);
/// Fraction with both right.
[[nodiscard]] double joint_accuracy(std::span<const Prediction> predictions, std::span<const ToyTarget> targets);

/// Scores against every sample of `task`.
[[nodiscard]] double style_accuracy(std::span<const Prediction> predictions, const ToyTask& task);
[[nodiscard]] double content_accuracy(std::span<const Prediction> predictions, const ToyTask& task);

}  // namespace forgetlab::toy
