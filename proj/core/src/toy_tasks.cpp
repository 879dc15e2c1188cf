// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/toy_tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "forgetlab/error.hpp"
#include "forgetlab/random.hpp"

namespace forgetlab::toy {

namespace {

constexpr double kContentMargin = 0.25;
// Nearly parallel rows leave two classes that can never be told apart by
// the margin, so such maps are redrawn.
constexpr double kMaxRowCosine = 0.9;
constexpr int kMaxMapDraws = 10000;
constexpr int kMaxSampleDraws = 1000000;

std::size_t count_matching(std::span<const Prediction> p, std::span<const ToyTarget> t,
                           bool check_style, bool check_content) {
    if (p.size() != t.size()) {
        throw ValidationError("prediction count " + std::to_string(p.size()) + " does not match " +
                              std::to_string(t.size()) + " targets");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool ok = (!check_style || p[i].style == t[i].style) && (!check_content || p[i].content == t[i].content);
        hits += ok ? 1 : 0;
    }
    return hits;
}

double fraction(std::size_t hits, std::size_t n) {
    return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

/// Style per sample: round(n*mix/100) non-dominant, split equally over the
/// other four styles, positions shuffled.
std::vector<int> assign_styles(std::size_t n, double mix, int dominant, Rng& rng) {
    const auto moved = static_cast<std::size_t>(std::nearbyint(static_cast<double>(n) * mix / 100.0));
    std::vector<int> others;
    for (int s = 0; s < kStyles; ++s) {
        if (s != dominant) others.push_back(s);
    }
    std::vector<int> styles(n, dominant);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;
    for (std::size_t k = 0; k < others.size(); ++k) {
        const auto quota = moved / 4 + (k < moved % 4 ? 1 : 0);
        for (std::size_t q = 0; q < quota; ++q) styles[order[cursor++]] = others[k];
    }
    return styles;
}

/// Random unit-row map whose rows are pairwise less than kMaxRowCosine alike.
Eigen::MatrixXd draw_content_map(int classes, int width, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd map(classes, width);
    for (int attempt = 0; attempt < kMaxMapDraws; ++attempt) {
        for (Eigen::Index r = 0; r < map.rows(); ++r) {
            for (Eigen::Index c = 0; c < map.cols(); ++c) map(r, c) = normal(rng);
            map.row(r).normalize();
        }
        const Eigen::MatrixXd gram = map * map.transpose();
        bool separated = true;
        for (Eigen::Index i = 0; i < gram.rows() && separated; ++i) {
            for (Eigen::Index j = i + 1; j < gram.cols(); ++j) {
                if (gram(i, j) >= kMaxRowCosine) {
                    separated = false;
                    break;
                }
            }
        }
        if (separated) return map;
    }
    throw ValidationError(std::to_string(classes) + " content classes do not fit a feature block of width " +
                          std::to_string(width) + "; raise d_in or lower content_classes");
}

}  // namespace

void SuiteParams::validate() const {
    if (n_tasks < 2) throw ValidationError("a task suite needs at least 2 tasks");
    if (samples_per_task < 5) throw ValidationError("samples_per_task must be at least 5");
    if (content_classes < 2) throw ValidationError("content_classes must be at least 2");
    if (!(style_mix_percent >= 0.0 && style_mix_percent <= 100.0)) throw ValidationError("mix must be in [0, 100]");
    if (!(background_noise >= 0.0)) throw ValidationError("background_noise must be >= 0");
    if (block_width() < 2) {
        throw ValidationError("d_in = " + std::to_string(d_in) + " leaves fewer than 2 feature dims per task");
    }
}

int SuiteParams::block_width() const noexcept {
    return n_tasks > 0 ? (d_in - kFeatureOffset) / n_tasks : 0;
}

std::vector<ToyTask> generate_task_suite(const SuiteParams& params) {
    params.validate();
    const int width = params.block_width();
    const auto n = static_cast<std::size_t>(params.samples_per_task);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<ToyTask> suite;
    suite.reserve(static_cast<std::size_t>(params.n_tasks));
    for (int t = 0; t < params.n_tasks; ++t) {
        auto rng = make_rng(params.seed, static_cast<std::uint64_t>(t));
        ToyTask task;
        task.name = "task" + std::to_string(t);
        task.dominant_style = t % kStyles;
        task.style_mix_percent = params.style_mix_percent;
        task.content_classes = params.content_classes;

        const auto map = draw_content_map(params.content_classes, width, rng);

        const auto styles = assign_styles(n, params.style_mix_percent, task.dominant_style, rng);
        task.inputs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), params.d_in);
        task.targets.resize(n);
        const int offset = kFeatureOffset + t * width;
        Eigen::VectorXd z(width);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            Eigen::Index label = 0;
            for (int attempt = 0;; ++attempt) {
                if (attempt == kMaxSampleDraws) throw Error("could not draw a content sample with the required margin");
                for (int c = 0; c < width; ++c) z(c) = normal(rng);
                Eigen::VectorXd logits = map * z;
                logits.maxCoeff(&label);
                const double best = logits(label);
                logits(label) = -INFINITY;
                if (best - logits.maxCoeff() >= kContentMargin) break;
            }
            for (int c = kFeatureOffset; c < params.d_in; ++c) task.inputs(row, c) = params.background_noise * normal(rng);
            task.inputs(row, kPriorColumn) = 1.0;
            task.inputs.row(row).segment(offset, width) = z.transpose();
            task.inputs(row, styles[i]) = 1.0;
            task.targets[i] = {styles[i], static_cast<int>(label)};
        }
        suite.push_back(std::move(task));
    }
    return suite;
}

double style_accuracy(std::span<const Prediction> p, std::span<const ToyTarget> t) {
    return fraction(count_matching(p, t, true, false), t.size());
}

double content_accuracy(std::span<const Prediction> p, std::span<const ToyTarget> t) {
    return fraction(count_matching(p, t, false, true), t.size());
}

double joint_accuracy(std::span<const Prediction> p, std::span<const ToyTarget> t) {
    return fraction(count_matching(p, t, true, true), t.size());
}

double style_accuracy(std::span<const Prediction> p, const ToyTask& task) { return style_accuracy(p, task.targets); }

double content_accuracy(std::span<const Prediction> p, const ToyTask& task) {
    return content_accuracy(p, task.targets);
}

}  // namespace forgetlab::toy
