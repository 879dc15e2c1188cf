// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "forgetlab/error.hpp"
#include "forgetlab/toy_tasks.hpp"
#include "forgetlab/trainer.hpp"

using namespace forgetlab;
using toy::Prediction;
using toy::ToyTarget;

namespace {

toy::SuiteParams params(int n_tasks, int samples, double mix, std::uint64_t seed = 0) {
    toy::SuiteParams p;
    p.n_tasks = n_tasks;
    p.samples_per_task = samples;
    p.style_mix_percent = mix;
    p.seed = seed;
    return p;
}

std::array<int, toy::kStyles> style_histogram(const toy::ToyTask& t) {
    std::array<int, toy::kStyles> h{};
    for (const auto& y : t.targets) ++h[static_cast<std::size_t>(y.style)];
    return h;
}

}  // namespace

TEST(ToySuite, SingleStyleWithoutMix) {
    for (const auto& t : toy::generate_task_suite(params(2, 200, 0))) {
        const auto h = style_histogram(t);
        EXPECT_EQ(h[static_cast<std::size_t>(t.dominant_style)], 200);
    }
}

TEST(ToySuite, MixLawExample) {
    const auto suite = toy::generate_task_suite(params(3, 100, 20));
    ASSERT_EQ(suite.size(), 3u);
    for (int t = 0; t < 3; ++t) {
        EXPECT_EQ(suite[static_cast<std::size_t>(t)].dominant_style, t);
        const auto h = style_histogram(suite[static_cast<std::size_t>(t)]);
        for (int s = 0; s < toy::kStyles; ++s) EXPECT_EQ(h[static_cast<std::size_t>(s)], s == t ? 80 : 5);
    }
}

// Property: (100-X)% dominant and the rest split equally within one.
TEST(ToySuite, MixLawProperty) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 60; ++trial) {
        const int n = 5 + static_cast<int>(rng() % 400);
        const double mix = static_cast<double>(rng() % 101);
        const int tasks = 2 + static_cast<int>(rng() % 6);
        auto p = params(tasks, n, mix, rng());
        p.d_in = toy::kFeatureOffset + 2 * tasks;
        for (const auto& t : toy::generate_task_suite(p)) {
            const auto h = style_histogram(t);
            const auto moved = static_cast<int>(std::nearbyint(n * mix / 100.0));
            EXPECT_EQ(h[static_cast<std::size_t>(t.dominant_style)], n - moved);
            for (int s = 0; s < toy::kStyles; ++s) {
                if (s == t.dominant_style) continue;
                EXPECT_GE(h[static_cast<std::size_t>(s)], moved / 4);
                EXPECT_LE(h[static_cast<std::size_t>(s)], moved / 4 + 1);
            }
        }
    }
}

TEST(ToySuite, DominantStylesCycle) {
    auto p = params(7, 20, 0);
    p.d_in = toy::kFeatureOffset + 14;
    const auto suite = toy::generate_task_suite(p);
    EXPECT_EQ(suite[5].dominant_style, 0);
    EXPECT_EQ(suite[6].dominant_style, 1);
}

TEST(ToySuite, InputLayout) {
    const auto p = params(3, 300, 20, 4);
    const auto suite = toy::generate_task_suite(p);
    const int w = p.block_width();
    EXPECT_EQ(w, (20 - toy::kFeatureOffset) / 3);
    for (std::size_t t = 0; t < suite.size(); ++t) {
        const auto& task = suite[t];
        EXPECT_EQ(task.inputs.cols(), p.d_in);
        const int own = toy::kFeatureOffset + static_cast<int>(t) * w;
        double own_var = 0, other_var = 0;
        int other_n = 0;
        for (Eigen::Index r = 0; r < task.inputs.rows(); ++r) {
            for (int s = 0; s < toy::kStyles; ++s) {
                EXPECT_EQ(task.inputs(r, s), s == task.targets[static_cast<std::size_t>(r)].style ? 1.0 : 0.0);
            }
            EXPECT_EQ(task.inputs(r, toy::kPriorColumn), 1.0);
            for (int c = toy::kFeatureOffset; c < p.d_in; ++c) {
                const double v = task.inputs(r, c) * task.inputs(r, c);
                if (c >= own && c < own + w) own_var += v;
                else {
                    other_var += v;
                    ++other_n;
                }
            }
        }
        own_var /= static_cast<double>(task.inputs.rows() * w);
        other_var /= other_n;
        EXPECT_GT(own_var, 0.5);
        EXPECT_LT(other_var, 0.01);
    }
}

TEST(ToySuite, DeterministicUnderSeed) {
    EXPECT_EQ(toy::generate_task_suite(params(3, 50, 20, 9)), toy::generate_task_suite(params(3, 50, 20, 9)));
    EXPECT_NE(toy::generate_task_suite(params(3, 50, 20, 9)), toy::generate_task_suite(params(3, 50, 20, 10)));
}

TEST(ToySuite, HeldOutSplitIsLastFifth) {
    const auto t = toy::generate_task_suite(params(2, 103, 0)).front();
    EXPECT_EQ(t.held_out_begin(), 83u);
    EXPECT_EQ(t.held_out_targets().size(), 20u);
    EXPECT_EQ(t.held_out_inputs().rows(), 20);
    EXPECT_EQ(t.held_out_inputs().row(0), t.inputs.row(83));
}

TEST(ToySuite, RejectsBadParams) {
    EXPECT_THROW((void)toy::generate_task_suite(params(1, 100, 0)), ValidationError);
    EXPECT_THROW((void)toy::generate_task_suite(params(3, 100, 120)), ValidationError);
    auto narrow = params(3, 100, 0);
    narrow.d_in = toy::kFeatureOffset + 5;
    EXPECT_THROW((void)toy::generate_task_suite(narrow), ValidationError);
    auto classes = params(3, 100, 0);
    classes.content_classes = 1;
    EXPECT_THROW((void)toy::generate_task_suite(classes), ValidationError);
}

TEST(ToyAccuracy, Examples) {
    const std::vector<ToyTarget> targets = {{0, 1}, {2, 3}, {4, 0}, {1, 1}};
    EXPECT_EQ(toy::style_accuracy(targets, targets), 1.0);
    EXPECT_EQ(toy::content_accuracy(targets, targets), 1.0);

    std::vector<Prediction> wrong_style = targets;
    for (auto& p : wrong_style) p.style = (p.style + 1) % toy::kStyles;
    EXPECT_EQ(toy::style_accuracy(wrong_style, targets), 0.0);
    EXPECT_EQ(toy::content_accuracy(wrong_style, targets), 1.0);
    EXPECT_EQ(toy::joint_accuracy(wrong_style, targets), 0.0);

    std::vector<Prediction> wrong_content = targets;
    for (auto& p : wrong_content) p.content = (p.content + 1) % 4;
    EXPECT_EQ(toy::style_accuracy(wrong_content, targets), 1.0);
    EXPECT_EQ(toy::content_accuracy(wrong_content, targets), 0.0);

    std::vector<Prediction> half = targets;
    half[0].style = 3;
    half[1].content = 0;
    EXPECT_EQ(toy::joint_accuracy(half, targets), 0.5);

    EXPECT_THROW((void)toy::style_accuracy(std::vector<Prediction>(3), targets), ValidationError);
}

TEST(ToySuite, SingleTaskIsLearnable) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto suite = toy::generate_task_suite(params(3, 500, 20, seed));
        train::TrainConfig cfg;
        cfg.mode = train::Mode::PlainLoRA;
        cfg.seed = seed;
        for (const auto& task : suite) {
            train::ToyModel model(static_cast<int>(task.inputs.cols()), task.content_classes, cfg);
            (void)train::train_task(model, task, cfg);
            EXPECT_GE(train::evaluate(model, task).joint, 0.95) << task.name << " seed " << seed;
        }
    }
}
