// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "forgetlab/error.hpp"
#include "forgetlab/trainer.hpp"
#include "oracles.hpp"

using namespace forgetlab;
using namespace forgetlab::train;

namespace {

std::vector<toy::ToyTask> suite(std::uint64_t seed, int samples = 200, double mix = 20) {
    toy::SuiteParams p;
    p.samples_per_task = samples;
    p.style_mix_percent = mix;
    p.seed = seed;
    return toy::generate_task_suite(p);
}

TrainConfig config(Mode mode, std::uint64_t seed = 0, int epochs = 5) {
    TrainConfig c;
    c.mode = mode;
    c.seed = seed;
    c.epochs = epochs;
    return c;
}

Matrix batch_inputs(const toy::ToyTask& t, Eigen::Index n) { return t.inputs.topRows(n); }
std::span<const toy::ToyTarget> batch_targets(const toy::ToyTask& t, std::size_t n) {
    return std::span<const toy::ToyTarget>(t.targets).first(n);
}

/// Sets every adapter to a random point whose update stays away from zero
/// wherever a mask penalizes it.
void randomize_adapters(ToyModel& model, std::mt19937_64& rng) {
    for (auto& layer : model.layers()) {
        auto& ad = layer.adapter;
        const Matrix unmasked = (layer.stack.sum.array() == 0.0).cast<double>().matrix();
        for (;;) {
            ad.a = oracle::random_matrix(rng, ad.a.rows(), ad.a.cols(), 0.3);
            ad.b = oracle::random_matrix(rng, ad.b.rows(), ad.b.cols(), 0.3);
            if ((reglora::delta_w(ad).cwiseAbs() + unmasked).minCoeff() > 1e-3) break;
        }
    }
}

}  // namespace

TEST(TrainConfigCheck, Validate) {
    EXPECT_NO_THROW(TrainConfig{}.validate());
    auto c = TrainConfig{};
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = TrainConfig{};
    c.trunk_layers = 3;
    EXPECT_THROW(c.validate(), ValidationError);
    c = TrainConfig{};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    EXPECT_EQ(parse_mode("plain"), Mode::PlainLoRA);
    EXPECT_EQ(mode_tag(Mode::RegLoRA), "reglora");
    EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::SgdMomentum);
    EXPECT_THROW((void)parse_mode("ewc"), ValidationError);
}

TEST(TaskLoss, UniformLogitsAtInit) {
    for (const int classes : {2, 4, 7}) {
        toy::SuiteParams p;
        p.content_classes = classes;
        p.samples_per_task = 50;
        const auto t = toy::generate_task_suite(p).front();
        ToyModel model(static_cast<int>(t.inputs.cols()), classes, config(Mode::RegLoRA));
        const auto loss = task_loss(model, batch_inputs(t, 20), batch_targets(t, 20), config(Mode::RegLoRA));
        EXPECT_NEAR(loss.ce_style, std::log(5.0), 1e-12);
        EXPECT_NEAR(loss.ce_content, std::log(static_cast<double>(classes)), 1e-12);
        EXPECT_EQ(loss.reg, 0.0);
    }
}

TEST(TaskLoss, RegTermOnlyAfterFirstTaskAndLambda) {
    const auto tasks = suite(1);
    auto cfg = config(Mode::RegLoRA, 1, 2);
    ToyModel model(20, 4, cfg);
    (void)train_task(model, tasks[0], cfg);
    EXPECT_EQ(task_loss(model, batch_inputs(tasks[0], 32), batch_targets(tasks[0], 32), cfg).reg, 0.0);
    (void)finish_task(model, cfg);
    std::mt19937_64 rng(0);
    randomize_adapters(model, rng);
    const auto x = batch_inputs(tasks[1], 32);
    const auto y = batch_targets(tasks[1], 32);
    EXPECT_GT(task_loss(model, x, y, cfg).reg, 0.0);

    auto zero = cfg;
    zero.reg.lambda = 0.0;
    const auto l0 = task_loss(model, x, y, zero);
    EXPECT_EQ(l0.reg, 0.0);
    EXPECT_EQ(l0.total(), l0.ce_style + l0.ce_content);

    auto plain = cfg;
    plain.mode = Mode::PlainLoRA;
    EXPECT_EQ(task_loss(model, x, y, plain).reg, 0.0);
    EXPECT_EQ(task_loss(model, x, y, plain).ce_style, task_loss(model, x, y, cfg).ce_style);
}

TEST(TaskLoss, RejectsBadBatches) {
    const auto t = suite(0).front();
    ToyModel model(20, 4, config(Mode::RegLoRA));
    EXPECT_THROW((void)task_loss(model, batch_inputs(t, 0), batch_targets(t, 0), config(Mode::RegLoRA)),
                 ValidationError);
    EXPECT_THROW((void)task_loss(model, batch_inputs(t, 3), batch_targets(t, 4), config(Mode::RegLoRA)), ShapeError);
    EXPECT_THROW((void)task_loss(model, Matrix::Zero(2, 7), batch_targets(t, 2), config(Mode::RegLoRA)), ShapeError);
}

// Analytic gradient of the full loss against central differences, over
// random adapter coordinates of models with one and two trunk layers.
TEST(TaskLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    int instances = 0;
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        const auto tasks = suite(seed, 100);
        auto cfg = config(Mode::RegLoRA, seed, 1);
        cfg.trunk_layers = 1 + static_cast<int>(seed % 2);
        cfg.width = 16;
        cfg.reg.lambda = seed % 3 == 0 ? 1.0 : 50.0;
        cfg.reg.m_percent = 10.0;
        cfg.lora_scale = seed % 4 == 3 ? 0.5 : 1.0;
        ToyModel model(20, 4, cfg);
        (void)train_task(model, tasks[0], cfg);
        (void)finish_task(model, cfg);
        randomize_adapters(model, rng);

        const auto x = batch_inputs(tasks[1], 16);
        const auto y = batch_targets(tasks[1], 16);
        const auto lg = task_loss_grad(model, x, y, cfg);
        EXPECT_NEAR(lg.loss.total(), task_loss(model, x, y, cfg).total(), 1e-10);
        const auto f = [&] { return task_loss(model, x, y, cfg).total(); };

        for (int probe = 0; probe < 50; ++probe) {
            const auto l = static_cast<std::size_t>(rng() % model.layers().size());
            auto& ad = model.layers()[l].adapter;
            const bool in_a = rng() % 2 == 0;
            Matrix& m = in_a ? ad.a : ad.b;
            const auto idx = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.size()));
            const double analytic = (in_a ? lg.grads[l].a : lg.grads[l].b).data()[idx];

            const double h = 1e-6, saved = m.data()[idx];
            m.data()[idx] = saved + h;
            const double up = f();
            m.data()[idx] = saved - h;
            const double down = f();
            m.data()[idx] = saved;
            const double numeric = (up - down) / (2 * h);
            const double scale = std::max({1e-6, std::abs(numeric), std::abs(analytic)});
            EXPECT_LE(std::abs(analytic - numeric) / scale, 1e-4)
                << "seed " << seed << " layer " << l << (in_a ? " A" : " B") << " idx " << idx;
        }
        ++instances;
    }
    EXPECT_EQ(instances, 12);
}

TEST(TrainTask, ZeroEpochsLeavesModelUnchanged) {
    const auto t = suite(2).front();
    auto cfg = config(Mode::RegLoRA, 2, 0);
    ToyModel model(20, 4, cfg);
    const auto before = model.layers();
    const auto log = train_task(model, t, cfg);
    EXPECT_TRUE(log.epochs.empty());
    for (std::size_t l = 0; l < before.size(); ++l) {
        EXPECT_EQ(model.layers()[l].adapter.a, before[l].adapter.a);
        EXPECT_EQ(model.layers()[l].adapter.b, before[l].adapter.b);
    }
}

TEST(TrainTask, BaseWeightsStayFrozen) {
    const auto tasks = suite(3);
    auto cfg = config(Mode::RegLoRA, 3, 3);
    ToyModel model(20, 4, cfg);
    (void)train_task(model, tasks[0], cfg);
    (void)finish_task(model, cfg);
    std::vector<Matrix> bases;
    for (const auto& l : model.layers()) bases.push_back(l.base);
    const auto log = train_task(model, tasks[1], cfg);
    EXPECT_EQ(log.epochs.size(), 3u);
    for (std::size_t l = 0; l < bases.size(); ++l) EXPECT_EQ(model.layers()[l].base, bases[l]);
    bool moved = false;
    for (const auto& l : model.layers()) moved = moved || reglora::delta_w(l.adapter).cwiseAbs().maxCoeff() > 0;
    EXPECT_TRUE(moved);
}

TEST(TrainTask, DeterministicUnderSeed) {
    const auto t = suite(4).front();
    auto cfg = config(Mode::PlainLoRA, 4, 3);
    ToyModel a(20, 4, cfg), b(20, 4, cfg);
    const auto la = train_task(a, t, cfg);
    const auto lb = train_task(b, t, cfg);
    for (std::size_t l = 0; l < a.layers().size(); ++l) EXPECT_EQ(a.layers()[l].adapter.b, b.layers()[l].adapter.b);
    ASSERT_EQ(la.epochs.size(), lb.epochs.size());
    EXPECT_EQ(la.epochs.back().mean.total(), lb.epochs.back().mean.total());
}

TEST(TrainTask, NonFiniteLossIsDivergence) {
    auto t = suite(0).front();
    t.inputs(3, 8) = std::numeric_limits<double>::quiet_NaN();
    auto cfg = config(Mode::PlainLoRA, 0, 1);
    ToyModel model(20, 4, cfg);
    EXPECT_THROW((void)train_task(model, t, cfg), DivergenceError);
}

TEST(FinishTask, MergeIsTransparent) {
    std::mt19937_64 rng(6);
    const auto tasks = suite(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto cfg = config(trial % 2 ? Mode::RegLoRA : Mode::PlainLoRA, static_cast<std::uint64_t>(trial), 1);
        cfg.trunk_layers = 1 + trial % 2;
        ToyModel model(20, 4, cfg);
        (void)train_task(model, tasks[0], cfg);
        if (trial % 3 == 0) {
            (void)finish_task(model, cfg);
            randomize_adapters(model, rng);
        }
        const Matrix probe = oracle::random_matrix(rng, 16, 20);
        const auto before = model.forward(probe);
        const auto stacks = finish_task(model, cfg);
        const auto after = model.forward(probe);
        EXPECT_LE((before.style - after.style).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE((before.content - after.content).cwiseAbs().maxCoeff(), 1e-10);
        ASSERT_EQ(stacks.size(), model.layers().size());
        for (const auto& l : model.layers()) {
            EXPECT_EQ(reglora::delta_w(l.adapter).cwiseAbs().maxCoeff(), 0.0);
            EXPECT_EQ(l.stack.task_count, trial % 3 == 0 ? 2 : 1);
        }
    }
}

TEST(FinishTask, MaskCountsAndFullMask) {
    const auto tasks = suite(7);
    auto cfg = config(Mode::RegLoRA, 7, 2);
    cfg.reg.m_percent = 100.0;
    ToyModel model(20, 4, cfg);
    (void)train_task(model, tasks[0], cfg);
    (void)finish_task(model, cfg);
    for (const auto& l : model.layers()) {
        EXPECT_EQ(l.stack.sum, Matrix::Ones(l.base.rows(), l.base.cols()));
    }
    std::mt19937_64 rng(1);
    randomize_adapters(model, rng);
    const auto x = batch_inputs(tasks[1], 8);
    const auto y = batch_targets(tasks[1], 8);
    double expected = 0.0;
    for (const auto& l : model.layers()) expected += cfg.reg.lambda * reglora::delta_w(l.adapter).cwiseAbs().sum();
    EXPECT_NEAR(task_loss(model, x, y, cfg).reg, expected, 1e-9 * expected);

    auto two = config(Mode::RegLoRA, 7, 2);
    ToyModel m2(20, 4, two);
    (void)train_task(m2, tasks[0], two);
    (void)finish_task(m2, two);
    for (const auto& l : m2.layers()) {
        EXPECT_EQ(l.stack.sum.sum(), static_cast<double>(reglora::key_element_count(l.base.size(), 2.0)));
    }
}

TEST(Sequence, FirstTaskIdenticalAcrossModes) {
    const auto tasks = suite(8);
    const auto plain = run_sequence(tasks, config(Mode::PlainLoRA, 8, 4));
    const auto reg = run_sequence(tasks, config(Mode::RegLoRA, 8, 4));
    ASSERT_EQ(plain.checkpoints.size(), 3u);
    for (std::size_t l = 0; l < plain.checkpoints[0].layers.size(); ++l) {
        EXPECT_EQ(plain.checkpoints[0].layers[l].weight, reg.checkpoints[0].layers[l].weight);
        EXPECT_EQ(plain.deltas[0][l], reg.deltas[0][l]);
    }
    EXPECT_EQ(plain.joint.at(0, 0), reg.joint.at(0, 0));
    EXPECT_EQ(plain.style.at(0, 0), reg.style.at(0, 0));
    ASSERT_EQ(plain.logs[0].epochs.size(), reg.logs[0].epochs.size());
    for (std::size_t e = 0; e < plain.logs[0].epochs.size(); ++e) {
        EXPECT_EQ(plain.logs[0].epochs[e].mean.total(), reg.logs[0].epochs[e].mean.total());
    }
    EXPECT_EQ(reg.logs[0].epochs.back().mean.reg, 0.0);
    EXPECT_GT(reg.logs[1].epochs.back().mean.reg, 0.0);
}

TEST(Sequence, SingleTaskShapes) {
    const auto tasks = suite(9);
    const auto r = run_sequence(std::span(tasks).first(1), config(Mode::RegLoRA, 9, 2));
    EXPECT_EQ(r.joint.tasks(), 1u);
    EXPECT_EQ(r.checkpoints.size(), 1u);
    EXPECT_EQ(r.checkpoints[0].tasks_completed, 1);
    EXPECT_THROW((void)run_sequence(std::span<const toy::ToyTask>{}, config(Mode::RegLoRA)), ValidationError);
}

TEST(Checkpointing, RestoredModelMatchesForward) {
    const auto tasks = suite(10);
    auto cfg = config(Mode::RegLoRA, 10, 2);
    ToyModel model(20, 4, cfg);
    (void)train_task(model, tasks[0], cfg);
    (void)finish_task(model, cfg);
    const auto restored = model_from_checkpoint(make_checkpoint(model, cfg));
    const auto a = model.forward(tasks[1].inputs);
    const auto b = restored.forward(tasks[1].inputs);
    EXPECT_EQ(a.style, b.style);
    EXPECT_EQ(a.content, b.content);
    EXPECT_EQ(restored.generation(), 1);
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        EXPECT_EQ(restored.layers()[l].stack.sum, model.layers()[l].stack.sum);
        EXPECT_EQ(restored.layers()[l].adapter.a, model.layers()[l].adapter.a);  // same seeded re-init
    }
}
