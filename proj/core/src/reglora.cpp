// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/reglora.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "forgetlab/error.hpp"
#include "forgetlab/random.hpp"

namespace forgetlab::reglora {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const Matrix& x, const Matrix& y, const char* what) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw ShapeError(std::string(what) + ": " + shape(x) + " vs " + shape(y));
    }
}

void require_consistent(const LoraAdapter& adapter) {
    if (adapter.b.cols() != adapter.a.rows()) {
        throw ShapeError("adapter B is " + shape(adapter.b) + " but A is " + shape(adapter.a));
    }
}

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw Error(std::string(what) + " produced a non-finite entry");
}

/// Row-major linear indices of the `count` largest |entries|.
std::vector<Eigen::Index> top_indices(const Matrix& m, Eigen::Index count) {
    const Eigen::Index cols = m.cols();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto mag = [&](Eigen::Index i) { return std::abs(m(i / cols, i % cols)); };
    const auto before = [&](Eigen::Index x, Eigen::Index y) {
        const double mx = mag(x), my = mag(y);
        return mx != my ? mx > my : x < y;
    };
    std::nth_element(idx.begin(), idx.begin() + (count - 1), idx.end(), before);
    idx.resize(static_cast<std::size_t>(count));
    return idx;
}

}  // namespace

void RegConfig::validate() const {
    if (!(m_percent > 0.0 && m_percent <= 100.0)) throw ValidationError("M must be in (0, 100]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
}

LoraAdapter init_adapter(Eigen::Index d, Eigen::Index k, Eigen::Index r, std::uint64_t seed, double scale) {
    if (d < 1 || k < 1 || r < 1) throw ValidationError("adapter dimensions must be >= 1");
    if (r > std::min(d, k)) {
        std::cerr << "warning: LoRA rank " << r << " exceeds min(d, k) = " << std::min(d, k) << '\n';
    }
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> dist(-bound, bound);
    LoraAdapter adapter{Matrix(r, d), Matrix::Zero(k, r), scale};
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) adapter.a(i, j) = dist(rng);
    }
    return adapter;
}

Matrix delta_w(const LoraAdapter& adapter) {
    require_consistent(adapter);
    Matrix out = adapter.scale * (adapter.b * adapter.a);
    require_finite(out, "delta_w");
    return out;
}

Matrix merge(const Matrix& w, const LoraAdapter& adapter) {
    if (w.rows() != adapter.out_dim() || w.cols() != adapter.in_dim()) {
        throw ShapeError("merge: W is " + shape(w) + " but adapter is " + std::to_string(adapter.out_dim()) + "x" +
                         std::to_string(adapter.in_dim()));
    }
    Matrix out = w + delta_w(adapter);
    require_finite(out, "merge");
    return out;
}

Eigen::Index key_element_count(Eigen::Index n, double m_percent) {
    const double exact = m_percent / 100.0 * static_cast<double>(n);
    const auto c = static_cast<Eigen::Index>(std::nearbyint(exact));
    return std::clamp<Eigen::Index>(c, 1, std::max<Eigen::Index>(n, 1));
}

Matrix select_key_elements(const Matrix& delta, double m_percent) {
    if (!(m_percent > 0.0 && m_percent <= 100.0)) throw ValidationError("M must be in (0, 100]");
    Matrix mask = Matrix::Zero(delta.rows(), delta.cols());
    if (delta.size() == 0) return mask;
    const auto cols = delta.cols();
    for (const auto i : top_indices(delta, key_element_count(delta.size(), m_percent))) {
        mask(i / cols, i % cols) = 1.0;
    }
    return mask;
}

RegMaskStack accumulate_mask(const RegMaskStack& stack, const Matrix& mask) {
    require_same_shape(stack.sum, mask, "accumulate_mask");
    return {stack.sum + mask, stack.task_count + 1};
}

double reg_loss(const LoraAdapter& adapter, const RegMaskStack& stack, double lambda) {
    require_consistent(adapter);
    if (stack.is_empty()) {
        if (stack.sum.rows() != adapter.out_dim() || stack.sum.cols() != adapter.in_dim()) {
            throw ShapeError("reg_loss: mask stack does not match adapter");
        }
        return 0.0;
    }
    const Matrix delta = delta_w(adapter);
    require_same_shape(delta, stack.sum, "reg_loss");
    return lambda * delta.cwiseAbs().cwiseProduct(stack.sum).sum();
}

AdapterGrad reg_loss_grad(const LoraAdapter& adapter, const RegMaskStack& stack, double lambda) {
    require_consistent(adapter);
    if (stack.sum.rows() != adapter.out_dim() || stack.sum.cols() != adapter.in_dim()) {
        throw ShapeError("reg_loss_grad: mask stack does not match adapter");
    }
    if (stack.is_empty()) {
        return {Matrix::Zero(adapter.a.rows(), adapter.a.cols()), Matrix::Zero(adapter.b.rows(), adapter.b.cols())};
    }
    const Matrix delta = delta_w(adapter);
    const Matrix g = lambda * adapter.scale *
                     delta.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); })
                         .cwiseProduct(stack.sum);
    return {adapter.b.transpose() * g, g * adapter.a.transpose()};
}

ConcentrationStats update_concentration_stats(const Matrix& delta) {
    const auto n = delta.size();
    if (n < 100) throw ValidationError("concentration stats need at least 100 entries");
    std::vector<double> mags(delta.data(), delta.data() + n);
    for (auto& v : mags) v = std::abs(v);
    std::sort(mags.begin(), mags.end());
    const auto count = key_element_count(n, 1.0);
    ConcentrationStats out;
    out.bottom1_mean_abs = std::accumulate(mags.begin(), mags.begin() + count, 0.0) / static_cast<double>(count);
    out.top1_mean_abs = std::accumulate(mags.end() - count, mags.end(), 0.0) / static_cast<double>(count);
    out.ratio = out.bottom1_mean_abs > 0.0 ? out.top1_mean_abs / out.bottom1_mean_abs
                                           : std::numeric_limits<double>::infinity();
    return out;
}

}  // namespace forgetlab::reglora
