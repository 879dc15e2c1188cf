// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

namespace forgetlab::reglora {

/// Dense 64-bit matrix. Rows index outputs (k), columns inputs (d).
using Matrix = Eigen::MatrixXd;

/// Low-rank update of a k x d linear layer: delta = scale * B * A with A r x d
/// and B k x r.
struct LoraAdapter {
    Matrix a;
    Matrix b;
    double scale = 1.0;

    [[nodiscard]] Eigen::Index rank() const noexcept { return a.rows(); }
    [[nodiscard]] Eigen::Index in_dim() const noexcept { return a.cols(); }
    [[nodiscard]] Eigen::Index out_dim() const noexcept { return b.rows(); }
};

/// Accumulated regularization masks of all finished tasks for one layer.
/// Entries are counts in [0, task_count].
struct RegMaskStack {
    Matrix sum;
    int task_count = 0;

    [[nodiscard]] static RegMaskStack empty(Eigen::Index k, Eigen::Index d) {
        return {Matrix::Zero(k, d), 0};
    }
    [[nodiscard]] bool is_empty() const noexcept { return task_count == 0; }
};

struct RegConfig {
    double m_percent = 2.0;  // share of |delta| entries marked per task
    double lambda = 2.5e3;

    /// Throws ValidationError unless 0 < m_percent <= 100 and lambda >= 0.
    void validate() const;
};

/// A uniform in [-1/sqrt(d), 1/sqrt(d)] from `seed`, B zero, so the update
/// starts at zero. Throws ValidationError if any dimension is < 1; warns on
/// stderr when r > min(d, k).
[[nodiscard]] LoraAdapter init_adapter(Eigen::Index d, Eigen::Index k, Eigen::Index r, std::uint64_t seed,
                                       double scale = 1.0);

[[nodiscard]] Matrix delta_w(const LoraAdapter& adapter);

/// W + delta_w(adapter); `w` is left untouched.
[[nodiscard]] Matrix merge(const Matrix& w, const LoraAdapter& adapter);

/// max(1, round(m_percent/100 * n)), ties to even.
[[nodiscard]] Eigen::Index key_element_count(Eigen::Index n, double m_percent);

/// 0/1 mask over the key_element_count largest |delta| entries. Equal
/// magnitudes go to the smaller row-major index first.
[[nodiscard]] Matrix select_key_elements(const Matrix& delta, double m_percent);

[[nodiscard]] RegMaskStack accumulate_mask(const RegMaskStack& stack, const Matrix& mask);

/// lambda * sum(|delta_w(adapter)| .* stack.sum).
[[nodiscard]] double reg_loss(const LoraAdapter& adapter, const RegMaskStack& stack, double lambda);

struct AdapterGrad {
    Matrix a;
    Matrix b;
};

/// Gradient of reg_loss through delta = scale * B * A, with sign(0) = 0.
[[nodiscard]] AdapterGrad reg_loss_grad(const LoraAdapter& adapter, const RegMaskStack& stack, double lambda);

struct ConcentrationStats {
    double top1_mean_abs = 0.0;
    double bottom1_mean_abs = 0.0;
    double ratio = 0.0;  // +inf when the bottom mean is zero
};

/// Mean |entry| over the top and bottom 1% of a matrix with at least 100
/// entries (max(1, round(0.01 n)) entries each).
[[nodiscard]] ConcentrationStats update_concentration_stats(const Matrix& delta);

}  // namespace forgetlab::reglora
