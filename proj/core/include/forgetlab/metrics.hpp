// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace forgetlab::metrics {

/// Lower-triangular accuracy table in percent: at(j, i) is the accuracy on
/// task i after training through task j, for i <= j.
class AccuracyMatrix {
public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(std::size_t tasks);

    /// Row j keeps its first j+1 entries; anything past the diagonal is
    /// ignored. Throws ValidationError on short rows or entries outside
    /// [0, 100].
    [[nodiscard]] static AccuracyMatrix from_rows(const std::vector<std::vector<double>>& rows);

    [[nodiscard]] std::size_t tasks() const noexcept { return rows_.size(); }
    [[nodiscard]] double at(std::size_t j, std::size_t i) const;
    void set(std::size_t j, std::size_t i, double percent);
    [[nodiscard]] const std::vector<double>& row(std::size_t j) const { return rows_.at(j); }

    friend bool operator==(const AccuracyMatrix&, const AccuracyMatrix&) = default;

private:
    std::vector<std::vector<double>> rows_;
};

/// Mean fine-tune accuracy: mean of the diagonal.
[[nodiscard]] double mft(const AccuracyMatrix& a);
/// Mean final accuracy: mean of the last row.
[[nodiscard]] double mfn(const AccuracyMatrix& a);
/// Mean over steps of the mean accuracy on the tasks learned so far.
[[nodiscard]] double maa(const AccuracyMatrix& a);
/// Mean of final minus just-learned accuracy; negative means forgetting.
[[nodiscard]] double bwt(const AccuracyMatrix& a);

struct Summary {
    double mft = 0, mfn = 0, maa = 0, bwt = 0;
};

[[nodiscard]] Summary summarize(const AccuracyMatrix& a);

/// T lines of T comma-separated cells; the upper triangle is left empty.
[[nodiscard]] std::string to_csv(const AccuracyMatrix& a);
/// Inverse of to_csv. Upper-triangle cells may be empty, "nan", or numbers;
/// they are ignored.
[[nodiscard]] AccuracyMatrix from_csv(std::string_view text);

}  // namespace forgetlab::metrics
