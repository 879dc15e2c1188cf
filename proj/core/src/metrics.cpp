// SPDX-License-Identifier: Apache-2.0
#include "forgetlab/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "forgetlab/error.hpp"

namespace forgetlab::metrics {

namespace {

void check_percent(double v, std::size_t j, std::size_t i) {
    if (!(v >= 0.0 && v <= 100.0)) {
        throw ValidationError("accuracy A[" + std::to_string(j) + "][" + std::to_string(i) + "] = " +
                              std::to_string(v) + " is outside [0, 100]");
    }
}

void require_nonempty(const AccuracyMatrix& a) {
    if (a.tasks() == 0) throw ValidationError("accuracy matrix has no tasks");
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

AccuracyMatrix::AccuracyMatrix(std::size_t tasks) {
    rows_.reserve(tasks);
    for (std::size_t j = 0; j < tasks; ++j) rows_.emplace_back(j + 1, 0.0);
}

AccuracyMatrix AccuracyMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
    AccuracyMatrix out(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (rows[j].size() < j + 1) {
            throw ValidationError("row " + std::to_string(j) + " needs at least " + std::to_string(j + 1) + " entries");
        }
        for (std::size_t i = 0; i <= j; ++i) out.set(j, i, rows[j][i]);
    }
    return out;
}

double AccuracyMatrix::at(std::size_t j, std::size_t i) const {
    if (j >= rows_.size() || i > j) throw ValidationError("accuracy index outside the lower triangle");
    return rows_[j][i];
}

void AccuracyMatrix::set(std::size_t j, std::size_t i, double percent) {
    if (j >= rows_.size() || i > j) throw ValidationError("accuracy index outside the lower triangle");
    check_percent(percent, j, i);
    rows_[j][i] = percent;
}

double mft(const AccuracyMatrix& a) {
    require_nonempty(a);
    double s = 0.0;
    for (std::size_t i = 0; i < a.tasks(); ++i) s += a.at(i, i);
    return s / static_cast<double>(a.tasks());
}

double mfn(const AccuracyMatrix& a) {
    require_nonempty(a);
    const auto last = a.tasks() - 1;
    double s = 0.0;
    for (std::size_t i = 0; i < a.tasks(); ++i) s += a.at(last, i);
    return s / static_cast<double>(a.tasks());
}

double maa(const AccuracyMatrix& a) {
    require_nonempty(a);
    double s = 0.0;
    for (std::size_t j = 0; j < a.tasks(); ++j) {
        double row = 0.0;
        for (std::size_t i = 0; i <= j; ++i) row += a.at(j, i);
        s += row / static_cast<double>(j + 1);
    }
    return s / static_cast<double>(a.tasks());
}

// Mean of (final - just learned) rewritten as mfn - mft, so the identity
// holds bit for bit.
double bwt(const AccuracyMatrix& a) { return mfn(a) - mft(a); }

Summary summarize(const AccuracyMatrix& a) { return {mft(a), mfn(a), maa(a), bwt(a)}; }

std::string to_csv(const AccuracyMatrix& a) {
    std::string out;
    char buf[32];
    for (std::size_t j = 0; j < a.tasks(); ++j) {
        for (std::size_t i = 0; i < a.tasks(); ++i) {
            if (i > 0) out += ',';
            if (i <= j) {
                std::snprintf(buf, sizeof buf, "%.17g", a.at(j, i));
                out += buf;
            }
        }
        out += '\n';
    }
    return out;
}

AccuracyMatrix from_csv(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto j = rows.size();
        std::vector<double> row;
        std::stringstream cells(line);
        std::string cell;
        std::size_t i = 0;
        while (std::getline(cells, cell, ',')) {
            if (i <= j) {
                const auto t = trim(cell);
                double v = 0.0;
                const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
                if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
                    throw ValidationError("csv row " + std::to_string(j) + ", column " + std::to_string(i) +
                                          ": expected a number, got '" + t + "'");
                }
                row.push_back(v);
            }
            ++i;
        }
        rows.push_back(std::move(row));
    }
    return AccuracyMatrix::from_rows(rows);
}

}  // namespace forgetlab::metrics
