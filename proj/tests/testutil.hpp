#pragma once

// Shared helpers for the test suites: dense views of sparse results and
// relative comparisons with a magnitude floor.

#include <cmath>
#include <vector>

#include "gradnet/sparse.hpp"

namespace testutil {

inline bool rel_close(double a, double b, double tol, double floor_scale = 1e-9) {
    double scale = std::max({std::abs(a), std::abs(b), floor_scale});
    return std::abs(a - b) <= tol * scale;
}

inline std::vector<double> dense_vec(const gradnet::sparse::SparseVec& v, int n) {
    return v.to_dense(n);
}

inline std::vector<std::vector<double>> dense_mat(
    const std::vector<gradnet::sparse::Triplet<double>>& trips, int rows, int cols) {
    std::vector<std::vector<double>> m(static_cast<std::size_t>(rows),
                                       std::vector<double>(static_cast<std::size_t>(cols), 0.0));
    for (const auto& t : trips) {
        m[static_cast<std::size_t>(t.row)][static_cast<std::size_t>(t.col)] += t.value;
    }
    return m;
}

/// Largest relative mismatch between two dense matrices.
inline double max_rel_err(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& b,
                          double floor_scale = 1e-9) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a[i].size(); ++j) {
            double scale = std::max({std::abs(a[i][j]), std::abs(b[i][j]), floor_scale});
            worst = std::max(worst, std::abs(a[i][j] - b[i][j]) / scale);
        }
    }
    return worst;
}

}  // namespace testutil
