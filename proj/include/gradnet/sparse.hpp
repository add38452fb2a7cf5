#pragma once

// Coordinate-triplet sparse assembly and a direct sparse LU solver
// (left-looking, partial pivoting) over real or complex scalars.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gradnet::sparse {

template <typename T>
struct Triplet {
    int row = 0;
    int col = 0;
    T value{};
};

/// Unordered (index, value) pairs; duplicates are additive until merged.
template <typename T>
struct VecEntries {
    std::vector<std::pair<int, T>> items;

    void add(int index, T value) { items.emplace_back(index, value); }

    void merge() {
        std::sort(items.begin(), items.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::size_t out = 0;
        for (std::size_t i = 0; i < items.size();) {
            int idx = items[i].first;
            T sum{};
            while (i < items.size() && items[i].first == idx) {
                sum += items[i].second;
                ++i;
            }
            items[out++] = {idx, sum};
        }
        items.resize(out);
    }

    std::vector<T> to_dense(int n) const {
        std::vector<T> d(static_cast<std::size_t>(n), T{});
        for (const auto& [i, v] : items) d[static_cast<std::size_t>(i)] += v;
        return d;
    }
};

using SparseVec = VecEntries<double>;

/// Additive triplet accumulator for an n_rows x n_cols matrix.
template <typename T>
struct TripletMatrix {
    int n_rows = 0;
    int n_cols = 0;
    std::vector<Triplet<T>> entries;

    TripletMatrix() = default;
    TripletMatrix(int rows, int cols) : n_rows(rows), n_cols(cols) {}

    void add(int row, int col, T value) { entries.push_back({row, col, value}); }

    /// Sum duplicates in place; resulting entries are (col, row) sorted.
    void merge() {
        std::sort(entries.begin(), entries.end(), [](const Triplet<T>& a, const Triplet<T>& b) {
            return a.col != b.col ? a.col < b.col : a.row < b.row;
        });
        std::size_t out = 0;
        for (std::size_t i = 0; i < entries.size();) {
            int r = entries[i].row, c = entries[i].col;
            T sum{};
            while (i < entries.size() && entries[i].row == r && entries[i].col == c) {
                sum += entries[i].value;
                ++i;
            }
            entries[out++] = {r, c, sum};
        }
        entries.resize(out);
    }

    std::vector<std::vector<T>> to_dense() const {
        std::vector<std::vector<T>> d(static_cast<std::size_t>(n_rows),
                                      std::vector<T>(static_cast<std::size_t>(n_cols), T{}));
        for (const auto& t : entries) {
            d[static_cast<std::size_t>(t.row)][static_cast<std::size_t>(t.col)] += t.value;
        }
        return d;
    }

    std::vector<T> multiply(const std::vector<T>& x) const {
        std::vector<T> y(static_cast<std::size_t>(n_rows), T{});
        for (const auto& t : entries) {
            y[static_cast<std::size_t>(t.row)] += t.value * x[static_cast<std::size_t>(t.col)];
        }
        return y;
    }

    std::vector<T> multiply_transpose(const std::vector<T>& x) const {
        std::vector<T> y(static_cast<std::size_t>(n_cols), T{});
        for (const auto& t : entries) {
            y[static_cast<std::size_t>(t.col)] += t.value * x[static_cast<std::size_t>(t.row)];
        }
        return y;
    }
};

struct SingularMatrixError : std::runtime_error {
    int column;
    explicit SingularMatrixError(int col)
        : std::runtime_error("SingularMatrix: no usable pivot in column " + std::to_string(col)),
          column(col) {}
};

namespace detail {
inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(std::complex<double> v) { return std::abs(v); }
}  // namespace detail

/// Compressed sparse column storage with summed duplicates.
template <typename T>
struct CscMatrix {
    int n = 0;  // square
    std::vector<int> col_ptr;
    std::vector<int> row_idx;
    std::vector<T> values;

    static CscMatrix from_triplets(int n, const std::vector<Triplet<T>>& triplets) {
        std::vector<Triplet<T>> sorted = triplets;
        std::sort(sorted.begin(), sorted.end(), [](const Triplet<T>& a, const Triplet<T>& b) {
            return a.col != b.col ? a.col < b.col : a.row < b.row;
        });
        CscMatrix m;
        m.n = n;
        m.col_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
        for (std::size_t i = 0; i < sorted.size();) {
            int r = sorted[i].row, c = sorted[i].col;
            T sum{};
            while (i < sorted.size() && sorted[i].row == r && sorted[i].col == c) {
                sum += sorted[i].value;
                ++i;
            }
            m.row_idx.push_back(r);
            m.values.push_back(sum);
            m.col_ptr[static_cast<std::size_t>(c) + 1]++;
        }
        for (int c = 0; c < n; ++c) {
            m.col_ptr[static_cast<std::size_t>(c) + 1] += m.col_ptr[static_cast<std::size_t>(c)];
        }
        return m;
    }
};

/// Sparse LU with partial pivoting (left-looking Gilbert-Peierls).
/// Factors P*A = L*U; solve() and solve_transpose() reuse the factorization.
template <typename T>
class SparseLu {
  public:
    static SparseLu factorize(const CscMatrix<T>& a) {
        SparseLu lu;
        lu.factorize_impl(a);
        return lu;
    }

    static SparseLu factorize(int n, const std::vector<Triplet<T>>& triplets) {
        return factorize(CscMatrix<T>::from_triplets(n, triplets));
    }

    int size() const { return n_; }

    /// Original row chosen as pivot for elimination step k.
    int pivot_row(int k) const { return prow_[static_cast<std::size_t>(k)]; }

    std::vector<T> solve(const std::vector<T>& b) const {
        std::vector<T> z(static_cast<std::size_t>(n_));
        for (int k = 0; k < n_; ++k) z[static_cast<std::size_t>(k)] = b[static_cast<std::size_t>(prow_[static_cast<std::size_t>(k)])];
        // L z' = z, unit diagonal, column order.
        for (int k = 0; k < n_; ++k) {
            T zk = z[static_cast<std::size_t>(k)];
            if (zk == T{}) continue;
            for (const auto& [r, lv] : lcol_[static_cast<std::size_t>(k)]) {
                z[static_cast<std::size_t>(pinv_[static_cast<std::size_t>(r)])] -= lv * zk;
            }
        }
        // U x = z, column order, diagonals in udiag_.
        std::vector<T> x(static_cast<std::size_t>(n_));
        for (int j = n_ - 1; j >= 0; --j) {
            T xj = z[static_cast<std::size_t>(j)] / udiag_[static_cast<std::size_t>(j)];
            x[static_cast<std::size_t>(j)] = xj;
            if (xj == T{}) continue;
            for (const auto& [i, uv] : ucol_[static_cast<std::size_t>(j)]) {
                z[static_cast<std::size_t>(i)] -= uv * xj;
            }
        }
        return x;
    }

    /// Solves A^T y = c (plain transpose, no conjugation).
    std::vector<T> solve_transpose(const std::vector<T>& c) const {
        // U^T z = c: forward over columns of U (rows of U^T).
        std::vector<T> z(static_cast<std::size_t>(n_));
        for (int j = 0; j < n_; ++j) {
            T acc = c[static_cast<std::size_t>(j)];
            for (const auto& [i, uv] : ucol_[static_cast<std::size_t>(j)]) {
                acc -= uv * z[static_cast<std::size_t>(i)];
            }
            z[static_cast<std::size_t>(j)] = acc / udiag_[static_cast<std::size_t>(j)];
        }
        // L^T t = z: backward, unit diagonal.
        std::vector<T> t(static_cast<std::size_t>(n_));
        for (int k = n_ - 1; k >= 0; --k) {
            T acc = z[static_cast<std::size_t>(k)];
            for (const auto& [r, lv] : lcol_[static_cast<std::size_t>(k)]) {
                acc -= lv * t[static_cast<std::size_t>(pinv_[static_cast<std::size_t>(r)])];
            }
            t[static_cast<std::size_t>(k)] = acc;
        }
        // y = P^T t.
        std::vector<T> y(static_cast<std::size_t>(n_));
        for (int k = 0; k < n_; ++k) y[static_cast<std::size_t>(prow_[static_cast<std::size_t>(k)])] = t[static_cast<std::size_t>(k)];
        return y;
    }

  private:
    int n_ = 0;
    std::vector<std::vector<std::pair<int, T>>> lcol_;  // (original row, value), value pre-divided
    std::vector<std::vector<std::pair<int, T>>> ucol_;  // (pivot index < j, value)
    std::vector<T> udiag_;
    std::vector<int> prow_;  // pivot step -> original row
    std::vector<int> pinv_;  // original row -> pivot step

    void factorize_impl(const CscMatrix<T>& a) {
        n_ = a.n;
        lcol_.assign(static_cast<std::size_t>(n_), {});
        ucol_.assign(static_cast<std::size_t>(n_), {});
        udiag_.assign(static_cast<std::size_t>(n_), T{});
        prow_.assign(static_cast<std::size_t>(n_), -1);
        pinv_.assign(static_cast<std::size_t>(n_), -1);

        double max_abs = 0.0;
        for (const T& v : a.values) max_abs = std::max(max_abs, detail::magnitude(v));
        const double singular_tol = max_abs * 1e-14;

        std::vector<T> work(static_cast<std::size_t>(n_), T{});
        std::vector<char> in_pattern(static_cast<std::size_t>(n_), 0);
        std::vector<char> visited(static_cast<std::size_t>(n_), 0);
        std::vector<int> pattern;
        std::vector<int> topo;

        for (int j = 0; j < n_; ++j) {
            pattern.clear();
            topo.clear();

            // Scatter A(:, j) and find reachable eliminated columns (DFS on L).
            for (int p = a.col_ptr[static_cast<std::size_t>(j)]; p < a.col_ptr[static_cast<std::size_t>(j) + 1]; ++p) {
                int r = a.row_idx[static_cast<std::size_t>(p)];
                work[static_cast<std::size_t>(r)] += a.values[static_cast<std::size_t>(p)];
                if (!in_pattern[static_cast<std::size_t>(r)]) {
                    in_pattern[static_cast<std::size_t>(r)] = 1;
                    pattern.push_back(r);
                    dfs_reach(r, visited, in_pattern, pattern, topo);
                }
            }
            // dfs_reach appends columns in postorder; ascending pivot order needs a sort.
            std::sort(topo.begin(), topo.end());

            for (int k : topo) {
                int prow = prow_[static_cast<std::size_t>(k)];
                T ukj = work[static_cast<std::size_t>(prow)];
                if (ukj != T{}) {
                    ucol_[static_cast<std::size_t>(j)].emplace_back(k, ukj);
                    for (const auto& [r, lv] : lcol_[static_cast<std::size_t>(k)]) {
                        work[static_cast<std::size_t>(r)] -= lv * ukj;
                    }
                }
                visited[static_cast<std::size_t>(k)] = 0;
            }

            // Pivot: largest magnitude among rows not yet assigned.
            int best = -1;
            double best_mag = -1.0;
            for (int r : pattern) {
                if (pinv_[static_cast<std::size_t>(r)] >= 0) continue;
                double m = detail::magnitude(work[static_cast<std::size_t>(r)]);
                if (m > best_mag) {
                    best_mag = m;
                    best = r;
                }
            }
            if (best < 0 || best_mag <= singular_tol || best_mag == 0.0) {
                throw SingularMatrixError(j);
            }
            prow_[static_cast<std::size_t>(j)] = best;
            pinv_[static_cast<std::size_t>(best)] = j;
            T piv = work[static_cast<std::size_t>(best)];
            udiag_[static_cast<std::size_t>(j)] = piv;
            for (int r : pattern) {
                if (pinv_[static_cast<std::size_t>(r)] < 0) {
                    T v = work[static_cast<std::size_t>(r)];
                    if (v != T{}) lcol_[static_cast<std::size_t>(j)].emplace_back(r, v / piv);
                }
                work[static_cast<std::size_t>(r)] = T{};
                in_pattern[static_cast<std::size_t>(r)] = 0;
            }
        }
    }

    // Depth-first walk from original row r through already-eliminated columns.
    void dfs_reach(int r, std::vector<char>& visited, std::vector<char>& in_pattern,
                   std::vector<int>& pattern, std::vector<int>& topo) {
        int k = pinv_[static_cast<std::size_t>(r)];
        if (k < 0 || visited[static_cast<std::size_t>(k)]) return;
        visited[static_cast<std::size_t>(k)] = 1;
        for (const auto& [rr, lv] : lcol_[static_cast<std::size_t>(k)]) {
            (void)lv;
            if (!in_pattern[static_cast<std::size_t>(rr)]) {
                in_pattern[static_cast<std::size_t>(rr)] = 1;
                pattern.push_back(rr);
            }
            dfs_reach(rr, visited, in_pattern, pattern, topo);
        }
        topo.push_back(k);
    }
};

using RealLu = SparseLu<double>;
using ComplexLu = SparseLu<std::complex<double>>;

}  // namespace gradnet::sparse
