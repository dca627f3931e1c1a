#include "gridcascade/dense.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace gridcascade::dense {

namespace {
std::atomic<bool> g_parallel{true};

inline double cell(const Matrix& m, Trans t, int r, int c) {
    return t == Trans::None ? m[r][c] : m[c][r];
}
}  // namespace

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

static void matmul_dims(const Matrix& a, Trans ta, const Matrix& b, Trans tb,
                        int& m, int& k, int& n) {
    m = ta == Trans::None ? a.rows : a.cols;
    k = ta == Trans::None ? a.cols : a.rows;
    const int kb = tb == Trans::None ? b.rows : b.cols;
    n = tb == Trans::None ? b.cols : b.rows;
    if (k != kb) throw std::invalid_argument("matmul: inner dimensions differ");
}

void matmul_serial(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c) {
    int m, k, n;
    matmul_dims(a, ta, b, tb, m, k, n);
    c = Matrix(m, n);
    for (int i = 0; i < m; ++i) {
        double* out = c[i];
        for (int p = 0; p < k; ++p) {
            const double av = cell(a, ta, i, p);
            if (tb == Trans::None) {
                const double* brow = b[p];
                for (int j = 0; j < n; ++j) out[j] += av * brow[j];
            } else {
                for (int j = 0; j < n; ++j) out[j] += av * b[j][p];
            }
        }
    }
}

void matmul(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c) {
    int m, k, n;
    matmul_dims(a, ta, b, tb, m, k, n);
    c = Matrix(m, n);
    const bool par = parallel_enabled() && static_cast<long>(m) * k * n > 8192;
#pragma omp parallel for schedule(static) if (par)
    for (int i = 0; i < m; ++i) {
        double* out = c[i];
        for (int p = 0; p < k; ++p) {
            const double av = cell(a, ta, i, p);
            if (tb == Trans::None) {
                const double* brow = b[p];
                for (int j = 0; j < n; ++j) out[j] += av * brow[j];
            } else {
                for (int j = 0; j < n; ++j) out[j] += av * b[j][p];
            }
        }
    }
}

namespace {

template <bool Parallel>
bool lu_factor_impl(Matrix& a, std::vector<int>& piv) {
    if (a.rows != a.cols) throw std::invalid_argument("lu_factor: matrix not square");
    const int n = a.rows;
    piv.resize(n);
    for (int k = 0; k < n; ++k) {
        int p = k;
        double best = std::fabs(a[k][k]);
        for (int i = k + 1; i < n; ++i) {
            const double v = std::fabs(a[i][k]);
            if (v > best) {
                best = v;
                p = i;
            }
        }
        if (!(best > 1e-13)) return false;
        piv[k] = p;
        if (p != k) {
            for (int j = 0; j < n; ++j) std::swap(a[k][j], a[p][j]);
        }
        const double pivot = a[k][k];
        const double* krow = a[k];
        // Row updates below the pivot are independent of each other.
#pragma omp parallel for schedule(static) if (Parallel && n - k > 64)
        for (int i = k + 1; i < n; ++i) {
            double* irow = a[i];
            const double factor = irow[k] / pivot;
            irow[k] = factor;
            for (int j = k + 1; j < n; ++j) irow[j] -= factor * krow[j];
        }
    }
    return true;
}

}  // namespace

bool lu_factor_serial(Matrix& a, std::vector<int>& piv) {
    return lu_factor_impl<false>(a, piv);
}

bool lu_factor(Matrix& a, std::vector<int>& piv) {
    if (parallel_enabled()) return lu_factor_impl<true>(a, piv);
    return lu_factor_impl<false>(a, piv);
}

void lu_back_substitute(const Matrix& lu, const std::vector<int>& piv,
                        std::span<double> b) {
    const int n = lu.rows;
    // stored multipliers refer to the final row order, so permute b first
    for (int k = 0; k < n; ++k) {
        if (piv[k] != k) std::swap(b[k], b[piv[k]]);
    }
    for (int k = 0; k < n; ++k) {
        for (int i = k + 1; i < n; ++i) b[i] -= lu[i][k] * b[k];
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) b[i] -= lu[i][j] * b[j];
        b[i] /= lu[i][i];
    }
}

bool solve_linear_serial(Matrix a, std::span<double> b) {
    std::vector<int> piv;
    if (!lu_factor_serial(a, piv)) return false;
    lu_back_substitute(a, piv, b);
    return true;
}

bool solve_linear(Matrix a, std::span<double> b) {
    std::vector<int> piv;
    if (!lu_factor(a, piv)) return false;
    lu_back_substitute(a, piv, b);
    return true;
}

}  // namespace gridcascade::dense
