#pragma once
// Row-major dense matrix and the kernels the power-flow solver and the
// networks run on. Each kernel keeps a plain serial reference next to the
// OpenMP variant; the parallel loops only split independent output rows, so
// serial and parallel results are bit-identical.

#include <cstddef>
#include <span>
#include <vector>

namespace gridcascade::dense {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double* operator[](int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* operator[](int r) const {
        return data.data() + static_cast<size_t>(r) * cols;
    }
    void fill(double v) { data.assign(data.size(), v); }
};

// Global switch for the OpenMP paths (tests and the benchmark flip it).
void set_parallel(bool on);
bool parallel_enabled();

enum class Trans { None, Yes };

// c = op(a) * op(b); c is resized.
void matmul_serial(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c);
void matmul(const Matrix& a, Trans ta, const Matrix& b, Trans tb, Matrix& c);

// In-place LU with partial pivoting; returns false on a singular matrix.
bool lu_factor_serial(Matrix& a, std::vector<int>& piv);
bool lu_factor(Matrix& a, std::vector<int>& piv);
void lu_back_substitute(const Matrix& lu, const std::vector<int>& piv,
                        std::span<double> b);

// Solves a*x = b in place of b (a is consumed). Returns false when singular.
bool solve_linear_serial(Matrix a, std::span<double> b);
bool solve_linear(Matrix a, std::span<double> b);

}  // namespace gridcascade::dense
