#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "stag/error.hpp"
#include "stag/rng.hpp"

namespace stag {

enum class Precision { Single, Double };

inline int precision_bytes(Precision p) { return p == Precision::Single ? 4 : 8; }

// Dense row-major real matrix. Values are held as doubles; the precision tag
// records the working precision of whoever produced the matrix. In single
// precision every operation result is rounded entry-wise to 32-bit before
// further use, which keeps runs deterministic in either mode.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, Precision prec = Precision::Double)
        : rows_(rows), cols_(cols), prec_(prec), v_(static_cast<std::size_t>(rows) * cols, 0.0) {
        if (rows < 0 || cols < 0) throw DimensionError("matrix dimensions must be non-negative");
    }
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = static_cast<int>(init.size());
        cols_ = rows_ ? static_cast<int>(init.begin()->size()) : 0;
        v_.reserve(static_cast<std::size_t>(rows_) * cols_);
        for (const auto& row : init) {
            if (static_cast<int>(row.size()) != cols_)
                throw DimensionError("ragged initializer for matrix");
            v_.insert(v_.end(), row.begin(), row.end());
        }
    }

    static Matrix full(int rows, int cols, double value, Precision prec = Precision::Double) {
        Matrix m(rows, cols, prec);
        for (double& x : m.v_) x = value;
        m.apply_precision();
        return m;
    }
    static Matrix identity(int n, Precision prec = Precision::Double) {
        Matrix m(n, n, prec);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
    // Entries drawn i.i.d. from U(lo, hi).
    static Matrix uniform(RngStream& rng, int rows, int cols, double lo, double hi,
                          Precision prec = Precision::Double) {
        Matrix m(rows, cols, prec);
        for (double& x : m.v_) x = rng.uniform(lo, hi);
        m.apply_precision();
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }
    Precision precision() const { return prec_; }
    void set_precision(Precision p) { prec_ = p; }

    double& at(int i, int j) { return v_[static_cast<std::size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return v_[static_cast<std::size_t>(i) * cols_ + j]; }
    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    double* row(int i) { return v_.data() + static_cast<std::size_t>(i) * cols_; }
    const double* row(int i) const { return v_.data() + static_cast<std::size_t>(i) * cols_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    // Round every entry to 32-bit when tagged single precision.
    void apply_precision() {
        if (prec_ == Precision::Single)
            for (double& x : v_) x = static_cast<double>(static_cast<float>(x));
    }

    bool all_finite() const;
    double max_abs() const;
    double max_abs_diff(const Matrix& o) const;

private:
    int rows_ = 0;
    int cols_ = 0;
    Precision prec_ = Precision::Double;
    std::vector<double> v_;
};

// Plain kernels shared by the tape; shapes are checked here.
Matrix matmul(const Matrix& a, const Matrix& b);
// a (m x k) times b^T where b is (n x k); result m x n.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T times b where a is (k x m) and b is (k x n); result m x n.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

}  // namespace stag
