#include "stag/matrix.hpp"

#include <cmath>
#include <string>

namespace stag {

bool Matrix::all_finite() const {
    for (double x : v_)
        if (!std::isfinite(x)) return false;
    return true;
}

double Matrix::max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
}

double Matrix::max_abs_diff(const Matrix& o) const {
    if (!same_shape(o)) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < v_.size(); ++i) m = std::max(m, std::abs(v_[i] - o.v_[i]));
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    const int m = a.rows(), k = a.cols(), p = b.cols();
    Matrix c(m, p, a.precision());
    for (int i = 0; i < m; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int kk = 0; kk < k; ++kk) {
            const double aik = ar[kk];
            const double* br = b.row(kk);
            for (int j = 0; j < p; ++j) cr[j] += aik * br[j];
        }
    }
    c.apply_precision();
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: inner dimensions differ");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Matrix c(m, n, a.precision());
    for (int i = 0; i < m; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int j = 0; j < n; ++j) {
            const double* br = b.row(j);
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk) s += ar[kk] * br[kk];
            cr[j] = s;
        }
    }
    c.apply_precision();
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw DimensionError("matmul_tn: inner dimensions differ");
    const int k = a.rows(), m = a.cols(), n = b.cols();
    Matrix c(m, n, a.precision());
    for (int kk = 0; kk < k; ++kk) {
        const double* ar = a.row(kk);
        const double* br = b.row(kk);
        for (int i = 0; i < m; ++i) {
            const double aki = ar[i];
            double* cr = c.row(i);
            for (int j = 0; j < n; ++j) cr[j] += aki * br[j];
        }
    }
    c.apply_precision();
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows(), a.precision());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

}  // namespace stag
