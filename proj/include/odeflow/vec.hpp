#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace odeflow {

// d-dimensional real state. All numerics in the library run on plain
// double vectors; structure (matrices, parameter sets) lives in the types
// that own them.
using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
    int rows = 0;
    int cols = 0;
    Vec a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void check_finite(const Vec& v, const char* what) {
    if (!all_finite(v)) throw std::runtime_error(std::string(what) + ": non-finite entry");
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double max_abs(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

// y = A x
inline void matvec(const Mat& m, const Vec& x, Vec& y) {
    y.assign(static_cast<std::size_t>(m.rows), 0.0);
    for (int i = 0; i < m.rows; ++i) {
        double s = 0.0;
        const double* row = m.a.data() + static_cast<std::size_t>(i) * m.cols;
        for (int j = 0; j < m.cols; ++j) s += row[j] * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = s;
    }
}

// y = A^T x
inline void matvec_t(const Mat& m, const Vec& x, Vec& y) {
    y.assign(static_cast<std::size_t>(m.cols), 0.0);
    for (int i = 0; i < m.rows; ++i) {
        const double* row = m.a.data() + static_cast<std::size_t>(i) * m.cols;
        const double xi = x[static_cast<std::size_t>(i)];
        for (int j = 0; j < m.cols; ++j) y[static_cast<std::size_t>(j)] += row[j] * xi;
    }
}

}  // namespace odeflow
