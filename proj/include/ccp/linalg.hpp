#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ccp {

using Vec = std::vector<double>;

// Dense row-major matrix, the only tensor type the toolkit needs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    Vec row_vec(std::size_t r) const {
        return Vec(row(r), row(r) + cols);
    }

    void set_row(std::size_t r, const Vec& v) {
        if (v.size() != cols) throw std::invalid_argument("set_row: size mismatch");
        std::copy(v.begin(), v.end(), row(r));
    }
};

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double squared_distance(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double euclidean_distance(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("distance: size mismatch");
    return std::sqrt(squared_distance(a.data(), b.data(), a.size()));
}

inline double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace ccp
