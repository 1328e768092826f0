#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nasr/matrix.hpp"
#include "nasr/preprocess.hpp"

namespace nasr::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = n(rng);
    return m;
}

/// B B^T for a random rows x rank factor; rank < n gives a singular matrix.
inline Matrix random_psd(std::size_t n, std::size_t rank, std::mt19937_64& rng) {
    const Matrix b = random_matrix(n, rank, rng);
    return matmul(b, b.transposed());
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

inline double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

inline EegRecording make_recording(Matrix data, double fs = 100.0) {
    EegRecording rec;
    rec.fs = fs;
    for (std::size_t c = 0; c < data.rows(); ++c) rec.channel_labels.push_back("ch" + std::to_string(c));
    rec.data = std::move(data);
    return rec;
}

inline double central_difference(const std::function<double(double)>& f, double x, double h = 1e-4) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor)
inline double rel_error(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double dot(const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    return s;
}

}  // namespace nasr::test
