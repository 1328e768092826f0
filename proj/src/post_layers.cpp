#include "nasr/post_layers.hpp"

#include <algorithm>

#include "nasr/error.hpp"

namespace nasr {

void ScalingWeights::project() {
    for (double& v : w) v = std::max(v, 0.0);
}

namespace {

void check_mask(const Matrix& x, std::span<const std::uint8_t> mask) {
    if (mask.size() != x.rows()) throw ParameterError("mask length does not match channels");
}

}  // namespace

Matrix weighted_reconstruction(const Matrix& xhat, std::span<const std::uint8_t> mask,
                               const ScalingWeights& weights) {
    check_mask(xhat, mask);
    if (weights.w.size() != xhat.rows())
        throw ParameterError("scaling weight length does not match channels");
    Matrix out = xhat;
    for (std::size_t c = 0; c < xhat.rows(); ++c) {
        if (!mask[c]) continue;
        const double g = weights.w[c];
        for (double& v : out.row(c)) v *= g;
    }
    return out;
}

std::vector<double> weighted_reconstruction_backward(const Matrix& upstream, const Matrix& xhat,
                                                     std::span<const std::uint8_t> mask) {
    check_mask(xhat, mask);
    std::vector<double> dw(xhat.rows(), 0.0);
    for (std::size_t c = 0; c < xhat.rows(); ++c) {
        if (!mask[c]) continue;
        auto g = upstream.row(c);
        auto x = xhat.row(c);
        double acc = 0.0;
        for (std::size_t t = 0; t < x.size(); ++t) acc += g[t] * x[t];
        dw[c] = acc;
    }
    return dw;
}

Matrix weighted_reconstruction_input_grad(const Matrix& upstream, std::span<const std::uint8_t> mask,
                                          const ScalingWeights& weights) {
    return weighted_reconstruction(upstream, mask, weights);
}

namespace {

double reference_divisor(std::size_t channels, ReferenceDenominator denom) {
    return denom == ReferenceDenominator::c_plus_one ? static_cast<double>(channels + 1)
                                                     : static_cast<double>(channels);
}

}  // namespace

Matrix average_rereference(const Matrix& x, ReferenceDenominator denom) {
    if (x.rows() < 1) throw ParameterError("re-referencing needs at least one channel");
    const double div = reference_divisor(x.rows(), denom);
    std::vector<double> ref(x.cols(), 0.0);
    for (std::size_t c = 0; c < x.rows(); ++c) {
        auto row = x.row(c);
        for (std::size_t t = 0; t < x.cols(); ++t) ref[t] += row[t];
    }
    for (double& r : ref) r /= div;
    Matrix out = x;
    for (std::size_t c = 0; c < x.rows(); ++c) {
        auto row = out.row(c);
        for (std::size_t t = 0; t < x.cols(); ++t) row[t] -= ref[t];
    }
    return out;
}

Matrix average_rereference_backward(const Matrix& upstream, ReferenceDenominator denom) {
    return average_rereference(upstream, denom);
}

}  // namespace nasr
