#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nasr/matrix.hpp"

namespace nasr {

/// Learnable non-negative per-channel gains for reconstructed channels.
struct ScalingWeights {
    std::vector<double> w;

    static ScalingWeights ones(std::size_t channels) { return {std::vector<double>(channels, 1.0)}; }
    void project();
};

/// out = xhat * (1 - M) + xhat * (M * w); unmasked rows pass through.
Matrix weighted_reconstruction(const Matrix& xhat, std::span<const std::uint8_t> mask,
                               const ScalingWeights& weights);

/// dW[c] = M[c] * sum_t upstream[c,t] * xhat[c,t]
std::vector<double> weighted_reconstruction_backward(const Matrix& upstream, const Matrix& xhat,
                                                     std::span<const std::uint8_t> mask);

/// d out / d xhat applied to `upstream`.
Matrix weighted_reconstruction_input_grad(const Matrix& upstream, std::span<const std::uint8_t> mask,
                                          const ScalingWeights& weights);

enum class ReferenceDenominator {
    c_plus_one,  // r_t = sum_c x / (C + 1)
    c,           // plain channel mean
};

Matrix average_rereference(const Matrix& x,
                           ReferenceDenominator denom = ReferenceDenominator::c_plus_one);

/// Adjoint of average_rereference (the map is symmetric, so this is the same map).
Matrix average_rereference_backward(const Matrix& upstream,
                                    ReferenceDenominator denom = ReferenceDenominator::c_plus_one);

}  // namespace nasr
