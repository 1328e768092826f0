#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nasr/linalg.hpp"
#include "nasr/matrix.hpp"
#include "nasr/preprocess.hpp"

namespace nasr {

/// Learnable thresholds K, L plus the fixed constants of the layer.
struct NasrParams {
    double k = 0.71;  // (0.9)^2 - k_offset
    double l = 0.5;
    double k_offset = 0.1;
    double tau_d = 20.0;
    double tau_l = 20.0;
    double eps = 1e-6;

    /// Throws ParameterError when k < 0, l outside [0,1] or k_offset < 0.1.
    void validate() const;
    /// Projects k onto [0, inf) and l onto [0, 1].
    void project();
};

/// How the hard masks enter the forward pass.
///  straight_through: forward uses round(soft), gradients use the soft sigmoid.
///  smooth: forward uses the soft values themselves (the surrogate); used by
///          finite-difference checks of the analytic gradient.
enum class MaskMode { straight_through, smooth };

struct NasrConfig {
    bool reconstruct_neighbors = false;
    bool covariance_full_window = false;
    Matrix adjacency;  // C x C, symmetric, zero diagonal; needed with reconstruct_neighbors
    std::size_t s_nonoverlap = kDefaultHop;
    EigenSolver solver = EigenSolver::tridiagonal_ql;
    MaskMode mode = MaskMode::straight_through;

    CovarianceSegment segment() const {
        return covariance_full_window ? CovarianceSegment::full()
                                      : CovarianceSegment::trailing_s(s_nonoverlap);
    }
    void validate(std::size_t channels) const;
};

struct MaskPair {
    std::vector<double> soft;
    std::vector<std::uint8_t> hard;
};

/// Round half up: 0.5 maps to 1.
inline std::uint8_t round_mask(double soft) { return soft >= 0.5 ? 1 : 0; }

double threshold(const NasrParams& params);

/// Check_c = th * sum_j |V(c, j)|.
std::vector<double> check_vector(double th, const Matrix& v);

MaskPair discard_mask(std::span<const double> d, std::span<const double> check,
                      const NasrParams& params);

/// Spread_c = sum_j (discard_j * V(c, j))^2.
std::vector<double> channel_spread(std::span<const double> discard, const Matrix& v);

MaskPair noise_mask(std::span<const double> spread, const NasrParams& params);

/// Clean-average fill of noisy channels, optionally refined from adjacent
/// channels. `noise` holds per-channel values in [0, 1].
Matrix reconstruct(const Matrix& x, std::span<const double> noise, const NasrConfig& config);
Matrix reconstruct(const Matrix& x, std::span<const std::uint8_t> noise, const NasrConfig& config);

/// Everything the backward pass needs from one window's forward pass.
struct WindowCache {
    EigenPair eig;
    std::vector<double> row_abs;
    std::vector<double> diff;
    double mean_abs_diff = 0.0;
    double denom = 0.0;
    std::vector<double> discard_soft;
    std::vector<double> discard_used;
    std::vector<double> spread;
    std::vector<double> noise_soft;
    std::vector<double> noise_used;
    double good_sum = 0.0;
    std::vector<double> clean_av;
    Matrix filled;        // X~ of the clean-average fill
    Matrix neighbor_avg;  // only with reconstruct_neighbors
};

struct WindowResult {
    Matrix recon;
    std::vector<std::uint8_t> noise_hard;
    WindowCache cache;
};

/// Eigendecomposition of the configured covariance segment of a window.
EigenPair window_spectrum(const Matrix& x, const NasrConfig& config);

/// One window through the layer. `spectrum`, when given, must be
/// window_spectrum(x, config); it depends only on the data so callers may
/// compute it once and reuse it across parameter updates.
WindowResult forward_window(const Matrix& x, const NasrParams& params, const NasrConfig& config,
                            const EigenPair* spectrum = nullptr);

struct InferResult {
    Matrix recon;
    std::vector<std::uint8_t> noise_hard;
};

/// Hard-mask forward without the backward cache; recon and mask equal those
/// of forward_window in straight_through mode.
InferResult infer_window(const Matrix& x, const NasrParams& params, const NasrConfig& config);

struct NasrGrads {
    double dk = 0.0;
    double dl = 0.0;
};

/// Parameter gradients from dLoss/dRecon. Eigenpairs are constants w.r.t. K and L.
NasrGrads backward_window(const Matrix& upstream, const Matrix& x, const WindowCache& cache,
                          const NasrParams& params, const NasrConfig& config);

struct NasrOutput {
    std::vector<Matrix> recon;
    std::vector<std::vector<std::uint8_t>> noise_mask;  // B x C (x 1)
    std::vector<std::vector<double>> discard_soft;
    std::vector<std::vector<double>> noise_soft;
    std::vector<Matrix> inputs;
    std::vector<WindowCache> cache;
};

NasrOutput forward(const WindowBatch& batch, const NasrParams& params, const NasrConfig& config);

/// Sums per-window gradients in window order. Throws UsageError without a cache.
NasrGrads backward(const std::vector<Matrix>& upstream, const NasrOutput& state,
                   const NasrParams& params, const NasrConfig& config);

}  // namespace nasr
