#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nasr/matrix.hpp"

namespace nasr {

inline constexpr std::size_t kDefaultWindow = 256;
inline constexpr std::size_t kDefaultHop = 20;
inline constexpr double kSigmaFloor = 1e-8;
inline constexpr double kCleanBoundSigmas = 3.5;

/// Continuous multichannel signal, C channels x T samples.
struct EegRecording {
    Matrix data;
    double fs = 0.0;
    std::vector<std::string> channel_labels;

    std::size_t channels() const noexcept { return data.rows(); }
    std::size_t samples() const noexcept { return data.cols(); }

    /// Throws DataError when the shape, rate, labels or sample values are invalid.
    void validate() const;
};

/// Sliding windows (B x C x W). Every window is a C x W matrix.
struct WindowBatch {
    std::vector<Matrix> windows;
    std::optional<std::vector<int>> labels;
    std::vector<std::size_t> window_start_indices;
    std::size_t hop = kDefaultHop;

    std::size_t size() const noexcept { return windows.size(); }
    std::size_t channels() const noexcept { return windows.empty() ? 0 : windows.front().rows(); }
    std::size_t length() const noexcept { return windows.empty() ? 0 : windows.front().cols(); }

    /// Copies the windows at `indices` (labels and start indices follow).
    WindowBatch subset(const std::vector<std::size_t>& indices) const;
    WindowBatch slice(std::size_t begin, std::size_t end) const;
};

struct ChannelStats {
    std::vector<double> mu;
    std::vector<double> sigma;
};

// ---------------------------------------------------------------------------
// Butterworth band-pass, second-order sections
// ---------------------------------------------------------------------------

/// One biquad: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

/// `order` is the total band-pass order (even); the analog prototype has
/// order/2 poles, so the cascade holds order/2 sections.
std::vector<Biquad> design_butterworth_bandpass(double low_hz, double high_hz, double fs, int order);

/// Single-pass magnitude of a cascade at `freq_hz`.
double sos_magnitude(const std::vector<Biquad>& sos, double freq_hz, double fs);

/// Causal cascade filter with optional initial state for a steady input `x0`.
std::vector<double> sos_filter(const std::vector<Biquad>& sos, const std::vector<double>& x,
                               std::optional<double> steady_input = std::nullopt);

/// Forward-backward filtering with odd-symmetric extension of `pad` samples.
std::vector<double> sos_filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                                 std::size_t pad);

EegRecording bandpass_filter(const EegRecording& rec, double low_hz, double high_hz, int order);

// ---------------------------------------------------------------------------
// Windowing, clean-segment detection, normalization
// ---------------------------------------------------------------------------

WindowBatch make_windows(const EegRecording& rec, std::size_t w = kDefaultWindow,
                         std::size_t hop = kDefaultHop);

/// Inverse of make_windows: first window whole, then the trailing `hop`
/// samples of every later window.
Matrix stitch_windows(const WindowBatch& batch);

std::vector<bool> detect_clean_windows(const WindowBatch& batch);

ChannelStats compute_reference_stats(const WindowBatch& batch, const std::vector<bool>& clean);

WindowBatch zscore_normalize(const WindowBatch& batch, const ChannelStats& stats);
WindowBatch zscore_denormalize(const WindowBatch& batch, const ChannelStats& stats);

}  // namespace nasr
