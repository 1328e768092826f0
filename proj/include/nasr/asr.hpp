#pragma once

#include <cstdint>
#include <vector>

#include "nasr/matrix.hpp"
#include "nasr/preprocess.hpp"

namespace nasr {

// Simplified Euclidean ASR baseline: principal components of a clean
// calibration recording, per-component RMS statistics over short
// sub-windows, and zeroing of components whose window RMS exceeds
// mu + cutoff * sigma. No RANSAC calibration, no Riemannian variant and no
// interpolation from the calibration covariance; rejected components are
// simply removed.

struct AsrModel {
    Matrix v0;                        // columns: calibration eigenvectors
    std::vector<double> comp_mu;      // mean sub-window RMS per component
    std::vector<double> comp_sigma;   // std of sub-window RMS per component
    double cutoff = 20.0;

    std::size_t channels() const noexcept { return v0.rows(); }
    double threshold(std::size_t component) const {
        return comp_mu[component] + cutoff * comp_sigma[component];
    }
};

struct AsrOptions {
    double subwindow_seconds = 0.5;
    double subwindow_overlap = 0.5;
    double min_seconds = 10.0;
    double recommended_seconds = 60.0;
};

AsrModel asr_calibrate(const EegRecording& calib, double cutoff = 20.0, const AsrOptions& opt = {});

/// Per-component RMS of projected calibration sub-windows (rows: sub-windows).
std::vector<std::vector<double>> asr_subwindow_rms(const AsrModel& model, const EegRecording& calib,
                                                   const AsrOptions& opt = {});

struct AsrResult {
    Matrix cleaned;
    std::vector<std::uint8_t> rejected;  // per component
};

AsrResult asr_transform_detailed(const AsrModel& model, const Matrix& window);
Matrix asr_transform(const AsrModel& model, const Matrix& window);

}  // namespace nasr
