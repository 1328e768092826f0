#include "nasr/asr.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "nasr/error.hpp"
#include "nasr/linalg.hpp"

namespace nasr {

namespace {

std::size_t subwindow_length(double fs, const AsrOptions& opt) {
    return std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(opt.subwindow_seconds * fs)));
}

}  // namespace

std::vector<std::vector<double>> asr_subwindow_rms(const AsrModel& model, const EegRecording& calib,
                                                   const AsrOptions& opt) {
    const std::size_t c = calib.channels(), t = calib.samples();
    const std::size_t len = subwindow_length(calib.fs, opt);
    const std::size_t step = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(static_cast<double>(len) * (1.0 - opt.subwindow_overlap))));

    // Project the whole calibration once: y = V0^T x.
    Matrix y(c, t);
    for (std::size_t j = 0; j < c; ++j) {
        auto yr = y.row(j);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double w = model.v0(ch, j);
            auto xr = calib.data.row(ch);
            for (std::size_t s = 0; s < t; ++s) yr[s] += w * xr[s];
        }
    }

    std::vector<std::vector<double>> rms;
    for (std::size_t start = 0; start + len <= t; start += step) {
        std::vector<double> r(c);
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t s = start; s < start + len; ++s) acc += y(j, s) * y(j, s);
            r[j] = std::sqrt(acc / static_cast<double>(len));
        }
        rms.push_back(std::move(r));
    }
    return rms;
}

AsrModel asr_calibrate(const EegRecording& calib, double cutoff, const AsrOptions& opt) {
    calib.validate();
    const double seconds = static_cast<double>(calib.samples()) / calib.fs;
    if (seconds < opt.min_seconds)
        throw CalibrationError("ASR calibration needs at least " + std::to_string(opt.min_seconds) +
                               " s of data, got " + std::to_string(seconds) + " s");
    if (seconds < opt.recommended_seconds)
        std::clog << "warning: ASR calibration uses " << seconds << " s; about "
                  << opt.recommended_seconds << " s of clean data is recommended\n";
    if (!(cutoff >= 0.0)) throw ParameterError("ASR cutoff must be >= 0");

    const auto cov = window_covariance(calib.data, CovarianceSegment::full());
    auto eig = sym_eig(cov, EigenSolver::jacobi);

    AsrModel model;
    model.v0 = std::move(eig.v);
    model.cutoff = cutoff;

    const auto rms = asr_subwindow_rms(model, calib, opt);
    if (rms.empty()) throw CalibrationError("calibration shorter than one RMS sub-window");
    const std::size_t c = calib.channels();
    model.comp_mu.assign(c, 0.0);
    model.comp_sigma.assign(c, 0.0);
    for (const auto& r : rms)
        for (std::size_t j = 0; j < c; ++j) model.comp_mu[j] += r[j];
    for (auto& m : model.comp_mu) m /= static_cast<double>(rms.size());
    for (const auto& r : rms)
        for (std::size_t j = 0; j < c; ++j) {
            const double d = r[j] - model.comp_mu[j];
            model.comp_sigma[j] += d * d;
        }
    for (auto& s : model.comp_sigma)
        s = std::max(std::sqrt(s / static_cast<double>(rms.size())), kSigmaFloor);
    return model;
}

AsrResult asr_transform_detailed(const AsrModel& model, const Matrix& window) {
    const std::size_t c = window.rows(), w = window.cols();
    if (c != model.channels()) throw ParameterError("window channels do not match the ASR model");

    // Component activations, one row per component.
    Matrix y(c, w);
    for (std::size_t j = 0; j < c; ++j) {
        auto yr = y.row(j);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double coef = model.v0(ch, j);
            auto xr = window.row(ch);
            for (std::size_t t = 0; t < w; ++t) yr[t] += coef * xr[t];
        }
    }

    AsrResult out{window, std::vector<std::uint8_t>(c, 0)};
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (double v : y.row(j)) acc += v * v;
        const double rms = std::sqrt(acc / static_cast<double>(w));
        if (rms > model.threshold(j)) {
            out.rejected[j] = 1;
            any = true;
        }
    }
    if (!any) return out;

    // x_hat = V0 y_kept = x - sum over rejected r of v_r y_r
    for (std::size_t j = 0; j < c; ++j) {
        if (!out.rejected[j]) continue;
        auto yr = y.row(j);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double coef = model.v0(ch, j);
            auto dst = out.cleaned.row(ch);
            for (std::size_t t = 0; t < w; ++t) dst[t] -= coef * yr[t];
        }
    }
    return out;
}

Matrix asr_transform(const AsrModel& model, const Matrix& window) {
    return asr_transform_detailed(model, window).cleaned;
}

}  // namespace nasr
