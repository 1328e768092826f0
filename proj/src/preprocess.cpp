#include "nasr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "nasr/error.hpp"

namespace nasr {

void EegRecording::validate() const {
    if (data.rows() < 2) throw DataError("recording needs at least 2 channels");
    if (data.cols() < 1) throw DataError("recording has no samples");
    if (!(fs > 0.0) || !std::isfinite(fs)) throw DataError("sampling rate must be positive");
    if (channel_labels.size() != data.rows())
        throw DataError("channel label count " + std::to_string(channel_labels.size()) +
                        " does not match " + std::to_string(data.rows()) + " channels");
    for (double v : data.values())
        if (!std::isfinite(v)) throw DataError("recording contains non-finite samples");
}

WindowBatch WindowBatch::subset(const std::vector<std::size_t>& indices) const {
    WindowBatch out;
    out.hop = hop;
    out.windows.reserve(indices.size());
    if (labels) out.labels.emplace();
    for (std::size_t i : indices) {
        out.windows.push_back(windows.at(i));
        out.window_start_indices.push_back(window_start_indices.at(i));
        if (labels) out.labels->push_back(labels->at(i));
    }
    return out;
}

WindowBatch WindowBatch::slice(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    return subset(idx);
}

// ============================================================================
// Filter design
// ============================================================================

std::vector<Biquad> design_butterworth_bandpass(double low_hz, double high_hz, double fs, int order) {
    if (!(fs > 0.0)) throw ParameterError("sampling rate must be positive");
    if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < fs / 2.0))
        throw ParameterError("band edges must satisfy 0 < low < high < fs/2");
    if (order < 2 || order % 2 != 0) throw ParameterError("band-pass order must be even and >= 2");

    using cd = std::complex<double>;
    const int n = order / 2;
    // Prewarped analog edges for the bilinear map s = (z - 1) / (z + 1).
    const double wl = std::tan(std::numbers::pi * low_hz / fs);
    const double wh = std::tan(std::numbers::pi * high_hz / fs);
    const double bw = wh - wl;
    const double w0sq = wl * wh;

    std::vector<cd> zpoles;
    zpoles.reserve(2 * n);
    for (int k = 0; k < n; ++k) {
        const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1.0) / (2.0 * n));
        const cd disc = std::sqrt(p * p * bw * bw - 4.0 * w0sq);
        for (const cd s : {(p * bw + disc) / 2.0, (p * bw - disc) / 2.0})
            zpoles.push_back((1.0 + s) / (1.0 - s));
    }

    constexpr double imag_tol = 1e-12;
    std::vector<Biquad> sos;
    std::vector<double> real_poles;
    for (const cd& z : zpoles) {
        if (std::abs(z.imag()) <= imag_tol) {
            real_poles.push_back(z.real());
        } else if (z.imag() > 0.0) {
            sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
        }
    }
    std::sort(real_poles.begin(), real_poles.end());
    for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
        const double r1 = real_poles[i], r2 = real_poles[i + 1];
        sos.push_back({1.0, 0.0, -1.0, -(r1 + r2), r1 * r2});
    }
    if (sos.size() != static_cast<std::size_t>(n))
        throw NumericalError("pole pairing produced an inconsistent section count");

    // Unit gain at the geometric band centre.
    const double center_hz = fs * std::atan(std::sqrt(w0sq)) / std::numbers::pi;
    const double g = sos_magnitude(sos, center_hz, fs);
    const double per_section = std::pow(1.0 / g, 1.0 / n);
    for (auto& s : sos) {
        s.b0 *= per_section;
        s.b1 *= per_section;
        s.b2 *= per_section;
    }
    return sos;
}

double sos_magnitude(const std::vector<Biquad>& sos, double freq_hz, double fs) {
    using cd = std::complex<double>;
    const cd zinv = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / fs);
    cd h = 1.0;
    for (const auto& s : sos) {
        const cd num = s.b0 + s.b1 * zinv + s.b2 * zinv * zinv;
        const cd den = 1.0 + s.a1 * zinv + s.a2 * zinv * zinv;
        h *= num / den;
    }
    return std::abs(h);
}

std::vector<double> sos_filter(const std::vector<Biquad>& sos, const std::vector<double>& x,
                               std::optional<double> steady_input) {
    std::vector<double> y = x;
    double u = steady_input.value_or(0.0);
    for (const auto& s : sos) {
        double z1 = 0.0, z2 = 0.0;
        if (steady_input) {
            // Transposed direct form II state that holds a constant input u forever.
            const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
            const double yss = dc * u;
            z2 = s.b2 * u - s.a2 * yss;
            z1 = s.b1 * u - s.a1 * yss + z2;
            u = yss;
        }
        for (double& v : y) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
    return y;
}

std::vector<double> sos_filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                                 std::size_t pad) {
    const std::size_t t = x.size();
    if (t == 0) return {};
    pad = std::min(pad, t - 1);

    std::vector<double> ext;
    ext.reserve(t + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[t - 1 - i]);

    auto fwd = sos_filter(sos, ext, ext.front());
    std::reverse(fwd.begin(), fwd.end());
    auto bwd = sos_filter(sos, fwd, fwd.front());
    std::reverse(bwd.begin(), bwd.end());
    return {bwd.begin() + static_cast<std::ptrdiff_t>(pad),
            bwd.begin() + static_cast<std::ptrdiff_t>(pad + t)};
}

EegRecording bandpass_filter(const EegRecording& rec, double low_hz, double high_hz, int order) {
    for (double v : rec.data.values())
        if (!std::isfinite(v)) throw DataError("cannot filter non-finite samples");
    const auto sos = design_butterworth_bandpass(low_hz, high_hz, rec.fs, order);
    const std::size_t pad = 3 * static_cast<std::size_t>(order) * 2;

    EegRecording out = rec;
    std::vector<double> lane(rec.samples());
    for (std::size_t c = 0; c < rec.channels(); ++c) {
        auto src = rec.data.row(c);
        std::copy(src.begin(), src.end(), lane.begin());
        const auto filtered = sos_filtfilt(sos, lane, pad);
        std::copy(filtered.begin(), filtered.end(), out.data.row(c).begin());
    }
    return out;
}

// ============================================================================
// Windowing
// ============================================================================

WindowBatch make_windows(const EegRecording& rec, std::size_t w, std::size_t hop) {
    if (hop < 1) throw ParameterError("hop must be >= 1");
    if (w < 1) throw ParameterError("window length must be >= 1");
    const std::size_t t = rec.samples();
    if (w > t)
        throw DataError("window length " + std::to_string(w) + " exceeds recording length " +
                        std::to_string(t) + "; no windows");
    const std::size_t c = rec.channels();
    const std::size_t b = (t - w) / hop + 1;

    WindowBatch batch;
    batch.hop = hop;
    batch.windows.reserve(b);
    batch.window_start_indices.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t start = i * hop;
        Matrix win(c, w);
        for (std::size_t ch = 0; ch < c; ++ch) {
            auto src = rec.data.row(ch).subspan(start, w);
            std::copy(src.begin(), src.end(), win.row(ch).begin());
        }
        batch.windows.push_back(std::move(win));
        batch.window_start_indices.push_back(start);
    }
    return batch;
}

Matrix stitch_windows(const WindowBatch& batch) {
    if (batch.size() == 0) throw DataError("cannot stitch an empty batch");
    const std::size_t c = batch.channels(), w = batch.length(), hop = batch.hop;
    const std::size_t t = w + (batch.size() - 1) * hop;
    Matrix out(c, t);
    for (std::size_t ch = 0; ch < c; ++ch) {
        auto first = batch.windows[0].row(ch);
        std::copy(first.begin(), first.end(), out.row(ch).begin());
    }
    for (std::size_t b = 1; b < batch.size(); ++b) {
        const std::size_t dst = w + (b - 1) * hop;
        for (std::size_t ch = 0; ch < c; ++ch) {
            auto src = batch.windows[b].row(ch).subspan(w - hop, hop);
            std::copy(src.begin(), src.end(), out.row(ch).begin() + static_cast<std::ptrdiff_t>(dst));
        }
    }
    return out;
}

// ============================================================================
// Clean reference statistics
// ============================================================================

namespace {

ChannelStats channel_moments(const WindowBatch& batch, const std::vector<bool>* include) {
    const std::size_t c = batch.channels();
    ChannelStats st{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    std::size_t n = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (include && !(*include)[b]) continue;
        n += batch.length();
        for (std::size_t ch = 0; ch < c; ++ch)
            for (double v : batch.windows[b].row(ch)) st.mu[ch] += v;
    }
    for (auto& m : st.mu) m /= static_cast<double>(n);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (include && !(*include)[b]) continue;
        for (std::size_t ch = 0; ch < c; ++ch)
            for (double v : batch.windows[b].row(ch)) {
                const double d = v - st.mu[ch];
                st.sigma[ch] += d * d;
            }
    }
    for (auto& s : st.sigma) s = std::max(std::sqrt(s / static_cast<double>(n)), kSigmaFloor);
    return st;
}

}  // namespace

std::vector<bool> detect_clean_windows(const WindowBatch& batch) {
    if (batch.size() == 0) throw DataError("clean-window detection needs at least one window");
    const auto st = channel_moments(batch, nullptr);
    std::vector<bool> clean(batch.size(), true);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (std::size_t ch = 0; ch < batch.channels() && clean[b]; ++ch) {
            const double lo = st.mu[ch] - kCleanBoundSigmas * st.sigma[ch];
            const double hi = st.mu[ch] + kCleanBoundSigmas * st.sigma[ch];
            for (double v : batch.windows[b].row(ch)) {
                if (v < lo || v > hi) {
                    clean[b] = false;
                    break;
                }
            }
        }
    }
    return clean;
}

ChannelStats compute_reference_stats(const WindowBatch& batch, const std::vector<bool>& clean) {
    if (clean.size() != batch.size())
        throw ParameterError("clean mask length does not match batch size");
    if (std::none_of(clean.begin(), clean.end(), [](bool v) { return v; }))
        throw CalibrationError(
            "no clean windows: every window exceeds mu +/- 3.5 sigma on some channel; relax the "
            "criterion or supply a cleaner calibration segment");
    return channel_moments(batch, &clean);
}

namespace {

void check_stats(const WindowBatch& batch, const ChannelStats& stats) {
    if (stats.mu.size() != batch.channels() || stats.sigma.size() != batch.channels())
        throw ParameterError("channel statistics do not match the batch channel count");
}

}  // namespace

WindowBatch zscore_normalize(const WindowBatch& batch, const ChannelStats& stats) {
    check_stats(batch, stats);
    WindowBatch out = batch;
    for (auto& win : out.windows)
        for (std::size_t ch = 0; ch < win.rows(); ++ch)
            for (double& v : win.row(ch)) v = (v - stats.mu[ch]) / stats.sigma[ch];
    return out;
}

WindowBatch zscore_denormalize(const WindowBatch& batch, const ChannelStats& stats) {
    check_stats(batch, stats);
    WindowBatch out = batch;
    for (auto& win : out.windows)
        for (std::size_t ch = 0; ch < win.rows(); ++ch)
            for (double& v : win.row(ch)) v = v * stats.sigma[ch] + stats.mu[ch];
    return out;
}

}  // namespace nasr
