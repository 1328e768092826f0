#include "nasr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "nasr/error.hpp"

namespace nasr {

std::string to_string(ArtifactKind kind) {
    switch (kind) {
        case ArtifactKind::blink: return "blink";
        case ArtifactKind::emg_burst: return "emg_burst";
        case ArtifactKind::electrode_pop: return "electrode_pop";
    }
    return "unknown";
}

ArtifactKind parse_artifact_kind(const std::string& name) {
    if (name == "blink") return ArtifactKind::blink;
    if (name == "emg_burst") return ArtifactKind::emg_burst;
    if (name == "electrode_pop") return ArtifactKind::electrode_pop;
    throw ParameterError("unknown artifact kind '" + name + "'");
}

ArtifactSpec ArtifactSpec::blink(double rate) {
    return {ArtifactKind::blink, rate, 5.0, 15.0, 0.3, 0.5, {"F3", "F1", "Fz", "F2", "F4"}, 0};
}

ArtifactSpec ArtifactSpec::emg_burst(double rate) {
    return {ArtifactKind::emg_burst, rate, 3.0, 8.0, 0.5, 1.0, {}, 1};
}

ArtifactSpec ArtifactSpec::electrode_pop(double rate) {
    return {ArtifactKind::electrode_pop, rate, 10.0, 30.0, 0.5, 1.5, {}, 1};
}

SynthSpec SynthSpec::standard() {
    SynthSpec s;
    s.artifacts = {ArtifactSpec::blink(6.0), ArtifactSpec::emg_burst(4.0), ArtifactSpec::electrode_pop(1.0)};
    return s;
}

void SynthSpec::validate(const Montage& montage) const {
    if (!(fs > 0.0)) throw ParameterError("fs must be positive");
    if (!(duration_s > 0.0)) throw ParameterError("duration must be positive");
    const double n = duration_s * fs;
    if (std::abs(n - std::round(n)) > 1e-6) throw ParameterError("duration * fs must be an integer sample count");
    if (channels < 2) throw ParameterError("need at least two channels");
    if (montage.size() != channels) throw ParameterError("montage size does not match the channel count");
    if (!(noise_amplitude > 0.0)) throw ParameterError("noise amplitude must be positive");
    if (!(shared_fraction >= 0.0 && shared_fraction <= 1.0)) throw ParameterError("shared fraction must be in [0, 1]");
    if (!(mu_low_hz > 0.0 && mu_low_hz < mu_high_hz && mu_high_hz < fs / 2)) throw ParameterError("bad mu band");
    if (!(erd_depth >= 0.0 && erd_depth <= 1.0)) throw ParameterError("ERD depth must be in [0, 1]");
    if (mu_sources.size() != 2) throw ParameterError("two mu sources are needed for two classes");
    for (const auto& l : mu_sources) montage.index_of(l);
    if (!(block_min_s > 0.0 && block_min_s <= block_max_s)) throw ParameterError("bad class block durations");
    if (window == 0 || hop == 0) throw ParameterError("window and hop must be positive");
    if (!(min_cover > 0.0 && min_cover <= 1.0)) throw ParameterError("min_cover must be in (0, 1]");
    for (const auto& a : artifacts) {
        if (!(a.rate_per_min >= 0.0)) throw ParameterError("artifact rates must be >= 0");
        if (!(a.amp_min > 0.0 && a.amp_min <= a.amp_max)) throw ParameterError("bad artifact amplitude range");
        if (!(a.dur_min_s > 0.0 && a.dur_min_s <= a.dur_max_s)) throw ParameterError("bad artifact duration range");
        for (const auto& l : a.channels) montage.index_of(l);
    }
}

namespace {

// Paul Kellet's refined pink-noise filter, normalised afterwards.
std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> out(n);
    double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
    // burn-in so the slow poles start near stationarity
    const std::size_t burn = 2000;
    for (std::size_t i = 0; i < n + burn; ++i) {
        const double w = g(rng);
        b0 = 0.99886 * b0 + w * 0.0555179;
        b1 = 0.99332 * b1 + w * 0.0750759;
        b2 = 0.96900 * b2 + w * 0.1538520;
        b3 = 0.86650 * b3 + w * 0.3104856;
        b4 = 0.55000 * b4 + w * 0.5329522;
        b5 = -0.7616 * b5 - w * 0.0168980;
        const double p = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
        b6 = w * 0.115926;
        if (i >= burn) out[i - burn] = p;
    }
    return out;
}

void normalize_unit(std::vector<double>& x) {
    if (x.empty()) return;
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    s = std::sqrt(s / static_cast<double>(x.size()));
    for (double& v : x) v = s > 0.0 ? (v - m) / s : 0.0;
}

std::vector<double> band_noise(std::size_t n, double low, double high, double fs, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    const std::size_t lead = static_cast<std::size_t>(fs);
    std::vector<double> w(n + lead);
    for (double& v : w) v = g(rng);
    const auto sos = design_butterworth_bandpass(low, high, fs, 4);
    auto y = sos_filter(sos, w);
    std::vector<double> out(y.begin() + static_cast<std::ptrdiff_t>(lead), y.end());
    normalize_unit(out);
    return out;
}

double distance(const Montage& m, std::size_t a, double x, double y) {
    return std::hypot(m.coords(a, 0) - x, m.coords(a, 1) - y);
}

}  // namespace

std::size_t window_count(std::size_t samples, std::size_t window, std::size_t hop) {
    if (window == 0 || hop == 0 || samples < window) return 0;
    return (samples - window) / hop + 1;
}

std::vector<int> label_windows(const std::vector<int>& sample_class, std::size_t window, std::size_t hop) {
    const std::size_t n = window_count(sample_class.size(), window, hop);
    std::vector<int> labels(n);
    for (std::size_t b = 0; b < n; ++b) labels[b] = sample_class[b * hop + window / 2];
    return labels;
}

std::vector<std::size_t> covered_windows(std::size_t onset, std::size_t length, std::size_t n_windows,
                                         std::size_t window, std::size_t hop, double min_cover) {
    std::vector<std::size_t> out;
    const std::size_t end = onset + length;
    for (std::size_t b = 0; b < n_windows; ++b) {
        const std::size_t seg_end = b * hop + window;
        const std::size_t seg_begin = seg_end - std::min(hop, window);
        const std::size_t lo = std::max(seg_begin, onset), hi = std::min(seg_end, end);
        if (hi <= lo) continue;
        if (static_cast<double>(hi - lo) >= min_cover * static_cast<double>(seg_end - seg_begin)) out.push_back(b);
    }
    return out;
}

std::vector<std::vector<CellTruth>> truth_cells(const std::vector<ArtifactEvent>& events, std::size_t n_windows,
                                                std::size_t channels, std::size_t window, std::size_t hop,
                                                double min_cover) {
    std::vector<std::vector<CellTruth>> cells(n_windows, std::vector<CellTruth>(channels, CellTruth::clean));
    const std::size_t seg = std::min(hop, window);
    for (const auto& e : events) {
        for (std::size_t b = 0; b < n_windows; ++b) {
            const std::size_t seg_end = b * hop + window, seg_begin = seg_end - seg;
            const std::size_t lo = std::max(seg_begin, e.onset), hi = std::min(seg_end, e.onset + e.length);
            if (hi <= lo) continue;
            const bool covered = static_cast<double>(hi - lo) >= min_cover * static_cast<double>(seg);
            for (std::size_t c : e.channels) {
                auto& cell = cells[b][c];
                if (covered) cell = CellTruth::injected;
                else if (cell == CellTruth::clean) cell = CellTruth::ambiguous;
            }
        }
    }
    return cells;
}

SynthResult synth_generate(const SynthSpec& spec, const Montage& montage, std::uint64_t seed) {
    spec.validate(montage);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t c = spec.channels;
    const auto t = static_cast<std::size_t>(std::llround(spec.duration_s * spec.fs));

    SynthResult out;
    out.clean = Matrix(c, t);

    // Background: independent pink noise plus broad pink sources.
    const double indep = spec.noise_amplitude * std::sqrt(1.0 - spec.shared_fraction);
    for (std::size_t ch = 0; ch < c; ++ch) {
        auto p = pink_noise(t, rng);
        normalize_unit(p);
        auto r = out.clean.row(ch);
        for (std::size_t s = 0; s < t; ++s) r[s] = indep * p[s];
    }
    if (spec.shared_fraction > 0.0 && spec.shared_sources > 0) {
        Matrix w(c, spec.shared_sources);
        std::vector<std::vector<double>> src;
        std::uniform_int_distribution<std::size_t> pick(0, c - 1);
        std::normal_distribution<double> jitter(0.0, 0.01);
        for (std::size_t k = 0; k < spec.shared_sources; ++k) {
            const std::size_t anchor = pick(rng);
            const double x = montage.coords(anchor, 0) + jitter(rng);
            const double y = montage.coords(anchor, 1) + jitter(rng);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double d = distance(montage, ch, x, y);
                w(ch, k) = std::exp(-d * d / (2.0 * spec.shared_spread_m * spec.shared_spread_m));
            }
            auto p = pink_noise(t, rng);
            normalize_unit(p);
            src.push_back(std::move(p));
        }
        for (std::size_t ch = 0; ch < c; ++ch) {
            double norm = 0.0;
            for (std::size_t k = 0; k < spec.shared_sources; ++k) norm += w(ch, k) * w(ch, k);
            const double scale = spec.noise_amplitude * std::sqrt(spec.shared_fraction) / std::sqrt(norm);
            auto r = out.clean.row(ch);
            for (std::size_t k = 0; k < spec.shared_sources; ++k) {
                const double a = scale * w(ch, k);
                for (std::size_t s = 0; s < t; ++s) r[s] += a * src[k][s];
            }
        }
    }

    // Class blocks.
    out.sample_class.assign(t, 0);
    {
        std::uniform_real_distribution<double> dur(spec.block_min_s, spec.block_max_s);
        std::size_t s = 0;
        while (s < t) {
            const int cls = unit(rng) < 0.5 ? 0 : 1;
            const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dur(rng) * spec.fs)));
            const std::size_t e = std::min(t, s + len);
            std::fill(out.sample_class.begin() + static_cast<std::ptrdiff_t>(s),
                      out.sample_class.begin() + static_cast<std::ptrdiff_t>(e), cls);
            s = e;
        }
    }

    // Mu rhythm sources, attenuated during the matching class.
    for (std::size_t k = 0; k < spec.mu_sources.size(); ++k) {
        const std::size_t anchor = montage.index_of(spec.mu_sources[k]);
        const double x = montage.coords(anchor, 0), y = montage.coords(anchor, 1);
        auto mu = band_noise(t, spec.mu_low_hz, spec.mu_high_hz, spec.fs, rng);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double d = distance(montage, ch, x, y);
            const double wgt = spec.mu_amplitude * std::exp(-d * d / (2.0 * spec.mu_spread_m * spec.mu_spread_m));
            if (wgt < 1e-6) continue;
            auto r = out.clean.row(ch);
            for (std::size_t s = 0; s < t; ++s) {
                const double env = out.sample_class[s] == static_cast<int>(k) ? 1.0 - spec.erd_depth : 1.0;
                r[s] += wgt * env * mu[s];
            }
        }
    }

    std::vector<double> bg_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<double> r(out.clean.row(ch).begin(), out.clean.row(ch).end());
        double m = 0.0;
        for (double v : r) m += v;
        m /= static_cast<double>(t);
        double s2 = 0.0;
        for (double v : r) s2 += (v - m) * (v - m);
        bg_std[ch] = std::sqrt(s2 / static_cast<double>(t));
    }

    // Artifacts.
    Matrix data = out.clean;
    const std::size_t n_windows = window_count(t, spec.window, spec.hop);
    for (const auto& a : spec.artifacts) {
        if (a.rate_per_min <= 0.0) continue;
        std::poisson_distribution<int> count(a.rate_per_min * spec.duration_s / 60.0);
        const int n_events = count(rng);
        std::vector<std::size_t> candidates;
        if (a.channels.empty()) {
            candidates.resize(c);
            for (std::size_t i = 0; i < c; ++i) candidates[i] = i;
        } else {
            for (const auto& l : a.channels) candidates.push_back(montage.index_of(l));
        }
        std::uniform_real_distribution<double> amp(a.amp_min, a.amp_max);
        std::uniform_real_distribution<double> dur(a.dur_min_s, a.dur_max_s);
        for (int e = 0; e < n_events; ++e) {
            ArtifactEvent ev;
            ev.kind = a.kind;
            ev.amplitude = amp(rng);
            ev.length = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(dur(rng) * spec.fs)));
            if (ev.length >= t) ev.length = t - 1;
            ev.onset = std::uniform_int_distribution<std::size_t>(0, t - ev.length)(rng);
            auto chosen = candidates;
            if (a.channels_per_event > 0 && a.channels_per_event < chosen.size()) {
                std::shuffle(chosen.begin(), chosen.end(), rng);
                chosen.resize(a.channels_per_event);
                std::sort(chosen.begin(), chosen.end());
            }
            ev.channels = chosen;

            std::vector<double> shape(ev.length);
            switch (a.kind) {
                case ArtifactKind::blink:
                    for (std::size_t i = 0; i < ev.length; ++i)
                        shape[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                         static_cast<double>(ev.length - 1)));
                    break;
                case ArtifactKind::emg_burst: {
                    shape = band_noise(ev.length, 20.0, std::min(45.0, 0.45 * spec.fs), spec.fs, rng);
                    const std::size_t edge = std::max<std::size_t>(1, ev.length / 10);
                    for (std::size_t i = 0; i < edge; ++i) {
                        const double g = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) /
                                                               static_cast<double>(edge)));
                        shape[i] *= g;
                        shape[ev.length - 1 - i] *= g;
                    }
                    break;
                }
                case ArtifactKind::electrode_pop: {
                    const double tau = static_cast<double>(ev.length) / 3.0;
                    for (std::size_t i = 0; i < ev.length; ++i) shape[i] = std::exp(-static_cast<double>(i) / tau);
                    break;
                }
            }
            for (std::size_t ch : ev.channels) {
                const double gain = ev.amplitude * bg_std[ch] *
                                    (a.kind == ArtifactKind::blink ? 0.7 + 0.3 * unit(rng) : 1.0);
                auto r = data.row(ch);
                for (std::size_t i = 0; i < ev.length; ++i) r[ev.onset + i] += gain * shape[i];
            }
            ev.windows = covered_windows(ev.onset, ev.length, n_windows, spec.window, spec.hop, spec.min_cover);
            out.events.push_back(std::move(ev));
        }
    }
    std::sort(out.events.begin(), out.events.end(),
              [](const ArtifactEvent& x, const ArtifactEvent& y) { return x.onset < y.onset; });

    out.recording.data = std::move(data);
    out.recording.fs = spec.fs;
    out.recording.channel_labels = montage.labels;
    out.window_labels = label_windows(out.sample_class, spec.window, spec.hop);
    return out;
}

SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    Montage m = default_montage();
    if (spec.channels < m.size()) {
        Montage sub;
        sub.labels.assign(m.labels.begin(), m.labels.begin() + static_cast<std::ptrdiff_t>(spec.channels));
        sub.coords = Matrix(spec.channels, 2);
        for (std::size_t i = 0; i < spec.channels; ++i) {
            sub.coords(i, 0) = m.coords(i, 0);
            sub.coords(i, 1) = m.coords(i, 1);
        }
        m = std::move(sub);
    }
    return synth_generate(spec, m, seed);
}

}  // namespace nasr
