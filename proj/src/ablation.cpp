#include "nasr/ablation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "nasr/error.hpp"
#include "nasr/parallel.hpp"

namespace nasr {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::m01: return "m01";
        case Variant::m02: return "m02";
        case Variant::m03: return "m03";
        case Variant::m04: return "m04";
        case Variant::m05: return "m05";
        case Variant::control: return "control";
    }
    return "unknown";
}

Variant parse_variant(const std::string& id) {
    for (Variant v : {Variant::m01, Variant::m02, Variant::m03, Variant::m04, Variant::m05, Variant::control})
        if (to_string(v) == id) return v;
    throw ConfigError("unknown variant id '" + id + "' (expected m01..m05 or control)");
}

VariantFlags variant_flags(Variant v) {
    switch (v) {
        case Variant::m01: return {true, false, false, false};
        case Variant::m02: return {false, false, false, true};
        case Variant::m03: return {false, true, false, true};
        case Variant::m04: return {false, true, true, true};
        case Variant::m05: return {false, true, false, false};
        case Variant::control: return {false, false, false, false};
    }
    throw ConfigError("unknown variant");
}

Montage montage_for(const std::vector<std::string>& labels, const HarnessConfig& cfg) {
    const Montage full = cfg.montage_path.empty() ? default_montage() : load_montage(cfg.montage_path);
    Montage m;
    m.labels = labels;
    m.coords = Matrix(labels.size(), 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const std::size_t j = full.index_of(labels[i]);
        m.coords(i, 0) = full.coords(j, 0);
        m.coords(i, 1) = full.coords(j, 1);
    }
    return m;
}

Experiment prepare_experiment(const EegRecording& raw, const std::vector<int>& window_labels,
                              const HarnessConfig& cfg) {
    raw.validate();
    Experiment ex;
    ex.filtered = bandpass_filter(raw, cfg.band_low_hz, cfg.band_high_hz, cfg.filter_order);
    WindowBatch windows = make_windows(ex.filtered, cfg.window, cfg.hop);
    if (window_labels.size() != windows.size())
        throw DataError("expected " + std::to_string(windows.size()) + " window labels, got " +
                        std::to_string(window_labels.size()));
    windows.labels = window_labels;
    ex.clean = detect_clean_windows(windows);
    ex.stats = compute_reference_stats(windows, ex.clean);
    ex.normalized = zscore_normalize(windows, ex.stats);
    ex.split = sequential_split(ex.normalized.size(), cfg.train);
    ex.montage = montage_for(raw.channel_labels, cfg);
    ex.adjacency = build_adjacency(ex.montage, cfg.neighbor_radius);
    return ex;
}

EegRecording asr_calibration_data(const Experiment& ex, const HarnessConfig& cfg) {
    const std::size_t c = ex.filtered.channels(), t = ex.filtered.samples();
    std::vector<bool> use(t, false);
    for (std::size_t b = 0; b < ex.clean.size(); ++b) {
        if (!ex.clean[b]) continue;
        const std::size_t s0 = ex.normalized.window_start_indices[b];
        for (std::size_t s = s0; s < s0 + ex.normalized.length(); ++s) use[s] = true;
    }
    const auto limit = static_cast<std::size_t>(std::llround(cfg.asr_calib_seconds * ex.filtered.fs));
    std::vector<std::size_t> picked;
    for (std::size_t s = 0; s < t && picked.size() < limit; ++s)
        if (use[s]) picked.push_back(s);

    const std::size_t n = picked.size();
    const auto repeats = static_cast<std::size_t>(std::max(1, cfg.asr_calib_repeats));
    EegRecording cal;
    cal.fs = ex.filtered.fs;
    cal.channel_labels = ex.filtered.channel_labels;
    cal.data = Matrix(c, n * repeats);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double mu = ex.stats.mu[ch], sigma = ex.stats.sigma[ch];
        for (std::size_t i = 0; i < n; ++i) {
            const double v = (ex.filtered.data(ch, picked[i]) - mu) / sigma;
            for (std::size_t r = 0; r < repeats; ++r) cal.data(ch, r * n + i) = v;
        }
    }
    return cal;
}

AsrModel calibrate_asr(const Experiment& ex, const HarnessConfig& cfg) {
    return asr_calibrate(asr_calibration_data(ex, cfg), cfg.asr_cutoff);
}

PipelineSpec pipeline_for(Variant v, const Experiment& ex, const HarnessConfig& cfg) {
    const VariantFlags f = variant_flags(v);
    PipelineSpec spec;
    spec.reference = cfg.reference;
    spec.weighted = f.weighted;
    if (v == Variant::control) spec.cleaning = CleaningStage::none;
    else if (f.asr) spec.cleaning = CleaningStage::asr;
    else spec.cleaning = CleaningStage::nasr;
    spec.nasr.reconstruct_neighbors = f.neighbors;
    spec.nasr.covariance_full_window = f.full_window_covariance;
    spec.nasr.s_nonoverlap = cfg.hop;
    spec.nasr.solver = cfg.solver;
    if (f.neighbors) spec.nasr.adjacency = ex.adjacency;
    return spec;
}

std::vector<std::vector<std::uint8_t>> compute_masks(const PipelineSpec& spec, const ModelParams& params,
                                                     const PreparedData& data) {
    const std::size_t n = data.size();
    if (spec.cleaning != CleaningStage::nasr) {
        if (data.fixed_masks.size() == n) return data.fixed_masks;
        return std::vector<std::vector<std::uint8_t>>(n, std::vector<std::uint8_t>(data.channels(), 0));
    }
    std::vector<std::vector<std::uint8_t>> masks(n);
    NasrConfig hard = spec.nasr;
    hard.mode = MaskMode::straight_through;
    parallel_for(n, [&](std::size_t i) {
        const EigenPair* spectrum = data.spectra.empty() ? nullptr : &data.spectra[i];
        masks[i] = forward_window(data.windows[i], params.nasr, hard, spectrum).noise_hard;
    });
    return masks;
}

double flagged_fraction(const std::vector<std::vector<std::uint8_t>>& masks) {
    std::size_t flagged = 0, total = 0;
    for (const auto& m : masks) {
        for (auto v : m) flagged += v ? 1 : 0;
        total += m.size();
    }
    return total ? static_cast<double>(flagged) / static_cast<double>(total) : 0.0;
}

AblationRun run_ablation(Variant v, const Experiment& ex, const HarnessConfig& cfg) {
    AblationRun run;
    run.variant = v;
    run.flags = variant_flags(v);
    run.spec = pipeline_for(v, ex, cfg);
    if (run.spec.cleaning == CleaningStage::asr) run.asr = calibrate_asr(ex, cfg);

    const PreparedData data = prepare_data(run.spec, ex.normalized, run.asr ? &*run.asr : nullptr);
    run.initial = ModelParams::initial(ex.normalized.channels());
    run.training = fit(run.spec, run.initial, data, ex.split, cfg.train);
    run.params = run.training.params;
    run.metrics.train = evaluate(run.spec, run.params, data, ex.split.train);
    run.metrics.val = evaluate(run.spec, run.params, data, ex.split.val);
    run.metrics.test = evaluate(run.spec, run.params, data, ex.split.test);
    run.masks = compute_masks(run.spec, run.params, data);
    return run;
}

void export_noisemap(const std::vector<std::vector<std::uint8_t>>& masks, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write noise map: " + path.string());
    const std::size_t n = masks.size(), c = n ? masks.front().size() : 0;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t b = 0; b < n; ++b) {
            if (b) out << ',';
            out << static_cast<int>(masks[b][ch] ? 1 : 0);
        }
        out << '\n';
    }
    out << "# flagged_fraction," << std::setprecision(10) << flagged_fraction(masks) << '\n';
    if (!out) throw IoError("failed writing noise map: " + path.string());
}

void export_noisemap(const AblationRun& run, const std::filesystem::path& path) {
    if (run.masks.empty()) throw UsageError("run has no per-window masks");
    export_noisemap(run.masks, path);
}

std::vector<std::vector<CellTruth>> energy_truth_cells(const SynthResult& synth, const Experiment& ex,
                                                       const HarnessConfig& cfg, double snr_min) {
    const std::size_t c = synth.recording.channels(), t = synth.recording.samples();
    if (synth.clean.rows() != c || synth.clean.cols() != t)
        throw ParameterError("synthetic clean signal does not match the recording");
    if (ex.stats.sigma.size() != c) throw ParameterError("experiment stats do not match the recording");

    EegRecording artifact = synth.recording;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < t; ++i) artifact.data(ch, i) -= synth.clean(ch, i);
    const auto filtered = bandpass_filter(artifact, cfg.band_low_hz, cfg.band_high_hz, cfg.filter_order);

    const std::size_t n = window_count(t, cfg.window, cfg.hop);
    auto cells = truth_cells(synth.events, n, c, cfg.window, cfg.hop, 1.0);
    const std::size_t seg = std::min(cfg.hop, cfg.window);
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t first = b * cfg.hop + cfg.window - seg;
        for (std::size_t ch = 0; ch < c; ++ch) {
            auto row = filtered.data.row(ch).subspan(first, seg);
            double mean = 0.0;
            for (double v : row) mean += v;
            mean /= static_cast<double>(seg);
            double var = 0.0;
            for (double v : row) var += (v - mean) * (v - mean);
            var /= static_cast<double>(seg - 1) * ex.stats.sigma[ch] * ex.stats.sigma[ch];

            auto& cell = cells[b][ch];
            if (var >= snr_min) cell = CellTruth::injected;
            else if (cell != CellTruth::clean) cell = CellTruth::ambiguous;
        }
    }
    return cells;
}

Selectivity selectivity(const std::vector<std::vector<std::uint8_t>>& masks,
                        const std::vector<std::vector<CellTruth>>& truth) {
    if (masks.size() != truth.size()) throw ParameterError("mask and truth window counts differ");
    Selectivity s;
    std::size_t hits = 0, false_alarms = 0;
    for (std::size_t b = 0; b < masks.size(); ++b) {
        if (masks[b].size() != truth[b].size()) throw ParameterError("mask and truth channel counts differ");
        for (std::size_t ch = 0; ch < masks[b].size(); ++ch) {
            const bool flagged = masks[b][ch] != 0;
            if (truth[b][ch] == CellTruth::injected) {
                ++s.injected;
                hits += flagged;
            } else if (truth[b][ch] == CellTruth::clean) {
                ++s.clean;
                false_alarms += flagged;
            }
        }
    }
    if (s.injected) s.recall = static_cast<double>(hits) / static_cast<double>(s.injected);
    if (s.clean) s.false_positive_rate = static_cast<double>(false_alarms) / static_cast<double>(s.clean);
    return s;
}

std::vector<bool> pareto_optimal(const std::vector<ParetoPoint>& points) {
    std::vector<bool> optimal(points.size(), true);
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = 0; j < points.size(); ++j)
            if (j != i && points[j].accuracy > points[i].accuracy && points[j].latency_ms < points[i].latency_ms) {
                optimal[i] = false;
                break;
            }
    return optimal;
}

}  // namespace nasr
