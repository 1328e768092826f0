#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nasr/asr.hpp"
#include "nasr/montage.hpp"
#include "nasr/preprocess.hpp"
#include "nasr/synth.hpp"
#include "nasr/trainer.hpp"

namespace nasr {

enum class Variant { m01, m02, m03, m04, m05, control };

inline constexpr Variant kAllVariants[] = {Variant::m01, Variant::m02, Variant::m03, Variant::m04, Variant::m05};

std::string to_string(Variant v);
/// Throws ConfigError for an unknown id.
Variant parse_variant(const std::string& id);

/// One row of the ablation table.
struct VariantFlags {
    bool asr = false;
    bool neighbors = false;
    bool full_window_covariance = false;
    bool weighted = false;

    friend bool operator==(const VariantFlags&, const VariantFlags&) = default;
};

VariantFlags variant_flags(Variant v);

/// Settings shared by every variant of one experiment.
struct HarnessConfig {
    double band_low_hz = 0.5;
    double band_high_hz = 30.0;
    int filter_order = 6;
    std::size_t window = kDefaultWindow;
    std::size_t hop = kDefaultHop;
    double asr_cutoff = 20.0;
    double asr_calib_seconds = 20.0;
    int asr_calib_repeats = 3;
    double neighbor_radius = kDefaultNeighborRadius;
    EigenSolver solver = EigenSolver::tridiagonal_ql;
    ReferenceDenominator reference = ReferenceDenominator::c_plus_one;
    std::string montage_path;  // empty: the bundled fixture
    TrainConfig train;
};

/// Filtered, windowed, normalized data plus everything derived from it
/// that does not depend on the variant.
struct Experiment {
    EegRecording filtered;
    WindowBatch normalized;
    ChannelStats stats;
    std::vector<bool> clean;
    SplitRanges split;
    Montage montage;
    Matrix adjacency;
};

Experiment prepare_experiment(const EegRecording& raw, const std::vector<int>& window_labels,
                              const HarnessConfig& cfg);

/// Montage for `labels`: the configured file (or bundled fixture) restricted to those labels.
Montage montage_for(const std::vector<std::string>& labels, const HarnessConfig& cfg);

/// Calibration recording: distinct samples of the clean windows (normalized),
/// truncated to asr_calib_seconds and tiled asr_calib_repeats times.
EegRecording asr_calibration_data(const Experiment& ex, const HarnessConfig& cfg);
AsrModel calibrate_asr(const Experiment& ex, const HarnessConfig& cfg);

PipelineSpec pipeline_for(Variant v, const Experiment& ex, const HarnessConfig& cfg);

struct SplitMetrics {
    Metrics train;
    Metrics val;
    Metrics test;
};

struct AblationRun {
    Variant variant = Variant::m02;
    VariantFlags flags;
    PipelineSpec spec;
    ModelParams initial;
    ModelParams params;
    TrainResult training;
    SplitMetrics metrics;
    std::optional<AsrModel> asr;
    std::vector<std::vector<std::uint8_t>> masks;  // [window][channel]
    double median_latency_ms = 0.0;                // filled by the benchmark when requested
};

AblationRun run_ablation(Variant v, const Experiment& ex, const HarnessConfig& cfg);

/// Hard per-window channel masks: nASR noise masks, or the 1e-5 differencing rule for ASR.
std::vector<std::vector<std::uint8_t>> compute_masks(const PipelineSpec& spec, const ModelParams& params,
                                                     const PreparedData& data);

double flagged_fraction(const std::vector<std::vector<std::uint8_t>>& masks);

/// C rows x N windows of 0/1, then a summary line. Throws IoError naming the path.
void export_noisemap(const std::vector<std::vector<std::uint8_t>>& masks, const std::filesystem::path& path);
void export_noisemap(const AblationRun& run, const std::filesystem::path& path);

/// Cell truth from the injected signal as the layer receives it. The artifact
/// part (recording minus clean) is band-passed and scaled by the experiment's
/// channel sigma; a cell is injected when its mean-centred variance over the
/// window's trailing hop reaches `snr_min` (background variance is 1 after
/// normalization), clean when no event sample falls in that segment and the
/// variance stays below `snr_min`, ambiguous otherwise.
std::vector<std::vector<CellTruth>> energy_truth_cells(const SynthResult& synth, const Experiment& ex,
                                                       const HarnessConfig& cfg, double snr_min = 1.0);

struct Selectivity {
    double recall = 0.0;               // flagged share of injected cells
    double false_positive_rate = 0.0;  // flagged share of clean cells
    std::size_t injected = 0;
    std::size_t clean = 0;
};

Selectivity selectivity(const std::vector<std::vector<std::uint8_t>>& masks,
                        const std::vector<std::vector<CellTruth>>& truth);

struct ParetoPoint {
    double accuracy = 0.0;
    double latency_ms = 0.0;
};

/// Optimal iff no other point has strictly higher accuracy and strictly lower latency.
std::vector<bool> pareto_optimal(const std::vector<ParetoPoint>& points);

}  // namespace nasr
