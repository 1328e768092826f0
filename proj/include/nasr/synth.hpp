#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "nasr/matrix.hpp"
#include "nasr/montage.hpp"
#include "nasr/preprocess.hpp"

namespace nasr {

enum class ArtifactKind { blink, emg_burst, electrode_pop };

std::string to_string(ArtifactKind kind);
ArtifactKind parse_artifact_kind(const std::string& name);

struct ArtifactSpec {
    ArtifactKind kind = ArtifactKind::blink;
    double rate_per_min = 0.0;
    double amp_min = 1.0;  // multiples of the channel's background std
    double amp_max = 1.0;
    double dur_min_s = 0.3;
    double dur_max_s = 0.5;
    std::vector<std::string> channels;   // candidate targets; empty means every channel
    std::size_t channels_per_event = 0;  // 0 means all candidates

    static ArtifactSpec blink(double rate_per_min);
    static ArtifactSpec emg_burst(double rate_per_min);
    static ArtifactSpec electrode_pop(double rate_per_min);
};

struct SynthSpec {
    double fs = 100.0;
    double duration_s = 600.0;
    std::size_t channels = 28;

    double noise_amplitude = 1.0;  // background std per channel
    double shared_fraction = 0.5;  // share of background variance from broad sources
    std::size_t shared_sources = 6;
    double shared_spread_m = 0.06;

    std::vector<std::string> mu_sources{"C3", "C4"};  // class k attenuates source k
    double mu_amplitude = 1.0;
    double mu_low_hz = 8.0;
    double mu_high_hz = 12.0;
    double mu_spread_m = 0.03;
    double erd_depth = 0.6;  // fractional mu attenuation during the matching class

    double block_min_s = 4.0;
    double block_max_s = 5.0;

    std::vector<ArtifactSpec> artifacts;

    std::size_t window = kDefaultWindow;
    std::size_t hop = kDefaultHop;
    double min_cover = 0.5;  // fraction of a window's trailing hop an event must cover

    /// Throws ParameterError.
    void validate(const Montage& montage) const;

    /// Blinks, EMG bursts and electrode pops at moderate rates.
    static SynthSpec standard();
};

struct ArtifactEvent {
    ArtifactKind kind = ArtifactKind::blink;
    std::size_t onset = 0;
    std::size_t length = 0;
    std::vector<std::size_t> channels;
    double amplitude = 0.0;
    std::vector<std::size_t> windows;  // windows whose trailing hop is covered by >= min_cover
};

struct SynthResult {
    EegRecording recording;
    Matrix clean;  // the same signal without artifacts
    std::vector<int> sample_class;
    std::vector<int> window_labels;
    std::vector<ArtifactEvent> events;
};

/// Deterministic for a given (spec, montage, seed).
SynthResult synth_generate(const SynthSpec& spec, const Montage& montage, std::uint64_t seed);
SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed);

std::size_t window_count(std::size_t samples, std::size_t window, std::size_t hop);

/// Class of each window's midpoint sample.
std::vector<int> label_windows(const std::vector<int>& sample_class, std::size_t window, std::size_t hop);

/// Windows whose trailing `hop` samples overlap [onset, onset + length) by at least `min_cover`.
std::vector<std::size_t> covered_windows(std::size_t onset, std::size_t length, std::size_t n_windows,
                                         std::size_t window, std::size_t hop, double min_cover = 0.5);

enum class CellTruth : std::uint8_t { clean = 0, injected = 1, ambiguous = 2 };

/// [window][channel]: injected when covered, ambiguous when touched but not covered.
std::vector<std::vector<CellTruth>> truth_cells(const std::vector<ArtifactEvent>& events, std::size_t n_windows,
                                                std::size_t channels, std::size_t window, std::size_t hop,
                                                double min_cover = 0.5);

}  // namespace nasr
