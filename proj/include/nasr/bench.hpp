#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "nasr/asr.hpp"
#include "nasr/matrix.hpp"
#include "nasr/trainer.hpp"

namespace nasr {

struct LatencyStats {
    double median_ms = 0.0;
    double p95_ms = 0.0;
    std::size_t n = 0;
};

/// Times `call(i)` for i cycling over [0, n_inputs): n_warmup untimed calls,
/// then n_measure timed ones on the monotonic clock.
LatencyStats bench_latency(const std::function<void(std::size_t)>& call, std::size_t n_inputs,
                           std::size_t n_warmup = 100, std::size_t n_measure = 1000);

LatencyStats summarize_latencies(std::vector<double> ms);

struct PipelineLatency {
    LatencyStats cleaning;
    LatencyStats decoder;
    LatencyStats total;
};

/// Single-window streaming inference: cleaning (nASR forward with its own
/// eigendecomposition, or the ASR transform) then re-reference plus decoder.
PipelineLatency bench_pipeline(const PipelineSpec& spec, const ModelParams& params,
                               const std::vector<Matrix>& windows, const AsrModel* asr,
                               std::size_t n_warmup = 100, std::size_t n_measure = 1000);

}  // namespace nasr
