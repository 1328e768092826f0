#include "nasr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "nasr/error.hpp"

namespace nasr {

namespace {

// Keeps results observable so the timed work is not optimised away.
volatile double g_sink = 0.0;

double quantile_sorted(const std::vector<double>& v, double q) {
    if (v.empty()) return 0.0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double f = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - f) + v[hi] * f;
}

}  // namespace

LatencyStats summarize_latencies(std::vector<double> ms) {
    std::sort(ms.begin(), ms.end());
    return {quantile_sorted(ms, 0.5), quantile_sorted(ms, 0.95), ms.size()};
}

LatencyStats bench_latency(const std::function<void(std::size_t)>& call, std::size_t n_inputs,
                           std::size_t n_warmup, std::size_t n_measure) {
    if (n_inputs == 0) throw ParameterError("benchmark needs at least one input");
    if (n_measure == 0) throw ParameterError("benchmark needs at least one measured call");
    for (std::size_t i = 0; i < n_warmup; ++i) call(i % n_inputs);
    std::vector<double> ms(n_measure);
    for (std::size_t i = 0; i < n_measure; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        call(i % n_inputs);
        const auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    return summarize_latencies(std::move(ms));
}

PipelineLatency bench_pipeline(const PipelineSpec& spec, const ModelParams& params,
                               const std::vector<Matrix>& windows, const AsrModel* asr,
                               std::size_t n_warmup, std::size_t n_measure) {
    if (spec.cleaning == CleaningStage::asr && !asr) throw UsageError("ASR benchmark needs a model");
    auto clean = [&](const Matrix& x) -> Matrix {
        switch (spec.cleaning) {
            case CleaningStage::nasr: {
                auto r = infer_window(x, params.nasr, spec.nasr);
                const bool any = std::any_of(r.noise_hard.begin(), r.noise_hard.end(),
                                             [](std::uint8_t m) { return m != 0; });
                return spec.weighted && any ? weighted_reconstruction(r.recon, r.noise_hard, params.scaling)
                                            : std::move(r.recon);
            }
            case CleaningStage::asr: return asr_transform(*asr, x);
            case CleaningStage::none: return x;
        }
        return x;
    };
    auto decode = [&](const Matrix& x) {
        const Matrix z = average_rereference(x, spec.reference);
        return decoder_forward(params.decoder, z);
    };

    // Cleaned inputs for the decoder-only timing.
    std::vector<Matrix> cleaned;
    cleaned.reserve(windows.size());
    for (const auto& w : windows) cleaned.push_back(clean(w));

    PipelineLatency out;
    out.cleaning = bench_latency([&](std::size_t i) { g_sink = clean(windows[i])(0, 0); }, windows.size(),
                                 n_warmup, n_measure);
    out.decoder = bench_latency([&](std::size_t i) { g_sink = decode(cleaned[i]); }, windows.size(), n_warmup,
                                n_measure);
    out.total = bench_latency([&](std::size_t i) { g_sink = decode(clean(windows[i])); }, windows.size(),
                              n_warmup, n_measure);
    return out;
}

}  // namespace nasr
