#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "nasr/asr.hpp"
#include "nasr/matrix.hpp"
#include "nasr/nasr_layer.hpp"
#include "nasr/post_layers.hpp"
#include "nasr/preprocess.hpp"

namespace nasr {

// ---------------------------------------------------------------------------
// Decoder: log-variance features -> affine -> sigmoid
// ---------------------------------------------------------------------------

inline constexpr double kLogVarEps = 1e-6;
inline constexpr double kProbClamp = 1e-7;
inline constexpr double kDiceEps = 1e-7;

struct Decoder {
    std::vector<double> weights;
    double bias = 0.0;
    double dropout = 0.2;

    static Decoder zeros(std::size_t channels) { return {std::vector<double>(channels, 0.0), 0.0, 0.2}; }
};

struct DecoderCache {
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> features;  // after dropout scaling
    std::vector<double> keep;      // 0 or 1/(1-rate); all ones in eval mode
    double prob = 0.0;
};

/// Eval mode when `dropout_rng` is null.
double decoder_forward(const Decoder& dec, const Matrix& z, DecoderCache* cache = nullptr,
                       std::mt19937_64* dropout_rng = nullptr);

struct DecoderGrads {
    std::vector<double> dw;
    double db = 0.0;
    Matrix dz;
};

/// From dLoss/dProb of one window.
DecoderGrads decoder_backward(const Decoder& dec, const Matrix& z, const DecoderCache& cache, double dprob);

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

struct LossValue {
    double bce = 0.0;
    double dice = 0.0;
    double value = 0.0;
    std::vector<double> dprob;  // d value / d p, zero where p was clamped
};

/// 0.5 * BCE + 0.5 * soft Dice over the batch.
LossValue combined_loss(std::span<const double> p, std::span<const int> y);

// ---------------------------------------------------------------------------
// Model parameters and optimiser
// ---------------------------------------------------------------------------

struct ModelParams {
    NasrParams nasr;
    ScalingWeights scaling;
    Decoder decoder;

    static ModelParams initial(std::size_t channels);

    /// Layout: k, l, scaling[0..C), decoder weights[0..C), decoder bias.
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);
    /// K >= 0, L in [0, 1], ScalingW >= 0.
    void project();
};

struct ModelGrads {
    double dk = 0.0;
    double dl = 0.0;
    std::vector<double> dscaling;
    std::vector<double> ddec_w;
    double ddec_b = 0.0;

    static ModelGrads zeros(std::size_t channels);
    std::vector<double> flatten() const;
    void add(const ModelGrads& other);
    void scale(double s);
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Global-norm clip of `grads` to `clipnorm` in place; returns the norm before clipping.
double clip_global_norm(std::span<double> grads, double clipnorm);

/// One Adam update on a flat vector. Entries with trainable[i] == 0 keep
/// their value and moments. A non-finite gradient skips the step (returns false).
bool adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                 double clipnorm, std::span<const std::uint8_t> trainable = {},
                 const AdamConfig& cfg = {});

/// adam_update on the model layout followed by the feasibility projections.
bool adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state, double lr, double clipnorm,
               std::span<const std::uint8_t> trainable = {}, const AdamConfig& cfg = {});

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// Halves the LR after `patience` consecutive epochs without a new best
/// monitored value; the counter restarts after each reduction.
class PlateauSchedule {
public:
    PlateauSchedule(double lr, int patience = 5, double factor = 0.5, double floor = 1e-7)
        : lr_(lr), patience_(patience), factor_(factor), floor_(floor) {}

    /// Feeds one epoch's validation loss; returns the LR for the next epoch.
    double step(double monitored);
    double lr() const noexcept { return lr_; }
    int wait() const noexcept { return wait_; }

private:
    double lr_;
    int patience_;
    double factor_;
    double floor_;
    double best_ = 0.0;
    bool have_best_ = false;
    int wait_ = 0;
};

class EarlyStopping {
public:
    explicit EarlyStopping(int patience = 50) : patience_(patience) {}

    /// Returns true when training should stop after this epoch.
    bool update(double monitored, int epoch);
    bool improved() const noexcept { return improved_; }
    int best_epoch() const noexcept { return best_epoch_; }
    double best() const noexcept { return best_; }

private:
    int patience_;
    double best_ = 0.0;
    bool have_best_ = false;
    bool improved_ = false;
    int best_epoch_ = -1;
    int wait_ = 0;
};

// ---------------------------------------------------------------------------
// Pipeline: cleaning -> weighted reconstruction -> re-reference -> decoder
// ---------------------------------------------------------------------------

enum class CleaningStage {
    nasr,  // trainable layer
    asr,   // fixed transform applied once while preparing the data
    none,  // no cleaning
};

struct PipelineSpec {
    CleaningStage cleaning = CleaningStage::nasr;
    NasrConfig nasr;
    bool weighted = true;
    ReferenceDenominator reference = ReferenceDenominator::c_plus_one;

    bool trains_thresholds() const noexcept { return cleaning == CleaningStage::nasr; }
    bool trains_scaling() const noexcept { return cleaning == CleaningStage::nasr && weighted; }
    /// Trainable flags in ModelParams::flatten() layout.
    std::vector<std::uint8_t> trainable_mask(std::size_t channels) const;
};

/// Inputs to the learnable part of the pipeline. For nASR the spectra are
/// cached because they depend only on the data; for ASR the windows are
/// already cleaned.
struct PreparedData {
    std::vector<Matrix> windows;
    std::vector<EigenPair> spectra;
    std::vector<int> labels;
    std::vector<std::vector<std::uint8_t>> fixed_masks;  // ASR: rows changed by the transform

    std::size_t size() const noexcept { return windows.size(); }
    std::size_t channels() const noexcept { return windows.empty() ? 0 : windows.front().rows(); }
};

inline constexpr double kAsrFlagTolerance = 1e-5;

/// `batch` must be normalized and labeled; `asr` is required for CleaningStage::asr.
PreparedData prepare_data(const PipelineSpec& spec, const WindowBatch& batch, const AsrModel* asr = nullptr);

struct WindowTrace {
    WindowResult nasr;  // only for CleaningStage::nasr
    Matrix cleaned;     // input to the re-reference
    Matrix z;           // decoder input
    DecoderCache dec;
    std::vector<std::uint8_t> mask;
};

double pipeline_forward(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                        std::size_t index, WindowTrace* trace = nullptr,
                        std::mt19937_64* dropout_rng = nullptr);

ModelGrads pipeline_backward(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                             std::size_t index, const WindowTrace& trace, double dprob);

/// Loss and summed gradient of one batch. `dropout_seed` enables train mode.
struct BatchResult {
    LossValue loss;
    ModelGrads grads;
    std::vector<double> probs;
};

BatchResult batch_gradient(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                           std::span<const std::size_t> indices,
                           std::optional<std::uint64_t> dropout_seed = std::nullopt);

/// Eval-mode probabilities.
std::vector<double> predict(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                            std::span<const std::size_t> indices);

/// Eval-mode combined loss over `indices` as one batch.
double dataset_loss(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                    std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 1e-3;
    double clipnorm = 1.0;
    int epochs_max = 250;
    std::size_t batch = 64;
    int plateau_patience = 5;
    double plateau_factor = 0.5;
    double lr_floor = 1e-7;
    int early_stop_patience = 50;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;

    /// Throws ConfigError.
    void validate() const;
};

struct SplitRanges {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Temporal order: first train, then val, then test. Throws ConfigError on an empty split.
SplitRanges sequential_split(std::size_t n, const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double k = 0.0;
    double l = 0.0;
};

struct TrainResult {
    ModelParams params;  // best validation loss
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_loss = 0.0;
    bool stopped_early = false;
    std::size_t skipped_steps = 0;
};

TrainResult fit(const PipelineSpec& spec, const ModelParams& init, const PreparedData& data,
                const SplitRanges& split, const TrainConfig& cfg);

struct Metrics {
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double f1 = 0.0;
    std::size_t n = 0;
};

/// Threshold 0.5. A single-class split reports balanced accuracy over the present class.
Metrics compute_metrics(std::span<const double> p, std::span<const int> y);

Metrics evaluate(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                 std::span<const std::size_t> indices);

}  // namespace nasr
