#include "nasr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "nasr/error.hpp"
#include "nasr/parallel.hpp"

namespace nasr {

namespace {

double sigmoid(double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------

double decoder_forward(const Decoder& dec, const Matrix& z, DecoderCache* cache, std::mt19937_64* dropout_rng) {
    const std::size_t c = z.rows(), w = z.cols();
    if (dec.weights.size() != c) throw ParameterError("decoder width does not match the channel count");
    if (w == 0) throw DataError("empty window");

    DecoderCache local;
    DecoderCache& k = cache ? *cache : local;
    k.mean.assign(c, 0.0);
    k.var.assign(c, 0.0);
    k.features.assign(c, 0.0);
    k.keep.assign(c, 1.0);

    std::bernoulli_distribution drop(dec.dropout);
    const double inv_keep = dec.dropout < 1.0 ? 1.0 / (1.0 - dec.dropout) : 0.0;

    double logit = dec.bias;
    for (std::size_t ch = 0; ch < c; ++ch) {
        auto r = z.row(ch);
        double m = 0.0;
        for (double v : r) m += v;
        m /= static_cast<double>(w);
        double s = 0.0;
        for (double v : r) s += (v - m) * (v - m);
        const double var = s / static_cast<double>(w);
        k.mean[ch] = m;
        k.var[ch] = var;
        if (dropout_rng && dec.dropout > 0.0) k.keep[ch] = drop(*dropout_rng) ? 0.0 : inv_keep;
        k.features[ch] = std::log(var + kLogVarEps) * k.keep[ch];
        logit += dec.weights[ch] * k.features[ch];
    }
    k.prob = sigmoid(logit);
    return k.prob;
}

DecoderGrads decoder_backward(const Decoder& dec, const Matrix& z, const DecoderCache& cache, double dprob) {
    const std::size_t c = z.rows(), w = z.cols();
    DecoderGrads g{std::vector<double>(c, 0.0), 0.0, Matrix(c, w)};
    const double da = dprob * cache.prob * (1.0 - cache.prob);
    g.db = da;
    for (std::size_t ch = 0; ch < c; ++ch) {
        g.dw[ch] = da * cache.features[ch];
        const double dfeat = da * dec.weights[ch] * cache.keep[ch];
        const double dvar = dfeat / (cache.var[ch] + kLogVarEps);
        const double coef = 2.0 * dvar / static_cast<double>(w);
        auto zr = z.row(ch);
        auto gr = g.dz.row(ch);
        for (std::size_t t = 0; t < w; ++t) gr[t] = coef * (zr[t] - cache.mean[ch]);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

LossValue combined_loss(std::span<const double> p, std::span<const int> y) {
    if (p.size() != y.size()) throw ParameterError("combined_loss: size mismatch");
    if (p.empty()) throw DataError("combined_loss: empty batch");
    const std::size_t b = p.size();
    const double bn = static_cast<double>(b);

    LossValue out;
    out.dprob.assign(b, 0.0);
    std::vector<double> pc(b);
    std::vector<double> inside(b, 1.0);
    double inter = 0.0, psum = 0.0, ysum = 0.0, bce = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        if (y[i] != 0 && y[i] != 1) throw ParameterError("combined_loss: labels must be 0 or 1");
        double v = p[i];
        if (std::isnan(v)) throw NumericalError("combined_loss: probability is NaN");
        if (v < kProbClamp || v > 1.0 - kProbClamp) {
            v = std::clamp(v, kProbClamp, 1.0 - kProbClamp);
            inside[i] = 0.0;
        }
        pc[i] = v;
        const double yi = y[i];
        bce -= yi * std::log(v) + (1.0 - yi) * std::log(1.0 - v);
        inter += v * yi;
        psum += v;
        ysum += yi;
    }
    out.bce = bce / bn;
    const double num = 2.0 * inter + kDiceEps;
    const double den = psum + ysum + kDiceEps;
    out.dice = 1.0 - num / den;
    out.value = 0.5 * out.bce + 0.5 * out.dice;

    for (std::size_t i = 0; i < b; ++i) {
        const double yi = y[i], v = pc[i];
        const double dbce = -(yi / v - (1.0 - yi) / (1.0 - v)) / bn;
        const double ddice = -(2.0 * yi * den - num) / (den * den);
        out.dprob[i] = inside[i] * (0.5 * dbce + 0.5 * ddice);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

ModelParams ModelParams::initial(std::size_t channels) {
    return {NasrParams{}, ScalingWeights::ones(channels), Decoder::zeros(channels)};
}

std::vector<double> ModelParams::flatten() const {
    std::vector<double> f;
    f.reserve(3 + scaling.w.size() + decoder.weights.size());
    f.push_back(nasr.k);
    f.push_back(nasr.l);
    f.insert(f.end(), scaling.w.begin(), scaling.w.end());
    f.insert(f.end(), decoder.weights.begin(), decoder.weights.end());
    f.push_back(decoder.bias);
    return f;
}

void ModelParams::unflatten(std::span<const double> f) {
    const std::size_t c = scaling.w.size();
    if (f.size() != 3 + 2 * c || decoder.weights.size() != c)
        throw ParameterError("parameter vector has the wrong length");
    nasr.k = f[0];
    nasr.l = f[1];
    std::copy(f.begin() + 2, f.begin() + 2 + c, scaling.w.begin());
    std::copy(f.begin() + 2 + c, f.begin() + 2 + 2 * c, decoder.weights.begin());
    decoder.bias = f[2 + 2 * c];
}

void ModelParams::project() {
    nasr.project();
    scaling.project();
}

ModelGrads ModelGrads::zeros(std::size_t channels) {
    return {0.0, 0.0, std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0), 0.0};
}

std::vector<double> ModelGrads::flatten() const {
    std::vector<double> f;
    f.reserve(3 + dscaling.size() + ddec_w.size());
    f.push_back(dk);
    f.push_back(dl);
    f.insert(f.end(), dscaling.begin(), dscaling.end());
    f.insert(f.end(), ddec_w.begin(), ddec_w.end());
    f.push_back(ddec_b);
    return f;
}

void ModelGrads::add(const ModelGrads& o) {
    dk += o.dk;
    dl += o.dl;
    for (std::size_t i = 0; i < dscaling.size(); ++i) dscaling[i] += o.dscaling[i];
    for (std::size_t i = 0; i < ddec_w.size(); ++i) ddec_w[i] += o.ddec_w[i];
    ddec_b += o.ddec_b;
}

void ModelGrads::scale(double s) {
    dk *= s;
    dl *= s;
    for (auto& v : dscaling) v *= s;
    for (auto& v : ddec_w) v *= s;
    ddec_b *= s;
}

// ---------------------------------------------------------------------------
// Optimiser
// ---------------------------------------------------------------------------

double clip_global_norm(std::span<double> grads, double clipnorm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > clipnorm && norm > 0.0) {
        const double s = clipnorm / norm;
        for (double& g : grads) g *= s;
    }
    return norm;
}

bool adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                 double clipnorm, std::span<const std::uint8_t> trainable, const AdamConfig& cfg) {
    const std::size_t n = params.size();
    if (grads.size() != n || (!trainable.empty() && trainable.size() != n))
        throw ParameterError("adam_update: shape mismatch");
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n) throw ParameterError("adam_update: optimiser state has the wrong size");

    std::vector<double> g(grads.begin(), grads.end());
    for (std::size_t i = 0; i < n; ++i) {
        if (!trainable.empty() && !trainable[i]) {
            g[i] = 0.0;
            continue;
        }
        if (!std::isfinite(g[i])) {
            std::clog << "warning: non-finite gradient at parameter " << i << "; step skipped\n";
            return false;
        }
    }
    clip_global_norm(g, clipnorm);

    ++state.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < n; ++i) {
        if (!trainable.empty() && !trainable[i]) continue;
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    return true;
}

bool adam_step(ModelParams& params, const ModelGrads& grads, AdamState& state, double lr, double clipnorm,
               std::span<const std::uint8_t> trainable, const AdamConfig& cfg) {
    auto flat = params.flatten();
    const auto g = grads.flatten();
    const bool applied = adam_update(flat, g, state, lr, clipnorm, trainable, cfg);
    if (applied) {
        params.unflatten(flat);
        params.project();
    }
    return applied;
}

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

double PlateauSchedule::step(double monitored) {
    if (!have_best_ || monitored < best_) {
        best_ = monitored;
        have_best_ = true;
        wait_ = 0;
        return lr_;
    }
    if (++wait_ >= patience_) {
        lr_ = std::max(lr_ * factor_, floor_);
        wait_ = 0;
    }
    return lr_;
}

bool EarlyStopping::update(double monitored, int epoch) {
    improved_ = !have_best_ || monitored < best_;
    if (improved_) {
        best_ = monitored;
        have_best_ = true;
        best_epoch_ = epoch;
        wait_ = 0;
        return false;
    }
    return ++wait_ >= patience_;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> PipelineSpec::trainable_mask(std::size_t channels) const {
    std::vector<std::uint8_t> m(3 + 2 * channels, 1);
    m[0] = m[1] = trains_thresholds() ? 1 : 0;
    for (std::size_t c = 0; c < channels; ++c) m[2 + c] = trains_scaling() ? 1 : 0;
    return m;
}

PreparedData prepare_data(const PipelineSpec& spec, const WindowBatch& batch, const AsrModel* asr) {
    PreparedData d;
    if (batch.labels) {
        if (batch.labels->size() != batch.size()) throw DataError("label count does not match window count");
        d.labels = *batch.labels;
    }
    const std::size_t n = batch.size();
    switch (spec.cleaning) {
        case CleaningStage::nasr:
            spec.nasr.validate(batch.channels());
            d.windows = batch.windows;
            d.spectra.resize(n);
            parallel_for(n, [&](std::size_t i) { d.spectra[i] = window_spectrum(d.windows[i], spec.nasr); });
            break;
        case CleaningStage::asr: {
            if (!asr) throw UsageError("ASR pipeline needs a calibrated model");
            d.windows.resize(n);
            d.fixed_masks.resize(n);
            parallel_for(n, [&](std::size_t i) {
                const Matrix& x = batch.windows[i];
                d.windows[i] = asr_transform(*asr, x);
                std::vector<std::uint8_t> m(x.rows(), 0);
                for (std::size_t c = 0; c < x.rows(); ++c) {
                    auto a = x.row(c);
                    auto b = d.windows[i].row(c);
                    for (std::size_t t = 0; t < a.size(); ++t)
                        if (std::abs(a[t] - b[t]) > kAsrFlagTolerance) {
                            m[c] = 1;
                            break;
                        }
                }
                d.fixed_masks[i] = std::move(m);
            });
            break;
        }
        case CleaningStage::none:
            d.windows = batch.windows;
            d.fixed_masks.assign(n, std::vector<std::uint8_t>(batch.channels(), 0));
            break;
    }
    return d;
}

double pipeline_forward(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                        std::size_t index, WindowTrace* trace, std::mt19937_64* dropout_rng) {
    WindowTrace local;
    WindowTrace& tr = trace ? *trace : local;
    const Matrix& x = data.windows.at(index);
    if (spec.cleaning == CleaningStage::nasr) {
        const EigenPair* spectrum = data.spectra.empty() ? nullptr : &data.spectra[index];
        tr.nasr = forward_window(x, params.nasr, spec.nasr, spectrum);
        tr.mask = tr.nasr.noise_hard;
        tr.cleaned = spec.weighted ? weighted_reconstruction(tr.nasr.recon, tr.mask, params.scaling)
                                   : tr.nasr.recon;
    } else {
        tr.mask = data.fixed_masks.empty() ? std::vector<std::uint8_t>(x.rows(), 0) : data.fixed_masks[index];
        tr.cleaned = x;
    }
    tr.z = average_rereference(tr.cleaned, spec.reference);
    return decoder_forward(params.decoder, tr.z, &tr.dec, dropout_rng);
}

ModelGrads pipeline_backward(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                             std::size_t index, const WindowTrace& tr, double dprob) {
    const std::size_t c = data.windows.at(index).rows();
    ModelGrads g = ModelGrads::zeros(c);
    auto dec = decoder_backward(params.decoder, tr.z, tr.dec, dprob);
    g.ddec_w = std::move(dec.dw);
    g.ddec_b = dec.db;
    if (spec.cleaning != CleaningStage::nasr) return g;

    const Matrix dcleaned = average_rereference_backward(dec.dz, spec.reference);
    Matrix drecon;
    if (spec.weighted) {
        g.dscaling = weighted_reconstruction_backward(dcleaned, tr.nasr.recon, tr.mask);
        drecon = weighted_reconstruction_input_grad(dcleaned, tr.mask, params.scaling);
    } else {
        drecon = dcleaned;
    }
    const auto ng = backward_window(drecon, data.windows[index], tr.nasr.cache, params.nasr, spec.nasr);
    g.dk = ng.dk;
    g.dl = ng.dl;
    return g;
}

BatchResult batch_gradient(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                           std::span<const std::size_t> indices, std::optional<std::uint64_t> dropout_seed) {
    const std::size_t b = indices.size();
    if (b == 0) throw DataError("empty batch");
    if (data.labels.size() != data.size()) throw DataError("training data must be labeled");

    std::vector<WindowTrace> traces(b);
    BatchResult out;
    out.probs.assign(b, 0.0);
    std::vector<int> y(b);
    for (std::size_t i = 0; i < b; ++i) y[i] = data.labels[indices[i]];

    parallel_for(b, [&](std::size_t i) {
        if (dropout_seed) {
            std::mt19937_64 rng(splitmix64(*dropout_seed ^ splitmix64(indices[i])));
            out.probs[i] = pipeline_forward(spec, params, data, indices[i], &traces[i], &rng);
        } else {
            out.probs[i] = pipeline_forward(spec, params, data, indices[i], &traces[i], nullptr);
        }
    });
    out.loss = combined_loss(out.probs, y);

    const std::size_t c = data.channels();
    std::vector<ModelGrads> per(b);
    parallel_for(b, [&](std::size_t i) {
        per[i] = pipeline_backward(spec, params, data, indices[i], traces[i], out.loss.dprob[i]);
        traces[i] = WindowTrace{};
    });
    out.grads = ModelGrads::zeros(c);
    for (const auto& g : per) out.grads.add(g);
    return out;
}

std::vector<double> predict(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                            std::span<const std::size_t> indices) {
    std::vector<double> p(indices.size());
    parallel_for(indices.size(), [&](std::size_t i) { p[i] = pipeline_forward(spec, params, data, indices[i]); });
    return p;
}

double dataset_loss(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                    std::span<const std::size_t> indices) {
    const auto p = predict(spec, params, data, indices);
    std::vector<int> y(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) y[i] = data.labels.at(indices[i]);
    return combined_loss(p, y).value;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(clipnorm > 0.0)) throw ConfigError("clipnorm must be positive");
    if (epochs_max <= 0) throw ConfigError("epochs_max must be positive");
    if (batch == 0) throw ConfigError("batch must be positive");
    if (plateau_patience <= 0 || early_stop_patience <= 0) throw ConfigError("patience must be positive");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau factor must be in (0, 1)");
    if (!(lr_floor > 0.0)) throw ConfigError("lr_floor must be positive");
    if (!(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0))
        throw ConfigError("split fractions must be positive");
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
}

SplitRanges sequential_split(std::size_t n, const TrainConfig& cfg) {
    cfg.validate();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * cfg.train_fraction + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * cfg.val_fraction + 1e-9));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
        throw ConfigError("split of " + std::to_string(n) + " windows leaves an empty subset");
    SplitRanges s;
    s.train.resize(n_train);
    s.val.resize(n_val);
    s.test.resize(n - n_train - n_val);
    std::iota(s.train.begin(), s.train.end(), std::size_t{0});
    std::iota(s.val.begin(), s.val.end(), n_train);
    std::iota(s.test.begin(), s.test.end(), n_train + n_val);
    return s;
}

TrainResult fit(const PipelineSpec& spec, const ModelParams& init, const PreparedData& data,
                const SplitRanges& split, const TrainConfig& cfg) {
    cfg.validate();
    if (split.train.empty() || split.val.empty()) throw ConfigError("train and validation splits must be non-empty");
    if (data.labels.size() != data.size()) throw DataError("training data must be labeled");

    const std::size_t c = data.channels();
    const auto trainable = spec.trainable_mask(c);
    ModelParams params = init;
    params.project();

    TrainResult result;
    result.params = params;
    AdamState adam;
    PlateauSchedule plateau(cfg.lr, cfg.plateau_patience, cfg.plateau_factor, cfg.lr_floor);
    EarlyStopping stopper(cfg.early_stop_patience);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order = split.train;

    for (int epoch = 0; epoch < cfg.epochs_max; ++epoch) {
        const double lr = plateau.lr();
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t end = std::min(order.size(), start + cfg.batch);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            const auto r = batch_gradient(spec, params, data, idx, rng());
            if (!adam_step(params, r.grads, adam, lr, cfg.clipnorm, trainable)) ++result.skipped_steps;
            loss_sum += r.loss.value * static_cast<double>(idx.size());
        }

        const double val = dataset_loss(spec, params, data, split.val);
        result.history.push_back(
            {epoch, loss_sum / static_cast<double>(order.size()), val, lr, params.nasr.k, params.nasr.l});

        const bool stop = stopper.update(val, epoch);
        if (stopper.improved()) {
            result.params = params;
            result.best_epoch = epoch;
            result.best_val_loss = val;
        }
        plateau.step(val);
        if (stop) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

Metrics compute_metrics(std::span<const double> p, std::span<const int> y) {
    if (p.size() != y.size()) throw ParameterError("compute_metrics: size mismatch");
    Metrics m;
    m.n = p.size();
    if (m.n == 0) return m;
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pred = p[i] >= 0.5;
        if (y[i] == 1) (pred ? tp : fn)++;
        else (pred ? fp : tn)++;
    }
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(m.n);

    double recall_sum = 0.0;
    int classes = 0;
    if (tp + fn > 0) {
        recall_sum += static_cast<double>(tp) / static_cast<double>(tp + fn);
        ++classes;
    }
    if (tn + fp > 0) {
        recall_sum += static_cast<double>(tn) / static_cast<double>(tn + fp);
        ++classes;
    }
    if (classes == 1) std::clog << "warning: single-class split; balanced accuracy uses the present class only\n";
    m.balanced_accuracy = recall_sum / classes;

    const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return m;
}

Metrics evaluate(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data,
                 std::span<const std::size_t> indices) {
    const auto p = predict(spec, params, data, indices);
    std::vector<int> y(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) y[i] = data.labels.at(indices[i]);
    return compute_metrics(p, y);
}

}  // namespace nasr
