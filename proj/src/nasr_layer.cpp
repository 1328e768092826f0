#include "nasr/nasr_layer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nasr/error.hpp"

namespace nasr {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

void NasrParams::validate() const {
    if (!(k >= 0.0)) throw ParameterError("K must be >= 0");
    if (!(l >= 0.0 && l <= 1.0)) throw ParameterError("L must lie in [0, 1]");
    if (!(k_offset >= 0.1)) throw ParameterError("K offset must be >= 0.1");
    if (!(tau_d > 0.0 && tau_l > 0.0 && eps > 0.0))
        throw ParameterError("temperatures and epsilon must be positive");
}

void NasrParams::project() {
    k = std::max(k, 0.0);
    l = std::clamp(l, 0.0, 1.0);
}

void NasrConfig::validate(std::size_t channels) const {
    if (!covariance_full_window && s_nonoverlap < 2)
        throw ParameterError("non-overlapping segment needs S >= 2");
    if (!reconstruct_neighbors) return;
    if (adjacency.rows() != channels || adjacency.cols() != channels)
        throw ParameterError("neighbour reconstruction needs a C x C adjacency matrix");
    for (std::size_t i = 0; i < channels; ++i) {
        if (adjacency(i, i) != 0.0) throw ParameterError("adjacency diagonal must be zero");
        for (std::size_t j = i + 1; j < channels; ++j)
            if (adjacency(i, j) != adjacency(j, i))
                throw ParameterError("adjacency matrix must be symmetric");
    }
}

double threshold(const NasrParams& params) { return params.k + params.k_offset; }

std::vector<double> check_vector(double th, const Matrix& v) {
    std::vector<double> check(v.rows(), 0.0);
    for (std::size_t c = 0; c < v.rows(); ++c) {
        double acc = 0.0;
        for (double x : v.row(c)) acc += std::abs(x);
        check[c] = th * acc;
    }
    return check;
}

MaskPair discard_mask(std::span<const double> d, std::span<const double> check,
                      const NasrParams& params) {
    const std::size_t n = d.size();
    if (check.size() != n) throw ParameterError("eigenvalue and check vectors differ in length");
    std::vector<double> diff(n);
    double mean_abs = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        diff[j] = d[j] - check[j];
        mean_abs += std::abs(diff[j]);
    }
    mean_abs /= static_cast<double>(n);
    const double denom = std::max(mean_abs, params.eps);

    MaskPair out{std::vector<double>(n), std::vector<std::uint8_t>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        out.soft[j] = sigmoid(params.tau_d * diff[j] / denom);
        out.hard[j] = round_mask(out.soft[j]);
    }
    return out;
}

std::vector<double> channel_spread(std::span<const double> discard, const Matrix& v) {
    if (discard.size() != v.cols()) throw ParameterError("discard length does not match V");
    std::vector<double> spread(v.rows(), 0.0);
    for (std::size_t c = 0; c < v.rows(); ++c) {
        auto row = v.row(c);
        double acc = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double p = discard[j] * row[j];
            acc += p * p;
        }
        spread[c] = acc;
    }
    return spread;
}

MaskPair noise_mask(std::span<const double> spread, const NasrParams& params) {
    MaskPair out{std::vector<double>(spread.size()), std::vector<std::uint8_t>(spread.size())};
    for (std::size_t c = 0; c < spread.size(); ++c) {
        out.soft[c] = sigmoid(params.tau_l * (spread[c] - params.l));
        out.hard[c] = round_mask(out.soft[c]);
    }
    return out;
}

// ============================================================================
// Reconstruction
// ============================================================================

namespace {

struct FillResult {
    Matrix recon;
    double good_sum = 0.0;
    std::vector<double> clean_av;
    Matrix filled;
    Matrix neighbor_avg;
};

FillResult fill_noisy(const Matrix& x, std::span<const double> noise, const NasrConfig& config) {
    const std::size_t c = x.rows(), w = x.cols();
    if (noise.size() != c) throw ParameterError("noise mask length does not match channels");
    if (config.reconstruct_neighbors && (config.adjacency.rows() != c || config.adjacency.cols() != c))
        throw ParameterError("neighbour reconstruction needs a C x C adjacency matrix");

    FillResult r;
    for (double n : noise) r.good_sum += 1.0 - n;
    const double n_good = std::max(r.good_sum, 1.0);

    r.clean_av.assign(w, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double good = 1.0 - noise[ch];
        if (good == 0.0) continue;
        auto row = x.row(ch);
        for (std::size_t t = 0; t < w; ++t) r.clean_av[t] += row[t] * good;
    }
    for (double& v : r.clean_av) v /= n_good;

    r.filled = Matrix(c, w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double good = 1.0 - noise[ch];
        auto src = x.row(ch);
        auto dst = r.filled.row(ch);
        for (std::size_t t = 0; t < w; ++t) dst[t] = src[t] * good + r.clean_av[t] * noise[ch];
    }

    if (!config.reconstruct_neighbors) {
        r.recon = r.filled;
        return r;
    }

    r.neighbor_avg = Matrix(c, w);
    r.recon = Matrix(c, w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        auto avg = r.neighbor_avg.row(ch);
        double count = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double a = config.adjacency(ch, k);
            if (a == 0.0) continue;
            count += a;
            auto src = r.filled.row(k);
            for (std::size_t t = 0; t < w; ++t) avg[t] += a * src[t];
        }
        const double denom = std::max(count, 1.0);
        for (double& v : avg) v /= denom;

        const double good = 1.0 - noise[ch];
        auto fill = r.filled.row(ch);
        auto dst = r.recon.row(ch);
        for (std::size_t t = 0; t < w; ++t) dst[t] = good * fill[t] + noise[ch] * avg[t];
    }
    return r;
}

}  // namespace

Matrix reconstruct(const Matrix& x, std::span<const double> noise, const NasrConfig& config) {
    return fill_noisy(x, noise, config).recon;
}

Matrix reconstruct(const Matrix& x, std::span<const std::uint8_t> noise, const NasrConfig& config) {
    std::vector<double> as_real(noise.begin(), noise.end());
    return reconstruct(x, as_real, config);
}

// ============================================================================
// Forward / backward
// ============================================================================

EigenPair window_spectrum(const Matrix& x, const NasrConfig& config) {
    return covariance_spectrum(x, config.segment(), config.solver);
}

namespace {

// Eqs. from eigenpairs to the per-channel noise decision; fills the mask part of `st`.
void mask_stage(WindowCache& st, std::vector<std::uint8_t>& noise_hard, const NasrParams& params,
                bool smooth) {
    const std::size_t c = st.eig.d.size();
    const double th = threshold(params);
    st.row_abs = check_vector(1.0, st.eig.v);

    st.diff.resize(c);
    st.mean_abs_diff = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
        st.diff[j] = st.eig.d[j] - th * st.row_abs[j];
        st.mean_abs_diff += std::abs(st.diff[j]);
    }
    st.mean_abs_diff /= static_cast<double>(c);
    st.denom = std::max(st.mean_abs_diff, params.eps);

    st.discard_soft.resize(c);
    st.discard_used.resize(c);
    for (std::size_t j = 0; j < c; ++j) {
        st.discard_soft[j] = sigmoid(params.tau_d * st.diff[j] / st.denom);
        st.discard_used[j] = smooth ? st.discard_soft[j] : round_mask(st.discard_soft[j]);
    }

    st.spread = channel_spread(st.discard_used, st.eig.v);
    auto noise = noise_mask(st.spread, params);
    st.noise_soft = std::move(noise.soft);
    noise_hard = std::move(noise.hard);
    st.noise_used.resize(c);
    for (std::size_t ch = 0; ch < c; ++ch)
        st.noise_used[ch] = smooth ? st.noise_soft[ch] : static_cast<double>(noise_hard[ch]);
}

}  // namespace

WindowResult forward_window(const Matrix& x, const NasrParams& params, const NasrConfig& config,
                            const EigenPair* spectrum) {
    WindowResult out;
    WindowCache& st = out.cache;
    st.eig = spectrum ? *spectrum : window_spectrum(x, config);
    if (st.eig.d.size() != x.rows()) throw ParameterError("spectrum does not match window channels");
    mask_stage(st, out.noise_hard, params, config.mode == MaskMode::smooth);

    auto fill = fill_noisy(x, st.noise_used, config);
    out.recon = std::move(fill.recon);
    st.good_sum = fill.good_sum;
    st.clean_av = std::move(fill.clean_av);
    st.filled = std::move(fill.filled);
    st.neighbor_avg = std::move(fill.neighbor_avg);
    return out;
}

InferResult infer_window(const Matrix& x, const NasrParams& params, const NasrConfig& config) {
    WindowCache st;
    st.eig = window_spectrum(x, config);
    InferResult out;
    mask_stage(st, out.noise_hard, params, false);
    const bool any = std::any_of(out.noise_hard.begin(), out.noise_hard.end(),
                                 [](std::uint8_t m) { return m != 0; });
    out.recon = any ? fill_noisy(x, st.noise_used, config).recon : x;
    return out;
}

NasrGrads backward_window(const Matrix& upstream, const Matrix& x, const WindowCache& st,
                          const NasrParams& params, const NasrConfig& config) {
    const std::size_t c = x.rows(), w = x.cols();
    if (st.eig.d.size() != c || st.noise_used.size() != c)
        throw UsageError("backward called without a matching forward cache");
    if (upstream.rows() != c || upstream.cols() != w)
        throw ParameterError("upstream gradient shape does not match the window");

    const auto dot = [w](std::span<const double> a, std::span<const double> b) {
        double acc = 0.0;
        for (std::size_t t = 0; t < w; ++t) acc += a[t] * b[t];
        return acc;
    };

    // d/d(noise_c), with good_c = 1 - noise_c folded in at the end.
    std::vector<double> d_noise(c, 0.0), d_good(c, 0.0);

    Matrix d_filled;
    if (config.reconstruct_neighbors) {
        d_filled = Matrix(c, w);
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double good = 1.0 - st.noise_used[ch];
            auto g = upstream.row(ch);
            d_good[ch] += dot(g, st.filled.row(ch));
            d_noise[ch] += dot(g, st.neighbor_avg.row(ch));
            auto df = d_filled.row(ch);
            for (std::size_t t = 0; t < w; ++t) df[t] += good * g[t];

            double count = 0.0;
            for (std::size_t k = 0; k < c; ++k) count += config.adjacency(ch, k);
            const double scale = st.noise_used[ch] / std::max(count, 1.0);
            if (scale == 0.0) continue;
            for (std::size_t k = 0; k < c; ++k) {
                const double a = config.adjacency(ch, k);
                if (a == 0.0) continue;
                auto dk = d_filled.row(k);
                for (std::size_t t = 0; t < w; ++t) dk[t] += scale * a * g[t];
            }
        }
    }
    const Matrix& g_fill = config.reconstruct_neighbors ? d_filled : upstream;

    // X~_c = x_c * good_c + CleanAv * noise_c
    std::vector<double> d_clean_av(w, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        auto g = g_fill.row(ch);
        d_good[ch] += dot(g, x.row(ch));
        d_noise[ch] += dot(g, st.clean_av);
        const double n = st.noise_used[ch];
        if (n == 0.0) continue;
        for (std::size_t t = 0; t < w; ++t) d_clean_av[t] += n * g[t];
    }

    // CleanAv_t = sum_c x_ct good_c / max(sum_c good_c, 1)
    const double n_good = std::max(st.good_sum, 1.0);
    for (std::size_t ch = 0; ch < c; ++ch) d_good[ch] += dot(d_clean_av, x.row(ch)) / n_good;
    if (st.good_sum > 1.0) {
        const double d_ngood = -dot(d_clean_av, st.clean_av) / n_good;
        for (double& dg : d_good) dg += d_ngood;
    }

    NasrGrads grads;

    // Noise_s = sigmoid(tau_L (Spread - L)); the straight-through path uses d(soft).
    std::vector<double> d_spread(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double total = d_noise[ch] - d_good[ch];
        const double s = st.noise_soft[ch];
        const double dz = total * s * (1.0 - s) * params.tau_l;
        d_spread[ch] = dz;
        grads.dl -= dz;
    }

    // Spread_c = sum_j Discard_j^2 V_cj^2
    std::vector<double> d_discard(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (d_spread[ch] == 0.0) continue;
        auto row = st.eig.v.row(ch);
        for (std::size_t j = 0; j < c; ++j)
            d_discard[j] += d_spread[ch] * 2.0 * st.discard_used[j] * row[j] * row[j];
    }

    // Discard_s = sigmoid(tau_D * Diff / max(mean|Diff|, eps))
    std::vector<double> d_normdiff(c);
    for (std::size_t j = 0; j < c; ++j) {
        const double s = st.discard_soft[j];
        d_normdiff[j] = d_discard[j] * s * (1.0 - s) * params.tau_d;
    }
    std::vector<double> d_diff(c);
    for (std::size_t j = 0; j < c; ++j) d_diff[j] = d_normdiff[j] / st.denom;
    if (st.mean_abs_diff > params.eps) {
        double d_denom = 0.0;
        for (std::size_t j = 0; j < c; ++j)
            d_denom -= d_normdiff[j] * st.diff[j] / (st.denom * st.denom);
        for (std::size_t j = 0; j < c; ++j) {
            const double sign = st.diff[j] > 0.0 ? 1.0 : (st.diff[j] < 0.0 ? -1.0 : 0.0);
            d_diff[j] += d_denom * sign / static_cast<double>(c);
        }
    }

    // Diff_j = D_j - (K + K_offset) * rowabs_j
    for (std::size_t j = 0; j < c; ++j) grads.dk -= d_diff[j] * st.row_abs[j];
    return grads;
}

NasrOutput forward(const WindowBatch& batch, const NasrParams& params, const NasrConfig& config) {
    params.validate();
    config.validate(batch.channels());
    NasrOutput out;
    const std::size_t b = batch.size();
    out.recon.reserve(b);
    out.cache.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        WindowResult r;
        try {
            r = forward_window(batch.windows[i], params, config);
        } catch (const NumericalError& e) {
            throw NumericalError("window " + std::to_string(i) + ": " + e.what());
        }
        out.recon.push_back(std::move(r.recon));
        out.noise_mask.push_back(std::move(r.noise_hard));
        out.discard_soft.push_back(r.cache.discard_soft);
        out.noise_soft.push_back(r.cache.noise_soft);
        out.inputs.push_back(batch.windows[i]);
        out.cache.push_back(std::move(r.cache));
    }
    return out;
}

NasrGrads backward(const std::vector<Matrix>& upstream, const NasrOutput& state,
                   const NasrParams& params, const NasrConfig& config) {
    if (state.cache.empty() || state.cache.size() != state.inputs.size())
        throw UsageError("backward needs the cached state of a forward pass");
    if (upstream.size() != state.cache.size())
        throw ParameterError("upstream batch size does not match the cached forward pass");
    NasrGrads total;
    for (std::size_t i = 0; i < upstream.size(); ++i) {
        const auto g = backward_window(upstream[i], state.inputs[i], state.cache[i], params, config);
        total.dk += g.dk;
        total.dl += g.dl;
    }
    return total;
}

}  // namespace nasr
