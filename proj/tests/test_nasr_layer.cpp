#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "nasr/error.hpp"
#include "nasr/montage.hpp"
#include "nasr/nasr_layer.hpp"
#include "support.hpp"

using namespace nasr;
using namespace nasr::test;

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Matrix hadamard2() {
    const double r = 1.0 / std::sqrt(2.0);
    Matrix v(2, 2, r);
    v(1, 1) = -r;
    return v;
}

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (auto r : rows) {
        std::size_t j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

WindowBatch white_batch(std::size_t b, std::size_t c, std::size_t w, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    WindowBatch batch;
    for (std::size_t i = 0; i < b; ++i) {
        batch.windows.push_back(random_matrix(c, w, rng));
        batch.window_start_indices.push_back(i * 20);
    }
    return batch;
}

}  // namespace

TEST_CASE("threshold = K + offset") {
    NasrParams p;
    CHECK(threshold(p) == doctest::Approx(0.81).epsilon(1e-12));
    p.k = 0.0;
    CHECK(threshold(p) == doctest::Approx(0.1));
    p.k = 1.9;
    CHECK(threshold(p) == doctest::Approx(2.0));
}

TEST_CASE("NasrParams validation and projection") {
    NasrParams p;
    CHECK(p.k == doctest::Approx(0.9 * 0.9 - 0.1));
    CHECK(p.l == 0.5);
    CHECK_NOTHROW(p.validate());
    p.k = -0.1;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    p.l = 1.3;
    p.project();
    CHECK(p.k == 0.0);
    CHECK(p.l == 1.0);
    p.k_offset = 0.05;
    CHECK_THROWS_AS(p.validate(), ParameterError);
}

TEST_CASE("check_vector") {
    for (double v : check_vector(0.81, Matrix::identity(4))) CHECK(v == doctest::Approx(0.81));
    const auto c = check_vector(0.81, hadamard2());
    CHECK(std::abs(c[0] - 0.81 * std::sqrt(2.0)) < 1e-9);
    CHECK(std::abs(c[1] - 1.1455) < 1e-4);
    const auto c2 = check_vector(1.62, hadamard2());
    CHECK(c2[0] == doctest::Approx(2.0 * c[0]));
}

TEST_CASE("discard_mask: hand example") {
    NasrParams p;
    const std::vector<double> d{4.0, 0.0}, check{0.81, 0.81};
    const auto m = discard_mask(d, check, p);
    // Diff = (3.19, -0.81), mean |Diff| = 2.0
    CHECK(std::abs(m.soft[0] - logistic(20.0 * 1.595)) < 1e-9);
    CHECK(std::abs(m.soft[1] - logistic(20.0 * -0.405)) < 1e-9);
    CHECK(std::abs(m.soft[1] - 3.035e-4) < 1e-6);
    CHECK(m.soft[0] > 1.0 - 1e-9);
    CHECK(m.hard == std::vector<std::uint8_t>{1, 0});
}

TEST_CASE("discard_mask: ties and the all-below case") {
    NasrParams p;
    const std::vector<double> d{0.81, 0.81};
    const auto tie = discard_mask(d, d, p);
    for (double s : tie.soft) CHECK(s == 0.5);
    CHECK(tie.hard == std::vector<std::uint8_t>{1, 1});

    const auto low = discard_mask(std::vector<double>{0.01, 0.02, 0.0}, std::vector<double>{3.0, 3.0, 3.0}, p);
    CHECK(low.hard == std::vector<std::uint8_t>{0, 0, 0});
}

TEST_CASE("channel_spread") {
    for (double s : channel_spread(std::vector<double>(3, 0.0), Matrix::identity(3))) CHECK(s == 0.0);
    std::mt19937_64 rng(1);
    const auto e = sym_eig(random_psd(6, 6, rng));
    for (double s : channel_spread(std::vector<double>(6, 1.0), e.v)) CHECK(std::abs(s - 1.0) < 1e-12);
    const auto s = channel_spread(std::vector<double>{1.0, 0.0}, hadamard2());
    CHECK(std::abs(s[0] - 0.5) < 1e-12);
    CHECK(std::abs(s[1] - 0.5) < 1e-12);
}

TEST_CASE("noise_mask") {
    NasrParams p;
    auto m = noise_mask(std::vector<double>{0.5, 1.0, 0.0}, p);
    CHECK(m.soft[0] == 0.5);
    CHECK(std::abs(m.soft[1] - logistic(10.0)) < 1e-12);
    CHECK(std::abs(m.soft[1] - 0.99995) < 1e-5);
    CHECK(std::abs(m.soft[2] - 4.54e-5) < 1e-7);
    CHECK(m.hard == std::vector<std::uint8_t>{1, 1, 0});
}

TEST_CASE("reconstruct: hand examples") {
    NasrConfig cfg;
    const Matrix x = from_rows({{1, 2}, {3, 4}});
    CHECK(reconstruct(x, std::vector<std::uint8_t>{0, 0}, cfg) == x);
    CHECK(reconstruct(x, std::vector<std::uint8_t>{0, 1}, cfg) == from_rows({{1, 2}, {1, 2}}));
    CHECK(reconstruct(x, std::vector<std::uint8_t>{1, 1}, cfg) == Matrix(2, 2));
}

TEST_CASE("reconstruct: neighbour refinement by hand") {
    // Chain 0-1-2; channel 1 noisy.
    NasrConfig cfg;
    cfg.reconstruct_neighbors = true;
    cfg.adjacency = from_rows({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}});
    const Matrix x = from_rows({{1, 1}, {9, 9}, {3, 5}});
    // CleanAv = ((1+3)/2, (1+5)/2) = (2, 3); X~ row 1 = CleanAv
    // Recon row 1 = mean of X~ rows 0 and 2 = ((1+3)/2, (1+5)/2)
    const Matrix out = reconstruct(x, std::vector<std::uint8_t>{0, 1, 0}, cfg);
    CHECK(out == from_rows({{1, 1}, {2, 3}, {3, 5}}));

    // Channel 0 noisy with its only neighbour (1) also noisy: X~_1 is the global fill.
    const Matrix out2 = reconstruct(x, std::vector<std::uint8_t>{1, 1, 0}, cfg);
    CHECK(out2 == from_rows({{3, 5}, {3, 5}, {3, 5}}));
}

TEST_CASE("reconstruct: soft masks interpolate") {
    NasrConfig cfg;
    const Matrix x = from_rows({{1, 2}, {3, 4}});
    const Matrix out = reconstruct(x, std::vector<double>{0.0, 0.5}, cfg);
    // good = (1, .5), nGood = 1.5, CleanAv = (1*1 + 3*.5, 2 + 4*.5)/1.5
    const double ca0 = 2.5 / 1.5, ca1 = 4.0 / 1.5;
    CHECK(out(0, 0) == 1.0);
    CHECK(out(1, 0) == doctest::Approx(1.5 + 0.5 * ca0));
    CHECK(out(1, 1) == doctest::Approx(2.0 + 0.5 * ca1));
}

TEST_CASE("forward: large K flags nothing and passes the input through") {
    auto batch = white_batch(5, 8, 256, 2);
    NasrParams p;
    p.k = 10.0;
    NasrConfig cfg;
    const auto out = forward(batch, p, cfg);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        for (auto m : out.noise_mask[b]) CHECK(m == 0);
        CHECK(out.recon[b] == batch.windows[b]);
    }
}

TEST_CASE("forward: a 50x single-channel burst is the only flagged cell") {
    auto batch = white_batch(6, 28, 256, 3);
    for (std::size_t t = 0; t < 256; ++t) batch.windows[4](11, t) *= 50.0;
    NasrConfig cfg;
    const auto out = forward(batch, NasrParams{}, cfg);
    for (std::size_t b = 0; b < batch.size(); ++b)
        for (std::size_t c = 0; c < 28; ++c) CHECK(out.noise_mask[b][c] == static_cast<std::uint8_t>(b == 4 && c == 11));
    for (std::size_t c = 0; c < 28; ++c) {
        if (c == 11) continue;
        for (std::size_t t = 0; t < 256; ++t) REQUIRE(out.recon[4](c, t) == batch.windows[4](c, t));
    }
}

TEST_CASE("forward: deterministic and consistent with forward_window and infer_window") {
    auto batch = white_batch(4, 28, 256, 4);
    for (std::size_t t = 236; t < 256; ++t) batch.windows[1](3, t) += 20.0 * std::sin(0.9 * t);
    NasrConfig cfg;
    cfg.reconstruct_neighbors = true;
    cfg.adjacency = build_adjacency(default_montage());
    const auto a = forward(batch, NasrParams{}, cfg);
    const auto b = forward(batch, NasrParams{}, cfg);
    CHECK(a.recon == b.recon);
    CHECK(a.noise_mask == b.noise_mask);
    CHECK(a.noise_mask[1][3] == 1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto w = forward_window(batch.windows[i], NasrParams{}, cfg);
        CHECK(w.recon == a.recon[i]);
        const auto lean = infer_window(batch.windows[i], NasrParams{}, cfg);
        CHECK(lean.recon == a.recon[i]);
        CHECK(lean.noise_hard == a.noise_mask[i]);
    }
}

TEST_CASE("forward: cached spectrum gives identical results") {
    auto batch = white_batch(2, 10, 64, 5);
    NasrConfig cfg;
    const auto spec = window_spectrum(batch.windows[0], cfg);
    const auto a = forward_window(batch.windows[0], NasrParams{}, cfg);
    const auto b = forward_window(batch.windows[0], NasrParams{}, cfg, &spec);
    CHECK(a.recon == b.recon);
    CHECK(a.cache.noise_soft == b.cache.noise_soft);
}

TEST_CASE("invariants on random windows") {
    std::mt19937_64 rng(6);
    NasrConfig cfg;
    for (int trial = 0; trial < 30; ++trial) {
        Matrix x = random_matrix(12, 128, rng);
        const std::size_t hit = trial % 12;
        for (std::size_t t = 100; t < 128; ++t) x(hit, t) *= 1.0 + trial;
        NasrParams p;
        p.k = 0.05 * trial;
        p.l = 0.1 + 0.02 * trial;
        const auto r = forward_window(x, p, cfg);
        for (std::size_t c = 0; c < 12; ++c) {
            CHECK(r.cache.spread[c] >= 0.0);
            CHECK(r.cache.spread[c] <= 1.0 + 1e-12);
            CHECK(r.noise_hard[c] == round_mask(r.cache.noise_soft[c]));
            if (!r.noise_hard[c])
                for (std::size_t t = 0; t < 128; ++t) REQUIRE(r.recon(c, t) == x(c, t));
        }
        for (std::size_t j = 0; j < 12; ++j)
            CHECK(r.cache.discard_used[j] == static_cast<double>(round_mask(r.cache.discard_soft[j])));

        // L monotonicity.
        NasrParams higher = p;
        higher.l = std::min(1.0, p.l + 0.1);
        const auto r2 = forward_window(x, higher, cfg);
        for (std::size_t c = 0; c < 12; ++c) CHECK(r2.cache.noise_soft[c] <= r.cache.noise_soft[c]);

        // K monotonicity of the unnormalised discard logits.
        NasrParams stricter = p;
        stricter.k += 0.2;
        const auto r3 = forward_window(x, stricter, cfg);
        for (std::size_t j = 0; j < 12; ++j) CHECK(r3.cache.diff[j] <= r.cache.diff[j]);
    }
}

TEST_CASE("K monotonicity of discard_soft can fail through the NormDiff scale") {
    // Two positive differences: raising the threshold shrinks mean |Diff| faster
    // than the large difference, so its normalised value grows.
    NasrParams q;
    q.tau_d = 1.0;
    const std::vector<double> d{10.81, 0.91};
    const auto lo = discard_mask(d, std::vector<double>(2, 0.81), q);
    const auto hi = discard_mask(d, std::vector<double>(2, 0.86), q);
    CHECK(hi.soft[0] > lo.soft[0]);
    CHECK(hi.soft[1] < lo.soft[1]);
}

TEST_CASE("permutation: Check and Spread are invariant, Discard is index-aligned") {
    std::mt19937_64 rng(7);
    const auto e = sym_eig(random_psd(5, 5, rng));
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    Matrix vp(5, 5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) vp(i, j) = e.v(i, perm[j]);
    const auto c1 = check_vector(0.8, e.v), c2 = check_vector(0.8, vp);
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(c1[c] - c2[c]) < 1e-14);
    const std::vector<double> discard{0.9, 0.1, 0.0, 0.4, 1.0};
    std::vector<double> dp(5);
    for (std::size_t j = 0; j < 5; ++j) dp[j] = discard[perm[j]];
    const auto s1 = channel_spread(discard, e.v), s2 = channel_spread(dp, vp);
    for (std::size_t c = 0; c < 5; ++c) CHECK(std::abs(s1[c] - s2[c]) < 1e-14);
}

TEST_CASE("backward: zero upstream gives zero gradients") {
    auto batch = white_batch(3, 8, 64, 8);
    NasrConfig cfg;
    const auto out = forward(batch, NasrParams{}, cfg);
    std::vector<Matrix> up(3, Matrix(8, 64));
    const auto g = backward(up, out, NasrParams{}, cfg);
    CHECK(g.dk == 0.0);
    CHECK(g.dl == 0.0);
    NasrOutput empty;
    CHECK_THROWS_AS(backward(up, empty, NasrParams{}, cfg), UsageError);
}

namespace {

struct GradCase {
    Matrix x;
    Matrix target;
    NasrConfig cfg;
};

double quadratic_loss(const GradCase& gc, const NasrParams& p) {
    const auto r = forward_window(gc.x, p, gc.cfg);
    double s = 0.0;
    for (std::size_t i = 0; i < r.recon.size(); ++i) {
        const double d = r.recon.values()[i] - gc.target.values()[i];
        s += 0.5 * d * d;
    }
    return s;
}

bool unsaturated(const WindowCache& st) {
    const auto mid = [](double s) { return s > 0.02 && s < 0.98; };
    return std::any_of(st.discard_soft.begin(), st.discard_soft.end(), mid) ||
           std::any_of(st.noise_soft.begin(), st.noise_soft.end(), mid);
}

}  // namespace

TEST_CASE("backward: analytic dK, dL match central differences at 20 unsaturated points") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uk(0.0, 1.5), ul(0.05, 0.95);
    int accepted = 0;
    for (int attempt = 0; accepted < 20 && attempt < 5000; ++attempt) {
        GradCase gc;
        gc.x = random_matrix(6, 64, rng);
        const std::size_t hit = attempt % 6;
        for (std::size_t t = 44; t < 64; ++t) gc.x(hit, t) *= 3.0;
        gc.target = random_matrix(6, 64, rng, 0.5);
        gc.cfg.mode = MaskMode::smooth;
        if (attempt % 2 == 1) {
            gc.cfg.reconstruct_neighbors = true;
            gc.cfg.adjacency = Matrix(6, 6);
            for (std::size_t i = 0; i + 1 < 6; ++i) gc.cfg.adjacency(i, i + 1) = gc.cfg.adjacency(i + 1, i) = 1.0;
        }
        NasrParams p;
        p.k = uk(rng);
        p.l = ul(rng);
        const auto r = forward_window(gc.x, p, gc.cfg);
        if (!unsaturated(r.cache)) continue;
        ++accepted;

        Matrix up = r.recon;
        for (std::size_t i = 0; i < up.size(); ++i) up.values()[i] -= gc.target.values()[i];
        const auto g = backward_window(up, gc.x, r.cache, p, gc.cfg);

        const double fk = central_difference([&](double k) { NasrParams q = p; q.k = k; return quadratic_loss(gc, q); }, p.k);
        const double fl = central_difference([&](double l) { NasrParams q = p; q.l = l; return quadratic_loss(gc, q); }, p.l);
        CHECK(rel_error(g.dk, fk, 1e-6) < 1e-3);
        CHECK(rel_error(g.dl, fl, 1e-6) < 1e-3);
    }
    CHECK(accepted == 20);
}

TEST_CASE("backward: dL sign opposes the pass-through preference") {
    // One noisy channel; the target is the raw input, so less reconstruction is better.
    Matrix x = white_batch(1, 6, 64, 10).windows[0];
    for (std::size_t t = 44; t < 64; ++t) x(2, t) *= 4.0;
    NasrConfig cfg;
    cfg.mode = MaskMode::smooth;
    NasrParams p;
    const auto r = forward_window(x, p, cfg);
    Matrix up = r.recon;
    for (std::size_t i = 0; i < up.size(); ++i) up.values()[i] -= x.values()[i];
    const auto g = backward_window(up, x, r.cache, p, cfg);
    // Raising L lowers noise_soft and so lowers this loss.
    CHECK(g.dl < 0.0);
}

TEST_CASE("NasrConfig validation") {
    NasrConfig cfg;
    cfg.reconstruct_neighbors = true;
    CHECK_THROWS_AS(cfg.validate(4), ParameterError);
    cfg.adjacency = Matrix(4, 4);
    cfg.adjacency(0, 1) = 1.0;
    CHECK_THROWS_AS(cfg.validate(4), ParameterError);
    cfg.adjacency(1, 0) = 1.0;
    CHECK_NOTHROW(cfg.validate(4));
    cfg.s_nonoverlap = 1;
    CHECK_THROWS_AS(cfg.validate(4), ParameterError);
}
