#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "nasr/error.hpp"
#include "nasr/trainer.hpp"
#include "support.hpp"

using namespace nasr;
using namespace nasr::test;

TEST_CASE("combined_loss: perfect and uninformative predictions") {
    const std::vector<double> p{1.0, 0.0, 1.0, 0.0};
    const std::vector<int> y{1, 0, 1, 0};
    const auto perfect = combined_loss(p, y);
    CHECK(perfect.value < 1e-5);

    const std::vector<double> half{0.5, 0.5};
    const std::vector<int> y2{1, 0};
    const auto l = combined_loss(half, y2);
    CHECK(std::abs(l.bce - std::log(2.0)) < 1e-9);
    CHECK(std::abs(l.dice - 0.5) < 1e-6);
    CHECK(std::abs(l.value - 0.5966) < 1e-4);
}

TEST_CASE("combined_loss: gradient matches central differences") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> p(8);
        std::vector<int> y(8);
        for (std::size_t i = 0; i < 8; ++i) {
            p[i] = u(rng);
            y[i] = static_cast<int>(rng() % 2);
        }
        const auto l = combined_loss(p, y);
        for (std::size_t i = 0; i < 8; ++i) {
            const double fd = central_difference(
                [&](double v) {
                    auto q = p;
                    q[i] = v;
                    return combined_loss(q, y).value;
                },
                p[i], 1e-6);
            CHECK(std::abs(l.dprob[i] - fd) < 1e-5);
        }
    }
}

TEST_CASE("combined_loss: clamped probabilities carry no gradient") {
    const std::vector<double> p{1.0, 0.0};
    const std::vector<int> y{0, 1};
    const auto l = combined_loss(p, y);
    CHECK(std::isfinite(l.value));
    CHECK(l.dprob[0] == 0.0);
    CHECK(l.dprob[1] == 0.0);
}

TEST_CASE("clip_global_norm") {
    std::vector<double> g{6.0, 8.0};
    const double n = clip_global_norm(g, 1.0);
    CHECK(n == doctest::Approx(10.0));
    CHECK(std::abs(std::hypot(g[0], g[1]) - 1.0) < 1e-12);
    CHECK(std::abs(g[0] / g[1] - 0.75) < 1e-12);
    std::vector<double> small{0.3, 0.4};
    clip_global_norm(small, 1.0);
    CHECK(small == std::vector<double>{0.3, 0.4});
}

TEST_CASE("adam_update: zero gradients leave parameters unchanged") {
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    AdamState st;
    for (int i = 0; i < 5; ++i) CHECK(adam_update(p, g, st, 1e-3, 1.0));
    CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(st.t == 5);
}

TEST_CASE("adam_update: converges on a quadratic") {
    std::vector<double> p{3.0, -2.0};
    const std::vector<double> target{0.5, 1.5};
    AdamState st;
    for (int i = 0; i < 500; ++i) {
        std::vector<double> g{p[0] - target[0], p[1] - target[1]};
        adam_update(p, g, st, 0.05, 10.0);
    }
    CHECK(std::abs(p[0] - target[0]) < 1e-3);
    CHECK(std::abs(p[1] - target[1]) < 1e-3);
}

TEST_CASE("adam_update: first step moves each entry by lr against its sign") {
    std::vector<double> p{0.0, 0.0};
    const std::vector<double> g{0.5, -0.25};
    AdamState st;
    adam_update(p, g, st, 1e-3, 100.0);
    CHECK(std::abs(p[0] + 1e-3) < 1e-9);
    CHECK(std::abs(p[1] - 1e-3) < 1e-9);
}

TEST_CASE("adam_update: non-finite gradient skips the step") {
    std::vector<double> p{1.0, 2.0};
    AdamState st;
    adam_update(p, std::vector<double>{0.1, 0.1}, st, 1e-3, 1.0);
    const auto before = p;
    const auto m = st.m;
    CHECK_FALSE(adam_update(p, std::vector<double>{std::numeric_limits<double>::quiet_NaN(), 0.1}, st, 1e-3, 1.0));
    CHECK(p == before);
    CHECK(st.m == m);
    CHECK(st.t == 1);
}

TEST_CASE("adam_update: frozen entries keep value and moments") {
    std::vector<double> p{1.0, 2.0};
    const std::vector<std::uint8_t> mask{0, 1};
    AdamState st;
    for (int i = 0; i < 3; ++i) adam_update(p, std::vector<double>{1.0, 1.0}, st, 1e-2, 10.0, mask);
    CHECK(p[0] == 1.0);
    CHECK(st.m[0] == 0.0);
    CHECK(st.v[0] == 0.0);
    CHECK(p[1] < 2.0);
}

TEST_CASE("adam_step projects onto the feasible set") {
    auto params = ModelParams::initial(3);
    params.nasr.k = 1e-4;
    params.nasr.l = 1.0 - 1e-4;
    params.scaling.w = {1e-4, 1.0, 1.0};
    auto g = ModelGrads::zeros(3);
    g.dk = 1.0;
    g.dl = -1.0;
    g.dscaling = {1.0, 0.0, 0.0};
    AdamState st;
    adam_step(params, g, st, 0.1, 10.0);
    CHECK(params.nasr.k == 0.0);
    CHECK(params.nasr.l == 1.0);
    CHECK(params.scaling.w[0] == 0.0);
}

TEST_CASE("model parameter layout round-trips") {
    auto p = ModelParams::initial(2);
    p.nasr.k = 0.3;
    p.nasr.l = 0.4;
    p.scaling.w = {0.5, 0.6};
    p.decoder.weights = {0.7, 0.8};
    p.decoder.bias = 0.9;
    const auto f = p.flatten();
    CHECK(f == std::vector<double>{0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
    auto q = ModelParams::initial(2);
    q.unflatten(f);
    CHECK(q.flatten() == f);
    CHECK_THROWS(q.unflatten(std::vector<double>(3, 0.0)));
}

TEST_CASE("trainable mask follows the variant") {
    PipelineSpec spec;
    CHECK(spec.trainable_mask(2) == std::vector<std::uint8_t>{1, 1, 1, 1, 1, 1, 1});
    spec.weighted = false;
    CHECK(spec.trainable_mask(2) == std::vector<std::uint8_t>{1, 1, 0, 0, 1, 1, 1});
    spec.cleaning = CleaningStage::none;
    CHECK(spec.trainable_mask(2) == std::vector<std::uint8_t>{0, 0, 0, 0, 1, 1, 1});
}

TEST_CASE("PlateauSchedule: golden trace") {
    PlateauSchedule s(1e-3, 2, 0.5, 2e-4);
    // loss:    1.0  0.9  0.9  0.95 0.8  0.8  0.8  0.8  0.8  0.8
    // wait:    0    0    1    2->0 0    1    2->0 1    2->0 ...
    const std::vector<double> loss{1.0, 0.9, 0.9, 0.95, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8};
    const std::vector<double> lr{1e-3, 1e-3, 1e-3, 5e-4, 5e-4, 5e-4, 2.5e-4, 2.5e-4, 2e-4, 2e-4};
    for (std::size_t i = 0; i < loss.size(); ++i) CHECK(s.step(loss[i]) == doctest::Approx(lr[i]).epsilon(1e-12));
}

TEST_CASE("EarlyStopping: golden trace") {
    EarlyStopping e(3);
    CHECK_FALSE(e.update(1.0, 0));
    CHECK(e.improved());
    CHECK_FALSE(e.update(1.0, 1));  // equal is not an improvement
    CHECK_FALSE(e.improved());
    CHECK_FALSE(e.update(0.5, 2));
    CHECK(e.best_epoch() == 2);
    CHECK_FALSE(e.update(0.6, 3));
    CHECK_FALSE(e.update(0.7, 4));
    CHECK(e.update(0.5, 5));
    CHECK(e.best_epoch() == 2);
    CHECK(e.best() == 0.5);
}

TEST_CASE("sequential_split and TrainConfig validation") {
    TrainConfig cfg;
    const auto s = sequential_split(100, cfg);
    CHECK(s.train.size() == 80);
    CHECK(s.val.size() == 10);
    CHECK(s.test.size() == 10);
    CHECK(s.train.front() == 0);
    CHECK(s.val.front() == 80);
    CHECK(s.test.back() == 99);
    CHECK(sequential_split(100, cfg).val == s.val);
    CHECK_THROWS_AS(sequential_split(3, cfg), ConfigError);

    TrainConfig bad = cfg;
    bad.train_fraction = 0.9;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lr = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.batch = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("compute_metrics examples") {
    const std::vector<double> all_pos{0.9, 0.9, 0.9, 0.9};
    const std::vector<int> y{1, 1, 0, 0};
    const auto m = compute_metrics(all_pos, y);
    CHECK(m.accuracy == doctest::Approx(0.5));
    CHECK(m.balanced_accuracy == doctest::Approx(0.5));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));

    const std::vector<double> p{0.9, 0.1, 0.1, 0.1};
    const auto m2 = compute_metrics(p, y);
    CHECK(m2.accuracy == doctest::Approx(0.75));
    CHECK(m2.balanced_accuracy == doctest::Approx(0.75));
    CHECK(m2.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(m2.n == 4);

    // 0.5 counts as positive.
    const auto m3 = compute_metrics(std::vector<double>{0.5}, std::vector<int>{1});
    CHECK(m3.accuracy == 1.0);
}

namespace {

/// Label-1 windows carry 3x the amplitude on channel 0.
WindowBatch separable_batch(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    WindowBatch b;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
        Matrix x = random_matrix(4, 64, rng);
        const int y = static_cast<int>((i / 3) % 2);
        if (y == 1)
            for (double& v : x.row(0)) v *= 3.0;
        b.windows.push_back(std::move(x));
        b.window_start_indices.push_back(i * 64);
        labels.push_back(y);
    }
    b.labels = labels;
    return b;
}

}  // namespace

TEST_CASE("fit: separable data reaches high validation accuracy") {
    PipelineSpec spec;
    spec.cleaning = CleaningStage::none;
    const auto data = prepare_data(spec, separable_batch(600, 2));
    TrainConfig cfg;
    cfg.epochs_max = 50;
    cfg.lr = 1e-2;
    cfg.seed = 3;
    const auto split = sequential_split(data.size(), cfg);
    const auto r = fit(spec, ModelParams::initial(4), data, split, cfg);
    CHECK(evaluate(spec, r.params, data, split.val).balanced_accuracy > 0.95);

    const auto again = fit(spec, ModelParams::initial(4), data, split, cfg);
    CHECK(again.params.flatten() == r.params.flatten());
    CHECK(again.history.size() == r.history.size());
}

TEST_CASE("fit: constant validation loss drives the schedule golden trace") {
    // Saturated decoder: every probability is clamped, every gradient is zero
    // and the validation loss never improves after epoch 0.
    PipelineSpec spec;
    spec.cleaning = CleaningStage::none;
    auto batch = separable_batch(100, 4);
    batch.labels = std::vector<int>(100, 1);
    const auto data = prepare_data(spec, batch);
    auto init = ModelParams::initial(4);
    init.decoder.bias = 20.0;

    TrainConfig cfg;
    cfg.epochs_max = 250;
    cfg.lr = 1e-3;
    const auto split = sequential_split(data.size(), cfg);
    const auto r = fit(spec, init, data, split, cfg);

    REQUIRE(r.history.size() == 51);
    CHECK(r.stopped_early);
    CHECK(r.best_epoch == 0);
    for (const auto& h : r.history) CHECK(h.val_loss == r.history.front().val_loss);
    // Halved after every 5 epochs without improvement.
    for (const auto& h : r.history) {
        const int halvings = h.epoch == 0 ? 0 : (h.epoch - 1) / 5;
        CHECK(h.lr == doctest::Approx(1e-3 * std::pow(0.5, halvings)).epsilon(1e-12));
    }
    CHECK(r.params.flatten() == init.flatten());
    CHECK(dataset_loss(spec, r.params, data, split.val) == r.best_val_loss);

    cfg.lr = 1e-6;
    const auto floored = fit(spec, init, data, split, cfg);
    const std::vector<std::pair<int, double>> expect{
        {0, 1e-6}, {6, 5e-7}, {12, 2.5e-7}, {18, 1.25e-7}, {24, 1e-7}, {50, 1e-7}};
    for (auto [epoch, lr] : expect)
        CHECK(floored.history.at(static_cast<std::size_t>(epoch)).lr == doctest::Approx(lr).epsilon(1e-12));
}

namespace {

PreparedData burst_micro_batch(std::mt19937_64& rng, const PipelineSpec& spec) {
    WindowBatch b;
    std::vector<int> labels;
    for (std::size_t i = 0; i < 4; ++i) {
        Matrix x = random_matrix(6, 64, rng);
        const std::size_t hit = (i + rng()) % 6;
        const double gain = 2.0 + static_cast<double>(rng() % 4);
        for (std::size_t t = 44; t < 64; ++t) x(hit, t) *= gain;
        b.windows.push_back(std::move(x));
        b.window_start_indices.push_back(i * 64);
        labels.push_back(static_cast<int>(i % 2));
    }
    b.labels = labels;
    return prepare_data(spec, b);
}

bool mask_is_stable(const PipelineSpec& spec, const ModelParams& params, const PreparedData& data) {
    for (std::size_t i = 0; i < data.size(); ++i) {
        WindowTrace tr;
        pipeline_forward(spec, params, data, i, &tr);
        for (double s : tr.nasr.cache.noise_soft)
            if (std::abs(s - 0.5) < 0.01) return false;
        for (double s : tr.nasr.cache.discard_soft)
            if (std::abs(s - 0.5) < 0.01) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("pipeline gradient over a micro-batch matches central differences") {
    PipelineSpec spec;
    spec.nasr.mode = MaskMode::smooth;
    spec.nasr.s_nonoverlap = 20;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uk(0.1, 1.2), ul(0.1, 0.9), uw(0.5, 1.5), ud(-0.5, 0.5);
    const std::vector<std::size_t> idx{0, 1, 2, 3};
    int accepted = 0;
    for (int attempt = 0; accepted < 5 && attempt < 500; ++attempt) {
        const auto data = burst_micro_batch(rng, spec);
        auto params = ModelParams::initial(6);
        params.nasr.k = uk(rng);
        params.nasr.l = ul(rng);
        for (double& w : params.scaling.w) w = uw(rng);
        for (double& w : params.decoder.weights) w = ud(rng);
        params.decoder.bias = ud(rng);
        if (!mask_is_stable(spec, params, data)) continue;
        ++accepted;

        const auto analytic = batch_gradient(spec, params, data, idx).grads.flatten();
        const auto base = params.flatten();
        for (std::size_t j = 0; j < base.size(); ++j) {
            const double fd = central_difference(
                [&](double v) {
                    auto f = base;
                    f[j] = v;
                    ModelParams q = params;
                    q.unflatten(f);
                    return dataset_loss(spec, q, data, idx);
                },
                base[j], 1e-6);
            CHECK(rel_error(analytic[j], fd, 1e-6) < 1e-3);
        }
    }
    CHECK(accepted == 5);
}
