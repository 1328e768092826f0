#include <doctest.h>

#include <cmath>
#include <random>

#include "nasr/asr.hpp"
#include "nasr/error.hpp"
#include "support.hpp"

using namespace nasr;
using namespace nasr::test;

namespace {

EegRecording white_calib(std::size_t c, double seconds, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return make_recording(random_matrix(c, static_cast<std::size_t>(seconds * 100.0), rng));
}

Matrix project(const AsrModel& m, const Matrix& x) { return matmul(m.v0.transposed(), x); }

double row_var(const Matrix& y, std::size_t j) {
    double s = 0.0;
    for (double v : y.row(j)) s += v * v;
    return s / static_cast<double>(y.cols());
}

}  // namespace

TEST_CASE("asr_calibrate: orthonormal v0 and unit component RMS on white noise") {
    const auto calib = white_calib(8, 60.0, 1);
    const auto m = asr_calibrate(calib, 20.0);
    CHECK(max_abs_diff(matmul(m.v0.transposed(), m.v0), Matrix::identity(8)) < 1e-10);
    for (double mu : m.comp_mu) CHECK(std::abs(mu - 1.0) < 0.1);
    for (double s : m.comp_sigma) CHECK(s >= kSigmaFloor);
}

TEST_CASE("asr_calibrate: thresholds exceed every calibration RMS for usual cutoffs") {
    const auto calib = white_calib(8, 60.0, 2);
    for (double cutoff : {5.0, 20.0}) {
        const auto m = asr_calibrate(calib, cutoff);
        for (const auto& r : asr_subwindow_rms(m, calib))
            for (std::size_t j = 0; j < 8; ++j) CHECK(r[j] < m.threshold(j));
    }
}

TEST_CASE("asr_calibrate: cutoff 0 puts about half the sub-windows above threshold") {
    const auto calib = white_calib(8, 60.0, 3);
    const auto m = asr_calibrate(calib, 0.0);
    std::size_t above = 0, total = 0;
    for (const auto& r : asr_subwindow_rms(m, calib))
        for (std::size_t j = 0; j < 8; ++j) {
            above += r[j] > m.threshold(j);
            ++total;
        }
    const double frac = static_cast<double>(above) / static_cast<double>(total);
    CHECK(frac > 0.35);
    CHECK(frac < 0.65);
}

TEST_CASE("asr_calibrate: errors") {
    CHECK_THROWS_AS(asr_calibrate(white_calib(4, 5.0, 4)), CalibrationError);
    CHECK_THROWS_AS(asr_calibrate(white_calib(4, 20.0, 4), -1.0), ParameterError);
    // Flat calibration: sigma floor instead of a failure.
    const auto flat = asr_calibrate(make_recording(Matrix(4, 2000)));
    for (double s : flat.comp_sigma) CHECK(s == kSigmaFloor);
}

TEST_CASE("asr_transform: matching window passes through bit-identical") {
    const auto m = asr_calibrate(white_calib(8, 60.0, 5));
    std::mt19937_64 rng(55);
    const Matrix x = random_matrix(8, 256, rng);
    const auto r = asr_transform_detailed(m, x);
    for (auto f : r.rejected) CHECK(f == 0);
    CHECK(r.cleaned == x);
    CHECK(asr_transform(m, Matrix(8, 256)) == Matrix(8, 256));
    CHECK_THROWS_AS(asr_transform(m, Matrix(7, 256)), ParameterError);
}

TEST_CASE("asr_transform: one amplified component is removed") {
    const auto m = asr_calibrate(white_calib(8, 60.0, 6));
    std::mt19937_64 rng(66);
    Matrix y = project(m, random_matrix(8, 256, rng));
    const std::size_t hit = 3;
    for (double& v : y.row(hit)) v *= 100.0;
    const Matrix x = matmul(m.v0, y);
    const auto r = asr_transform_detailed(m, x);
    for (std::size_t j = 0; j < 8; ++j) CHECK(r.rejected[j] == (j == hit ? 1 : 0));
    const Matrix yin = project(m, x), yout = project(m, r.cleaned);
    CHECK(row_var(yout, hit) < 0.01 * row_var(yin, hit));
    for (std::size_t j = 0; j < 8; ++j)
        if (j != hit) CHECK(std::abs(row_var(yout, j) - row_var(yin, j)) < 1e-10 * std::max(1.0, row_var(yin, j)));

    // Second application with the same rejected set changes nothing.
    const auto again = asr_transform_detailed(m, r.cleaned);
    CHECK(max_abs_diff(again.cleaned, r.cleaned) < 1e-10);
}

TEST_CASE("asr_transform: rejection is monotone in the cutoff") {
    const auto calib = white_calib(8, 60.0, 7);
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix x = random_matrix(8, 128, rng);
        for (double& v : x.row(trial % 8)) v *= 1.0 + trial;
        std::vector<std::uint8_t> prev(8, 1);
        for (double cutoff : {0.0, 1.0, 3.0, 10.0, 20.0, 40.0}) {
            const auto rej = asr_transform_detailed(asr_calibrate(calib, cutoff), x).rejected;
            for (std::size_t j = 0; j < 8; ++j) CHECK(rej[j] <= prev[j]);
            prev = rej;
        }
    }
}
