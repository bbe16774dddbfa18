#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "despawn/network.hpp"
#include "despawn/training.hpp"

using namespace despawn;
using Catch::Approx;

namespace {

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Direct transcription of the double-sigmoid gate, kept separate from the
// library's rearranged evaluation.
double ht_reference(double x, double bp, double bm, double alpha) {
    const auto sig = [](double t) { return 1.0 / (1.0 + std::exp(-t)); };
    return x * (sig(-alpha * (x + bm)) + sig(alpha * (x - bp)));
}

}  // namespace

TEST_CASE("ht_activation is the identity at zero thresholds") {
    const ThresholdPair zero{0.0, 0.0, 10.0};
    for (int i = 0; i <= 10000; ++i) {
        const double x = -50.0 + 100.0 * i / 10000.0;
        REQUIRE(ht_activation(x, zero) == x);
    }
    CHECK(ht_activation(1e300, zero) == 1e300);
    CHECK(ht_activation(-1e-300, zero) == -1e-300);
}

TEST_CASE("ht_activation reference values") {
    const ThresholdPair t{0.5, 0.5, 10.0};
    CHECK(ht_activation(1.0, t) == Approx(0.9933074).margin(1e-6));
    CHECK(ht_activation(0.0, t) == 0.0);
    CHECK(ht_activation(0.0, ThresholdPair{3.0, 0.1, 10.0}) == 0.0);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-2.0, 2.0), b(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double x = u(rng), bp = b(rng), bm = b(rng);
        CHECK(ht_activation(x, {bp, bm, 10.0}) == Approx(ht_reference(x, bp, bm, 10.0)).margin(1e-14));
    }
}

TEST_CASE("ht_activation odd symmetry with swapped thresholds") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-3.0, 3.0), b(-0.5, 1.5);
    for (int i = 0; i < 5000; ++i) {
        const double x = u(rng), bp = b(rng), bm = b(rng);
        CHECK(std::abs(ht_activation(-x, {bp, bm, 10.0}) + ht_activation(x, {bm, bp, 10.0})) <= 1e-12);
    }
}

TEST_CASE("ht_activation stays finite for extreme arguments") {
    for (double x : {-1e308, -1e10, -1.0, 1.0, 1e10, 1e308}) {
        for (double b : {0.0, 1.0, 1e6}) {
            const double y = ht_activation(x, {b, b, 10.0});
            CHECK(std::isfinite(y));
            const HtJet j = ht_jet(x, {b, b, 10.0});
            CHECK(std::isfinite(j.d_x));
            CHECK(std::isfinite(j.d_b_plus));
            CHECK(std::isfinite(j.d_b_minus));
        }
    }
}

TEST_CASE("ht_jet matches finite differences") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(-1.5, 1.5), b(0.0, 0.8);
    for (int i = 0; i < 200; ++i) {
        const double x = u(rng), bp = b(rng), bm = b(rng);
        const ThresholdPair t{bp, bm, 10.0};
        const HtJet j = ht_jet(x, t);
        const double e = 1e-6;
        CHECK(j.value == ht_activation(x, t));
        CHECK(j.d_x == Approx((ht_activation(x + e, t) - ht_activation(x - e, t)) / (2 * e)).margin(1e-7));
        CHECK(j.d_b_plus ==
              Approx((ht_activation(x, {bp + e, bm, 10.0}) - ht_activation(x, {bp - e, bm, 10.0})) / (2 * e)).margin(1e-7));
        CHECK(j.d_b_minus ==
              Approx((ht_activation(x, {bp, bm + e, 10.0}) - ht_activation(x, {bp, bm - e, 10.0})) / (2 * e)).margin(1e-7));
    }
}

TEST_CASE("parameter counts per mode") {
    const auto count = [](SharingMode m, std::size_t levels) { return parameter_count(build_model(levels, 8, m)); };
    CHECK(count(SharingMode::PerLevelCqfHT, 17) == 170);
    CHECK(count(SharingMode::PerLevelTwoKernelHT, 17) == 306);
    CHECK(count(SharingMode::FreeHT, 17) == (4 * 8 + 2) * 17);
    CHECK(count(SharingMode::SharedCqfHT, 17) == 8 + 2 * 17);
    CHECK(count(SharingMode::SharedCqf, 17) == 8);
    CHECK(count(SharingMode::PerLevelCqf, 17) == 8 * 17);
    CHECK(count(SharingMode::Db4FixedHT, 17) == 2 * 17);
    CHECK(count(SharingMode::Db4Fixed, 17) == 0);
    for (SharingMode m : kAllModes) {
        const auto model = build_model(5, 8, m);
        CHECK(parameters(model).size() == parameter_count(model));
    }
}

TEST_CASE("mode names round trip") {
    for (SharingMode m : kAllModes) CHECK(parse_mode(mode_name(m)) == m);
    CHECK_THROWS_AS(parse_mode("wavelet"), Error);
}

TEST_CASE("build_model validation and initial state") {
    CHECK_THROWS_AS(build_model(0, 8, SharingMode::PerLevelCqfHT), Error);
    CHECK_THROWS_AS(build_model(3, 7, SharingMode::PerLevelCqfHT), Error);
    CHECK_THROWS_AS(build_model(3, 0, SharingMode::PerLevelCqfHT), Error);
    CHECK_THROWS_AS(build_model(3, 4, SharingMode::Db4Fixed), Error);
    CHECK_THROWS_AS(build_model(3, 8, SharingMode::PerLevelCqfHT, -1.0), Error);

    const auto m = build_model(4, 8, SharingMode::FreeHT);
    CHECK(m.kernels.size() == 4);
    for (std::size_t l = 0; l < 4; ++l) {
        CHECK(m.bank(l) == db4_filterbank());
        CHECK(m.thresholds[l] == ThresholdPair{0.0, 0.0, 10.0});
    }
    CHECK(build_model(4, 8, SharingMode::SharedCqfHT).kernels.size() == 1);
    CHECK(build_model(4, 8, SharingMode::PerLevelCqfHT) == build_model(4, 8, SharingMode::PerLevelCqfHT));

    SECTION("two-tap model starts at Haar") {
        const auto haar = build_model(3, 2, SharingMode::PerLevelCqfHT);
        CHECK(haar.bank(0) == haar_filterbank());
        std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8};
        CHECK(max_abs_diff(model_forward(x, haar).reconstruction, x) <= 1e-12);
    }
    SECTION("longer kernels start at a zero-extended Haar filter") {
        const auto wide = build_model(3, 6, SharingMode::PerLevelCqf);
        double energy = 0.0;
        for (double v : wide.bank(0).h) energy += v * v;
        CHECK(energy == Approx(1.0).margin(1e-15));
        std::vector<double> x{1, -2, 3, 0.5, 5, 6, -7, 8, 0, 1, 2, 3};
        CHECK(max_abs_diff(model_forward(x, wide).reconstruction, x) <= 1e-12);
    }
}

TEST_CASE("derived kernels follow the trainable ones") {
    auto m = build_model(3, 8, SharingMode::PerLevelCqfHT);
    auto theta = parameters(m);
    for (double& v : theta) v += 0.01;
    set_parameters(m, theta);
    for (std::size_t l = 0; l < 3; ++l) {
        const auto bank = m.bank(l);
        CHECK(bank == cqf_from_scaling(bank.h));
    }
    auto two = build_model(3, 8, SharingMode::PerLevelTwoKernelHT);
    theta = parameters(two);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += 0.001 * static_cast<double>(i);
    set_parameters(two, theta);
    for (std::size_t l = 0; l < 3; ++l) {
        const auto bank = two.bank(l);
        CHECK(bank == cqf_partial(bank.h, bank.g));
    }
    CHECK_THROWS_AS(set_parameters(m, std::vector<double>(3, 0.0)), Error);
}

TEST_CASE("parameter labels") {
    const auto m = build_model(2, 8, SharingMode::PerLevelCqfHT);
    CHECK(parameter_label(m, 0) == "level 1 h[0]");
    CHECK(parameter_label(m, 9) == "level 2 h[1]");
    CHECK(parameter_label(m, 16) == "level 1 b_plus");
    CHECK(parameter_label(m, 19) == "level 2 b_minus");
    CHECK_THROWS_AS(parameter_label(m, 20), Error);
    CHECK(parameter_label(build_model(2, 8, SharingMode::SharedCqf), 3) == "shared h[3]");
}

TEST_CASE("db4 mode reduces to the plain transform") {
    const auto x = gaussian_signal(1024, 3);
    const auto model = build_model(10, 8, SharingMode::Db4Fixed);
    const auto rec = model_forward(x, model);
    const auto p = fdwt(x, db4_filterbank(), 10);
    CHECK(rec.pyramid.approx == p.approx);
    CHECK(rec.pyramid.details == p.details);
    CHECK(max_abs_diff(rec.reconstruction, ifdwt(p, db4_filterbank())) <= 1e-12);
    CHECK(max_abs_diff(rec.reconstruction, x) <= 1e-8);
    CHECK(rec.input_length == 1024);
}

TEST_CASE("fresh learnable models reproduce the fixed db4 transform") {
    const auto x = gaussian_signal(1024, 9);
    const auto ref = model_forward(x, build_model(10, 8, SharingMode::Db4Fixed));
    for (SharingMode m : kAllModes) {
        const auto rec = model_forward(x, build_model(10, 8, m));
        CHECK(rec.pyramid.details == ref.pyramid.details);
        CHECK(rec.pyramid.approx == ref.pyramid.approx);
        CHECK(rec.reconstruction == ref.reconstruction);
    }
    const auto deep = gaussian_signal(1 << 17, 10);
    const auto a = model_forward(deep, build_model(17, 8, SharingMode::PerLevelCqfHT));
    const auto b = model_forward(deep, build_model(17, 8, SharingMode::Db4Fixed));
    CHECK(a.reconstruction == b.reconstruction);
}

TEST_CASE("huge thresholds silence every detail level") {
    auto model = build_model(4, 8, SharingMode::PerLevelCqfHT);
    for (auto& t : model.thresholds) t.b_plus = t.b_minus = 1e6;
    const auto x = gaussian_signal(128, 5);
    const auto rec = model_forward(x, model);
    for (const auto& d : rec.pyramid.details)
        for (double v : d) CHECK(std::abs(v) <= 1e-12);
    CoefficientPyramid approx_only = rec.pyramid;
    for (auto& d : approx_only.details) std::fill(d.begin(), d.end(), 0.0);
    CHECK(max_abs_diff(rec.reconstruction, ifdwt(approx_only, db4_filterbank())) <= 1e-12);
}

TEST_CASE("forward pass on odd lengths and depth errors") {
    const auto model = build_model(4, 8, SharingMode::PerLevelCqfHT);
    const auto x = gaussian_signal(625, 1);
    CHECK(model_forward(x, model).reconstruction.size() == 625);
    CHECK_THROWS_AS(model_forward(gaussian_signal(8, 1), build_model(5, 8, SharingMode::PerLevelCqfHT)), Error);
}

TEST_CASE("loss hand examples") {
    SECTION("zero residual and zero coefficients") {
        ForwardRecord r;
        r.pyramid.details = {{0.0, 0.0}, {0.0}};
        r.pyramid.approx = {0.0};
        r.pyramid.level_lengths = {4, 2};
        r.reconstruction = {1, 2, 3, 4};
        r.input_length = 4;
        const auto t = loss(r, std::vector<double>{1, 2, 3, 4}, 1.0);
        CHECK(t.total == 0.0);
        CHECK(t.recon == 0.0);
        CHECK(t.sparsity == 0.0);
    }
    SECTION("mean absolute residual") {
        ForwardRecord r;
        r.pyramid.details = {{0.0, 0.0}};
        r.pyramid.approx = {0.0, 0.0};
        r.pyramid.level_lengths = {4};
        r.reconstruction = {0, 0, 0, 0};
        r.input_length = 4;
        const auto t = loss(r, std::vector<double>{1, 1, 1, 1}, 0.0);
        CHECK(t.recon == 1.0);
        CHECK(t.total == 1.0);
    }
    SECTION("averaged coefficient magnitudes") {
        ForwardRecord r;
        r.pyramid.details = {{1.0, -1.0}, {0.0}};
        r.pyramid.approx = {2.0};
        r.pyramid.level_lengths = {4, 2};
        r.reconstruction = {5, 6, 7, 8};
        r.input_length = 4;
        const auto t = loss(r, std::vector<double>{5, 6, 7, 8}, 1.0);
        CHECK(t.sparsity == 1.0);
        CHECK(t.total == 1.0);
    }
    SECTION("length mismatch") {
        ForwardRecord r;
        r.reconstruction = {1, 2};
        CHECK_THROWS_AS(loss(r, std::vector<double>{1, 2, 3}, 1.0), Error);
    }
}

TEST_CASE("loss terms are never negative") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto model = perturbed_model(5, 8, kAllModes[seed % kAllModes.size()], 1.0, seed);
        const auto t = evaluate_loss(gaussian_signal(96, seed), model);
        CHECK(t.recon >= 0.0);
        CHECK(t.sparsity >= 0.0);
        CHECK(t.total >= 0.0);
    }
}

TEST_CASE("default depth is the nearest base-2 logarithm") {
    CHECK(default_levels(1024) == 10);
    CHECK(default_levels(160000) == 17);
    CHECK(default_levels(1 << 18) == 18);
    CHECK(default_levels(3) == 2);
    CHECK(default_levels(2) == 1);
    CHECK_THROWS_AS(default_levels(1), Error);
}

TEST_CASE("synthesis gain ratios are one at db4 initialization") {
    for (double r : synthesis_gain_ratios(build_model(6, 8, SharingMode::FreeHT))) CHECK(r == Approx(1.0));
}
