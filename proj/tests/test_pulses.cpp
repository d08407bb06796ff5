// test_pulses.cpp - sequences, switching function, filter transform

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dephase/coherence.hpp"
#include "dephase/errors.hpp"
#include "dephase/pulses.hpp"
#include "oracles.hpp"

using namespace dephase;

namespace {

double rel_err(std::complex<double> got, std::complex<double> ref, double t) {
    return std::abs(got - ref) / std::max(std::abs(ref), 1e-6 * t);
}

} // namespace

TEST_SUITE("pulses") {

TEST_CASE("make_sequence builds the documented layouts") {
    const auto se = make_sequence(SequenceFamily::spin_echo(1.0));
    REQUIRE(se.size() == 1);
    CHECK(se.times()[0] == 1.0);
    CHECK(se.readout_time() == 2.0);

    const auto cpmg = make_sequence(SequenceFamily::cpmg(0.5, 4));
    const std::vector<double> expected{0.5, 1.5, 2.5, 3.5};
    REQUIRE(cpmg.size() == expected.size());
    for (std::size_t k = 0; k < expected.size(); ++k) CHECK(cpmg.times()[k] == doctest::Approx(expected[k]));
    CHECK(cpmg.readout_time() == doctest::Approx(4.0));
    CHECK(cpmg.layout().has_value());

    const auto apcp = make_sequence(SequenceFamily::apcp(0.25, 6));
    CHECK(apcp.size() == 6);
    CHECK(apcp.readout_time() == doctest::Approx(3.0));

    const auto udd = make_sequence(SequenceFamily::udd(10.0, 3));
    REQUIRE(udd.size() == 3);
    for (int k = 1; k <= 3; ++k) {
        const double s = std::sin(k * std::numbers::pi / 8.0);
        CHECK(udd.times()[static_cast<std::size_t>(k - 1)] == doctest::Approx(10.0 * s * s));
    }
}

TEST_CASE("invalid sequences are rejected") {
    CHECK_THROWS_AS(make_sequence(SequenceFamily::custom({2.0, 1.0}, 3.0)), ValidationError);
    CHECK_THROWS_AS(make_sequence(SequenceFamily::custom({1.0, 1.0}, 3.0)), ValidationError);
    CHECK_THROWS_AS(make_sequence(SequenceFamily::custom({0.0, 1.0}, 3.0)), ValidationError);
    CHECK_THROWS_AS(make_sequence(SequenceFamily::custom({1.0, 2.0}, 2.0)), ValidationError);
    CHECK_THROWS_AS(make_sequence(SequenceFamily::apcp(1.0, 3)), ValidationError);
    CHECK_THROWS_AS(make_sequence(SequenceFamily::cpmg(-1.0, 3)), ValidationError);
    CHECK_THROWS_AS(make_sequence(SequenceFamily::cpmg(1.0, 0)), ValidationError);
    CHECK_THROWS_AS(sequence_kind_from_string("hahn"), ValidationError);
    CHECK(make_sequence(SequenceFamily::custom({}, 2.0)).size() == 0);
}

TEST_CASE("switching function follows the half-open convention") {
    const auto se = make_sequence(SequenceFamily::spin_echo(1.0));
    CHECK(switching_function(se, 0.5) == 1);
    CHECK(switching_function(se, 1.5) == -1);
    CHECK(switching_function(se, 1.0) == -1);
    CHECK(switching_function(se, 0.0) == 1);
    CHECK(switching_function(se, -0.1) == 0);
    CHECK(switching_function(se, 2.0) == 0);

    const auto cpmg = make_sequence(SequenceFamily::cpmg(0.5, 4));
    CHECK(switching_function(cpmg, 1.0) == -1);

    // Sign changes only at pulse instants.
    int prev = switching_function(cpmg, 0.0);
    int flips = 0;
    for (int k = 1; k < 4000; ++k) {
        const int now = switching_function(cpmg, k * 1e-3);
        if (now != prev) {
            ++flips;
            const double at = k * 1e-3;
            bool near_pulse = false;
            for (double tk : cpmg.times()) near_pulse = near_pulse || std::abs(at - tk) < 1.5e-3;
            CHECK(near_pulse);
        }
        prev = now;
    }
    CHECK(flips == 4);
}

TEST_CASE("spin echo filter function matches its closed form") {
    const auto se = make_sequence(SequenceFamily::spin_echo(1.0));
    CHECK(filter_function(se, std::numbers::pi) == doctest::Approx(1.6211389382774044).epsilon(1e-14));
    CHECK(filter_function(se, 0.0) == 0.0);
    for (double w : {0.01, 0.3, 1.7, 5.0, 42.0}) {
        const double s = std::sin(0.5 * w);
        CHECK(filter_function(se, w) == doctest::Approx(16.0 / (w * w) * s * s * s * s).epsilon(1e-12));
    }
    const auto free = PulseSequence::free_evolution(3.0);
    for (double w : {0.0, 0.2, 2.0, 20.0}) {
        const double ref = w == 0.0 ? 9.0 : 4.0 * std::pow(std::sin(1.5 * w), 2) / (w * w);
        CHECK(filter_function(free, w) == doctest::Approx(ref).epsilon(1e-12));
    }
    const auto sample = filter_sample(se, 2.5);
    CHECK(sample.ff == doctest::Approx(std::norm(sample.complex_value)));
    CHECK(sample.ff >= 0.0);
}

TEST_CASE("closed form agrees with a numerical transform of the switching function") {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int s = 0; s < 6; ++s) {
        const auto seq = oracle::random_sequence(rng, 1 + 3 * s, 4.0);
        const double wmax = 50.0 / seq.min_interval();
        for (int k = 0; k <= 100; ++k) {
            const double w = wmax * k / 100.0;
            worst = std::max(worst, rel_err(filter_transform(seq, w), oracle::numeric_filter_transform(seq, w),
                                            seq.readout_time()));
        }
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("equidistant fast path agrees with the segment sum on and off the harmonics") {
    const auto fast = make_sequence(SequenceFamily::cpmg(0.3, 40));
    double worst = 0.0;
    for (int m = 1; m <= 15; ++m) {
        for (double off : {0.0, 1e-9, 1e-4, 0.05}) {
            const double w = m * std::numbers::pi / (2.0 * 0.3) + off;
            worst = std::max(worst, rel_err(filter_transform(fast, w), oracle::numeric_filter_transform(fast, w),
                                            fast.readout_time()));
        }
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("Parseval: one-sided filter integral is t/2") {
    CoherenceOptions opts;
    opts.method = CoherenceMethod::Quadrature;
    opts.subtract_plateau = false;
    opts.abs_tol = 1e-5;
    const auto unit = NoiseSpectrum::white(1.0);
    for (const auto& family : {SequenceFamily::spin_echo(0.7), SequenceFamily::cpmg(0.05, 64),
                               SequenceFamily::udd(5.0, 7)}) {
        const auto seq = make_sequence(family);
        const double integral = coherence_exponent(seq, unit, opts);
        CHECK(integral == doctest::Approx(0.5 * seq.readout_time()).epsilon(1e-3));
    }
}

TEST_CASE("APCP Fourier coefficients") {
    const auto c = fourier_coefficients(SequenceFamily::apcp(0.8, 2), 51);
    REQUIRE(c.size() == 52);
    CHECK(std::abs(c[0]) < 1e-15);
    double partial = 0.0;
    double prev = 0.0;
    for (int m = 1; m <= 51; ++m) {
        const double ref = m % 2 ? 4.0 / (std::numbers::pi * std::numbers::pi * m * m) : 0.0;
        CHECK(std::abs(c[static_cast<std::size_t>(m)] - ref) <= 1e-12);
        partial += c[static_cast<std::size_t>(m)];
        CHECK(partial >= prev);
        CHECK(partial < 0.5);
        prev = partial;
    }
    CHECK(c[1] == doctest::Approx(0.4052847345693511).epsilon(1e-14));
    CHECK(0.5 - partial < 5e-3);
    CHECK_THROWS_AS(fourier_coefficients(SequenceFamily::udd(1.0, 3), 5), ValidationError);
}

}
