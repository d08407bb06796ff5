// test_estimation.cpp - T2 fits, measurement pipeline, reconstruction

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "dephase/coherence.hpp"
#include "dephase/errors.hpp"
#include "dephase/estimation.hpp"

using namespace dephase;

namespace {

CoherenceCurve synthetic(const std::function<double(double)>& chi, double t_max, int count) {
    CoherenceCurve c;
    for (int k = 1; k <= count; ++k) {
        const double t = t_max * k / count;
        c.points.push_back({k, t, std::exp(-chi(t)), chi(t)});
    }
    return c;
}

std::vector<double> log_taus(double lo, double hi, int count) {
    std::vector<double> out;
    for (int k = 0; k < count; ++k) out.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / (count - 1)));
    return out;
}

// Scan whose rates are exactly the harmonic sum of `s`, times optional noise.
T2Scan forward_scan(const NoiseSpectrum& s, const std::vector<double>& taus, int L,
                    std::mt19937_64* rng = nullptr, double noise = 0.0) {
    T2Scan scan;
    std::normal_distribution<double> g(0.0, 1.0);
    for (double tau : taus) {
        double rate = harmonic_rate(s, tau, L);
        if (rng) rate *= 1.0 + noise * g(*rng);
        T2ScanEntry e;
        e.tau = tau;
        e.t2l.t2 = 1.0 / rate;
        e.n_used = 100;
        scan.entries.push_back(e);
    }
    return scan;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

TEST_SUITE("estimation") {

TEST_CASE("fit_t2 on synthetic curves") {
    const auto expo = fit_t2(synthetic([](double t) { return t / 5.0; }, 20.0, 80));
    CHECK(expo.t2 == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(expo.residual_rms <= 1e-12);
    CHECK(expo.points >= 6);
    CHECK(expo.t_lo < expo.t_hi);

    // Gaussian decay has no exponential tail.
    CHECK_THROWS_AS(fit_t2(synthetic([](double t) { return t * t / 25.0; }, 20.0, 200)), FitRejected);
    // Too few points in range.
    CHECK_THROWS_AS(fit_t2(synthetic([](double t) { return t; }, 20.0, 8)), FitRejected);
    // Rising coherence.
    auto bumpy = synthetic([](double t) { return t / 5.0; }, 20.0, 80);
    bumpy.points[30].chi -= 0.5;
    CHECK_THROWS_AS(fit_t2(bumpy), FitRejected);

    // Per-point stderr weights leave an exact exponential unchanged.
    const auto curve = synthetic([](double t) { return t / 3.0; }, 12.0, 60);
    std::vector<double> err(curve.points.size(), 0.01);
    CHECK(fit_t2(curve, {}, err).t2 == doctest::Approx(3.0).epsilon(1e-12));
    CHECK_THROWS_AS(fit_t2(curve, WindowPolicy{0.5, 0.05}), ValidationError);
}

TEST_CASE("spin echo to S(0)") {
    T2Estimate e;
    e.t2 = 4.0;
    CHECK(t2se_to_s0(e) == doctest::Approx(0.5));
    e.t2 = 0.0;
    CHECK_THROWS_AS(t2se_to_s0(e), ValidationError);

    const auto white = measure_t2se(NoiseSpectrum::white(0.4));
    CHECK(t2se_to_s0(white.fit) == doctest::Approx(0.4).epsilon(0.01));

    // Lorentzian spin echo decays as t^3 early on; its exponential tail sits
    // below W = 1e-3.
    MeasureOptions deep;
    deep.window = WindowPolicy{1e-8, 1e-3, 1e-9, 0.9};
    const auto lor = measure_t2se(NoiseSpectrum::lorentzian(1.0, 1.0), deep);
    CHECK(t2se_to_s0(lor.fit) == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("white noise T2L is independent of tau and sequence") {
    const auto white = NoiseSpectrum::white(0.4);
    for (double tau : {0.01, 0.1, 1.0}) {
        const auto cpmg = measure_t2l(SequenceFamily::cpmg(tau, 2), white);
        CHECK(cpmg.fit.rate() == doctest::Approx(0.2).epsilon(1e-3));
    }
    for (double tau : {0.01, 0.1, 0.3}) {
        const auto apcp = measure_t2l(SequenceFamily::apcp(tau, 2), white);
        CHECK(apcp.fit.rate() == doctest::Approx(0.2).epsilon(1e-3));
    }
    // APCP moves in pairs of pulses: at tau = 1 each step costs 0.8 in chi and
    // the default window [0.05, 0.5] holds only three points.
    CHECK_THROWS_AS(measure_t2l(SequenceFamily::apcp(1.0, 2), white), FitRejected);
    const auto udd = measure_readout_decay(SequenceFamily::udd(1.0, 4), white);
    CHECK(udd.fit.rate() == doctest::Approx(0.2).epsilon(1e-3));
    CHECK_THROWS_AS(measure_t2l(SequenceFamily::spin_echo(1.0), white), ValidationError);
}

TEST_CASE("Lorentzian T2L follows the harmonic sum") {
    const auto lor = NoiseSpectrum::lorentzian(1.0, 1.0);
    for (double tau : {0.05, 0.2}) {
        const auto m = measure_t2l(SequenceFamily::cpmg(tau, 2), lor);
        const double rate = asymptotic_rate(SequenceFamily::cpmg(tau, 2), lor, 25).rate;
        CHECK(m.fit.rate() == doctest::Approx(rate).epsilon(0.01));
        CHECK(m.stable);
        CHECK(m.n_used > 0);
    }
}

TEST_CASE("scans record rejected taus instead of throwing") {
    const auto lor = NoiseSpectrum::lorentzian(1.0, 1.0);
    const std::vector<double> taus{0.1, 0.2, 5.0};
    const auto out = run_t2_scan(SequenceFamily::cpmg(0.1, 2), lor, taus);
    REQUIRE(out.diagnostics.size() == 3);
    CHECK(out.diagnostics[0].accepted);
    CHECK(out.diagnostics[1].accepted);
    CHECK_FALSE(out.diagnostics[2].accepted);
    CHECK_FALSE(out.diagnostics[2].reason.empty());
    CHECK(out.partial());
    CHECK(out.scan.entries.size() == 2);

    // Same result on one thread.
    const auto serial = run_t2_scan(SequenceFamily::cpmg(0.1, 2), lor, taus, {}, 1);
    CHECK(serial.scan.entries[1].t2l.t2 == out.scan.entries[1].t2l.t2);
    CHECK_THROWS_AS(run_t2_scan(SequenceFamily::cpmg(0.1, 2), lor, std::vector<double>{0.2, 0.1}), ValidationError);
}

TEST_CASE("frequency bounds") {
    const auto r = frequency_bounds(10.0, 0.01);
    CHECK(r.lo == doctest::Approx(0.3141592653589793));
    CHECK(r.hi == doctest::Approx(314.1592653589793));
    CHECK_THROWS_AS(frequency_bounds(10.0, 10.0), ValidationError);
    CHECK_THROWS_AS(frequency_bounds(10.0, 0.0), ValidationError);

    T2Scan scan;
    for (double tau : {1.0, 10.0}) scan.entries.push_back({tau, T2Estimate{1.0}, 10});
    const auto pts = pointwise_reconstruct(scan, r);
    CHECK(pts[0].in_range);
    CHECK_FALSE(pts[1].in_range);  // pi / 20 < pi / 10
}

TEST_CASE("pointwise reconstruction and its harmonic overshoot") {
    T2Scan unit;
    unit.entries.push_back({1.0, T2Estimate{1.0 / 0.405285}, 10});
    CHECK(pointwise_reconstruct(unit)[0].s_hat == doctest::Approx(1.0).epsilon(1e-5));

    const auto white = NoiseSpectrum::white(0.8);
    const auto flat = pointwise_reconstruct(forward_scan(white, {0.1, 1.0}, 2000));
    for (const auto& p : flat) CHECK(p.s_hat / 0.8 == doctest::Approx(std::numbers::pi * std::numbers::pi / 8.0).epsilon(1e-3));

    // S ~ 1 / w^2 tail: overshoot sum (2l+1)^-4 = pi^4 / 96.
    const auto lor = NoiseSpectrum::lorentzian(1.0, 1.0);
    const double tau = 0.005;
    const auto pts = pointwise_reconstruct(forward_scan(lor, {tau}, 200));
    const double ratio = pts[0].s_hat / lor(std::numbers::pi / (2.0 * tau));
    CHECK(ratio == doctest::Approx(1.014678031604192).epsilon(1e-4));
}

TEST_CASE("fit_spectrum round trip") {
    const auto truth = NoiseSpectrum::lorentzian(1.0, 1.0);
    const auto taus = log_taus(0.05, 5.0, 12);
    const auto clean = forward_scan(truth, taus, 25);
    const std::vector<double> true_params{1.0, 1.0};
    CHECK(fit_objective(clean, ModelFamily::lorentzian(), true_params, 25) <= 1e-10);

    const auto fit = fit_spectrum(clean, ModelFamily::lorentzian(), 25);
    REQUIRE(fit.params.size() == 2);
    CHECK(fit.params[0] == doctest::Approx(1.0).epsilon(0.01));
    CHECK(fit.params[1] == doctest::Approx(1.0).epsilon(0.01));
    CHECK(fit.param_names == std::vector<std::string>{"sigma2", "tau_c"});
    CHECK(fit.covariance.size() == 2);
    CHECK(fit.points.size() == 12);

    // Same seed, same answer.
    const auto again = fit_spectrum(clean, ModelFamily::lorentzian(), 25);
    CHECK(again.params == fit.params);

    std::mt19937_64 rng(2024);
    std::vector<double> err_s, err_t;
    for (int rep = 0; rep < 20; ++rep) {
        const auto noisy = fit_spectrum(forward_scan(truth, taus, 25, &rng, 0.03), ModelFamily::lorentzian(), 25);
        err_s.push_back(std::abs(noisy.params[0] - 1.0));
        err_t.push_back(std::abs(noisy.params[1] - 1.0));
    }
    CHECK(median(err_s) <= 0.1);
    CHECK(median(err_t) <= 0.1);
}

TEST_CASE("fit_spectrum failure and bounds") {
    // A white model cannot follow a Lorentzian across three decades.
    const auto scan = forward_scan(NoiseSpectrum::lorentzian(1.0, 1.0), log_taus(0.01, 10.0, 12), 25);
    CHECK_THROWS_AS(fit_spectrum(scan, ModelFamily::white(), 25), FitFailure);
    try {
        fit_spectrum(scan, ModelFamily::white(), 25);
    } catch (const FitFailure& e) {
        CHECK(e.best_residual() > 0.2);
    }

    FitOptions narrow;
    narrow.lower = {0.1, 0.1};
    narrow.upper = {10.0, 0.5};
    narrow.max_rel_rms = 10.0;
    const auto clipped = fit_spectrum(scan, ModelFamily::lorentzian(), 25, narrow);
    CHECK(clipped.at_bound[1]);
    CHECK(clipped.params[1] <= 0.5 * (1.0 + 1e-9));
}

TEST_CASE("harmonic cutoff barely moves a 1/f fit") {
    const auto family = ModelFamily::one_over_f(0.05, 500.0);
    const auto truth = NoiseSpectrum::one_over_f(0.7, 0.05, 500.0);
    const auto taus = log_taus(0.02, 2.0, 12);
    const auto scan = forward_scan(truth, taus, 40);
    const double a10 = fit_spectrum(scan, family, 10).params[0];
    const double a40 = fit_spectrum(scan, family, 40).params[0];
    double bound = 0.0;
    for (double tau : taus) {
        const auto r = asymptotic_rate(SequenceFamily::cpmg(tau, 1), truth, 10);
        bound = std::max(bound, r.tail_bound / r.rate);
    }
    CHECK(std::abs(a10 - a40) / a40 <= bound);
    CHECK(a40 == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("scan CSV round trip") {
    const auto scan = forward_scan(NoiseSpectrum::lorentzian(1.0, 1.0), {0.1, 0.2, 0.4}, 25);
    std::stringstream ss;
    write_scan_csv(ss, scan);
    CHECK(ss.str().rfind("tau,n,t2l,t2l_stderr\n", 0) == 0);
    const auto back = read_scan_csv(ss);
    REQUIRE(back.entries.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(back.entries[k].tau == scan.entries[k].tau);
        CHECK(back.entries[k].t2l.t2 == scan.entries[k].t2l.t2);
    }
    std::stringstream bad("tau,n,t2l,t2l_stderr\n0.1,5,-1,0\n");
    CHECK_THROWS_AS(read_scan_csv(bad), ValidationError);
}

TEST_CASE("model family JSON") {
    CHECK(model_family_from_json("lorentzian").kind == ModelFamily::Kind::Lorentzian);
    const auto f = model_family_from_json({{"model", "one_over_f"}, {"fixed", {{"omega_min", 0.1}, {"omega_max", 9.0}}}});
    CHECK(f.kind == ModelFamily::Kind::OneOverF);
    CHECK(f.omega_max == 9.0);
    CHECK(model_family_from_json(to_json(f)).omega_min == 0.1);
    CHECK_THROWS_AS(model_family_from_json("voigt"), ValidationError);
}

}
