// estimation.hpp - T2 extraction from coherence curves, T2L scans over the
// pulse spacing, and noise-spectrum reconstruction from such scans.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dephase/coherence.hpp"
#include "dephase/pulses.hpp"
#include "dephase/spectra.hpp"

namespace dephase {

// Which part of a decay curve is treated as its asymptotic exponential tail.
struct WindowPolicy {
    double w_lo = 0.05;     // fit window on W
    double w_hi = 0.5;
    double range_lo = 1e-4; // the curve needs >= 10 points with W in [range_lo, range_hi]
    double range_hi = 0.9;
    double max_rms = 0.05;          // residual gate on ln W
    double monotone_tol = 0.02;     // allowed rise of ln W between successive points

    void validate() const;
};

struct T2Estimate {
    double t2 = 0.0;
    double t_lo = 0.0;  // fit window
    double t_hi = 0.0;
    double residual_rms = 0.0;
    double stderr_t2 = 0.0;
    std::size_t points = 0;  // points inside the window

    double rate() const { return 1.0 / t2; }
};

// Weighted least squares of ln W against t on the window. Throws FitRejected
// for too few points, a non-monotone curve or a non-exponential tail.
// Per-point weights are (W / W_stderr)^2 when every point carries a stderr.
T2Estimate fit_t2(const CoherenceCurve& curve, const WindowPolicy& policy = {},
                  std::span<const double> w_stderr = {});

// S(0) = 2 / T2SE.
double t2se_to_s0(const T2Estimate& t2se);

struct MeasureOptions {
    WindowPolicy window;
    CoherenceOptions coherence;
    int grid_points = 48;
    double stability_tol = 0.01;
};

struct T2Measurement {
    T2Estimate fit;
    int n_used = 0;                 // largest pulse count inside the fit window
    double stability_delta = 0.0;   // relative slope change when n doubles
    bool stable = true;
    CoherenceCurve curve;
};

// CPMG/APCP at the family's tau: grows n by doubling until the decay passes
// the window, resamples n uniformly, fits, then checks the slope between n
// and 2n against the fitted rate.
T2Measurement measure_t2l(const SequenceFamily& family, const NoiseSource& source,
                          const MeasureOptions& opts = {});

// Spin echo (or UDD at fixed n) readout-time sweep fitted the same way.
T2Measurement measure_readout_decay(const SequenceFamily& family, const NoiseSource& source,
                                    const MeasureOptions& opts = {});

inline T2Measurement measure_t2se(const NoiseSource& source, const MeasureOptions& opts = {}) {
    return measure_readout_decay(SequenceFamily::spin_echo(1.0), source, opts);
}

struct T2ScanEntry {
    double tau = 0.0;
    T2Estimate t2l;
    int n_used = 0;
};

struct T2Scan {
    std::vector<T2ScanEntry> entries;

    // Throws ValidationError unless taus are strictly increasing and every
    // t2 is positive.
    void validate() const;
};

struct ScanDiagnostic {
    double tau = 0.0;
    bool accepted = false;
    std::string reason;  // empty when accepted
    T2Measurement measurement;
};

struct ScanOutcome {
    T2Scan scan;
    std::vector<ScanDiagnostic> diagnostics;  // one per requested tau
    bool partial() const { return scan.entries.size() != diagnostics.size(); }
};

// measure_t2l for each tau of a CPMG/APCP family. Rejected fits are recorded
// in the diagnostics, not thrown. Taus must be strictly increasing.
ScanOutcome run_t2_scan(const SequenceFamily& family, const NoiseSource& source,
                        std::span<const double> taus, const MeasureOptions& opts = {},
                        unsigned threads = 0);

struct FrequencyRange {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double omega) const { return omega >= lo && omega <= hi; }
};

// (pi / t2_se, pi / tau_p). Throws ValidationError unless 0 < tau_p < t2_se.
FrequencyRange frequency_bounds(double t2_se, double tau_p);

struct PointEstimate {
    double omega = 0.0;   // pi / 2tau
    double s_hat = 0.0;   // (pi^2 / 4) / T2L
    double s_hat_stderr = 0.0;
    bool in_range = true;
};

std::vector<PointEstimate> pointwise_reconstruct(const T2Scan& scan,
                                                 const std::optional<FrequencyRange>& range = {});

// Parametric families used for the harmonic-sum fit. Parameters not listed in
// parameter_names() are held at the values stored here.
struct ModelFamily {
    enum class Kind { White, Lorentzian, OneOverF, OhmicThermal };
    Kind kind = Kind::Lorentzian;
    double omega_min = 0.0;     // OneOverF cutoffs
    double omega_max = 0.0;
    double beta = 1.0;          // OhmicThermal
    double exponent = 1.0;

    static ModelFamily white() { return {Kind::White}; }
    static ModelFamily lorentzian() { return {Kind::Lorentzian}; }
    static ModelFamily one_over_f(double omega_min, double omega_max);
    static ModelFamily ohmic_thermal(double beta, double exponent = 1.0);

    std::string name() const;
    std::vector<std::string> parameter_names() const;
    NoiseSpectrum build(std::span<const double> params) const;
};

ModelFamily model_family_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ModelFamily& family);

struct FitOptions {
    int starts = 8;                  // random starts in addition to the data-driven guess
    std::uint64_t seed = 0;
    // Natural-unit bounds; empty means guess * [1e-3, 1e3].
    std::vector<double> lower;
    std::vector<double> upper;
    double max_rel_rms = 0.2;
    unsigned threads = 0;
};

struct ReconstructionResult {
    std::vector<PointEstimate> points;
    ModelFamily family;
    std::vector<std::string> param_names;
    std::vector<double> params;
    std::vector<std::vector<double>> covariance;
    std::vector<bool> at_bound;
    std::vector<double> lower;
    std::vector<double> upper;
    double objective = 0.0;  // weighted sum of squares
    double rel_rms = 0.0;    // rms of (rate - F) / rate
    int L = kDefaultHarmonics;
    int starts = 0;
    std::uint64_t seed = 0;
    int best_start = 0;
    std::optional<FrequencyRange> freq_range;

    NoiseSpectrum model() const { return family.build(params); }
};

// Weighted squared misfit between the scan's rates and
// F(pi/2tau) = (4/pi^2) sum_{l<=L} S((2l+1) pi / 2tau) / (2l+1)^2.
double fit_objective(const T2Scan& scan, const ModelFamily& family,
                     std::span<const double> params, int L);

// Multi-start Levenberg-Marquardt on log-parameters. Throws FitFailure when
// every start ends with rel_rms above opts.max_rel_rms.
ReconstructionResult fit_spectrum(const T2Scan& scan, const ModelFamily& family,
                                  int L = kDefaultHarmonics, const FitOptions& opts = {});

// `tau,n,t2l,t2l_stderr`.
void write_scan_csv(std::ostream& os, const T2Scan& scan);
T2Scan read_scan_csv(std::istream& is);

nlohmann::json to_json(const ReconstructionResult& result);

} // namespace dephase
