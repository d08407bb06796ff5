// coherence.hpp - normalized coherence W(t) = exp(-chi) of a dephasing qubit
// under a pulse sequence, by three routes: the spectral integral, the
// asymptotic harmonic-comb rate and the exact spin-spin product.

#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dephase/pulses.hpp"
#include "dephase/spectra.hpp"

namespace dephase {

enum class CoherenceMethod {
    Auto,        // closed forms for white and Lorentzian noise, quadrature otherwise
    Quadrature,  // always integrate the spectrum numerically
};

struct CoherenceOptions {
    CoherenceMethod method = CoherenceMethod::Auto;
    double abs_tol = 1e-6;             // absolute tolerance on chi
    std::size_t max_intervals = 1000000;
    // Integrate the white plateau analytically (S_inf * t / 2) and only the
    // residual S - S_inf numerically.
    bool subtract_plateau = true;
};

// chi = (1/2pi) * integral_0^inf S(w) |f~_t(w)|^2 dw. Throws QuadratureError if
// the panel budget is exhausted and ValidationError if S is not integrable
// against the filter.
double coherence_exponent(const PulseSequence& seq, const NoiseSpectrum& s,
                          const CoherenceOptions& opts = {});

// Exact chi for Ornstein-Uhlenbeck noise (Lorentzian spectrum) from the
// time-domain double integral of sigma2 exp(-|t1 - t2| / tau_c); O(n).
double ou_exponent(const PulseSequence& seq, double sigma2, double tau_c);

inline double coherence_integral(const PulseSequence& seq, const NoiseSpectrum& s,
                                 const CoherenceOptions& opts = {}) {
    return std::exp(-coherence_exponent(seq, s, opts));
}

struct DecayRate {
    double rate = 0.0;        // 1/T2L
    double tau = 0.0;
    int harmonics_used = 0;   // L
    double tail_bound = 0.0;  // bound on the omitted harmonics l > L
};

inline constexpr int kDefaultHarmonics = 25;

// (4/pi^2) sum_{l=0}^{L} S((2l+1) pi / 2tau) / (2l+1)^2.
double harmonic_rate(const NoiseSpectrum& s, double tau, int L);

DecayRate asymptotic_rate(const SequenceFamily& family, const NoiseSpectrum& s,
                          int L = kDefaultHarmonics);

// Exact spin-spin bath result: chi = -sum_j ln|cos theta_j|. Infinite when a
// factor vanishes.
double spin_spin_exponent(const PulseSequence& seq, const SpinBath& bath);
double spin_spin_exact(const PulseSequence& seq, const SpinBath& bath);

// Weak-coupling Gaussian limit: chi = 2 sum_j mu_j^2 |f~_t(w_j)|^2.
double spin_spin_gaussian_exponent(const PulseSequence& seq, const SpinBath& bath);

using NoiseSource = std::variant<NoiseSpectrum, SpinBath>;

// Dispatches to coherence_exponent or spin_spin_exponent.
double source_exponent(const PulseSequence& seq, const NoiseSource& source,
                       const CoherenceOptions& opts = {});

struct CoherencePoint {
    int n = 0;
    double t = 0.0;
    double W = 1.0;
    double chi = 0.0;
};

struct CoherenceCurve {
    std::vector<CoherencePoint> points;
    std::string protocol;
};

// Sweeps the pulse count of a CPMG/APCP family at fixed tau (t = 2 n tau).
// n_list must be nonempty and strictly ascending.
CoherenceCurve coherence_curve(const SequenceFamily& family, const NoiseSource& source,
                               std::span<const int> n_list, const CoherenceOptions& opts = {});

// Sweeps the readout time of a spin echo (tau = t/2) or UDD family at fixed
// pulse count. t_list must be nonempty and strictly ascending.
CoherenceCurve readout_sweep(const SequenceFamily& family, const NoiseSource& source,
                             std::span<const double> t_list, const CoherenceOptions& opts = {});

// Header `t,W,chi`, one row per point.
void write_curve_csv(std::ostream& os, const CoherenceCurve& curve);

} // namespace dephase
