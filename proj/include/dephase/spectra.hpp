// spectra.hpp - symmetrized dephasing-noise spectra S(omega) and the bath
// spectral densities that map onto them.
//
// Units: hbar = 1, angular frequencies in rad/s, S in rad/s, so that
// (1/2pi) * integral S |f~|^2 domega is a dimensionless decay exponent.

#pragma once

#include <limits>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace dephase {

struct WhiteNoise {
    double s0;
};

// Ornstein-Uhlenbeck noise: <xi(t) xi(0)> = sigma2 exp(-|t| / tau_c).
struct LorentzianNoise {
    double sigma2;
    double tau_c;
};

// A / |omega| between omega_min and omega_max, flat at A / omega_min below,
// zero above omega_max.
struct OneOverFNoise {
    double amplitude;
    double omega_min;
    double omega_max;
};

// pi J(|w|) coth(beta |w| / 2) with J(w) = eta w^s wc^{1-s} exp(-w / wc).
// beta may be +inf (zero temperature).
struct OhmicThermalNoise {
    double eta;
    double omega_cutoff;
    double beta;
    double exponent = 1.0;
};

struct SpinMode {
    double omega;  // splitting
    double mu;     // coupling
};

// 4 pi sum_j mu_j^2 g(|w| - w_j) with g a unit-area Gaussian of width `broadening`.
struct SpinSpinWeakNoise {
    std::vector<SpinMode> modes;
    double broadening;
};

// Piecewise-linear table on omega >= 0. Held at values[0] below the first
// node and zero beyond the last.
struct TabulatedNoise {
    std::vector<double> omega;
    std::vector<double> values;
};

class NoiseSpectrum {
public:
    using Model = std::variant<WhiteNoise, LorentzianNoise, OneOverFNoise, OhmicThermalNoise,
                               SpinSpinWeakNoise, TabulatedNoise>;

    // Validates parameters; throws ValidationError.
    explicit NoiseSpectrum(Model model);

    static NoiseSpectrum white(double s0);
    static NoiseSpectrum lorentzian(double sigma2, double tau_c);
    static NoiseSpectrum one_over_f(double amplitude, double omega_min, double omega_max);
    static NoiseSpectrum ohmic_thermal(double eta, double omega_cutoff, double beta,
                                       double exponent = 1.0);
    static NoiseSpectrum tabulated(std::vector<double> omega, std::vector<double> values);

    // S(|omega|).
    double operator()(double omega) const;

    // sup of S over [omega, inf).
    double tail_sup(double omega) const;

    // lim_{w -> inf} S(w); nonzero only for white noise.
    double plateau() const;

    // Frequency beyond which S is non-increasing. Infinite for spectra that
    // are not integrable against a 1/w^2 filter tail.
    double characteristic_frequency() const;

    // Frequencies where S has kinks, jumps or narrow features.
    std::vector<double> breakpoints() const;

    std::string model_name() const;
    const Model& model() const noexcept { return model_; }

private:
    Model model_;
};

inline double eval_spectrum(const NoiseSpectrum& s, double omega) { return s(omega); }

inline constexpr double kInfiniteBeta = std::numeric_limits<double>::infinity();

// Bose occupation 1 / (exp(beta w) - 1); zero at beta = inf.
double boson_occupation(double omega, double beta);

struct BosonBath {
    double eta;
    double omega_cutoff;
    double beta;
    double exponent = 1.0;

    // Spectral density on w >= 0 (zero for w < 0).
    double J(double omega) const;
};

NoiseSpectrum boson_to_spectrum(const BosonBath& bath);

struct SpinBath {
    std::vector<SpinMode> modes;

    // Throws ValidationError unless every w_j > 0 and mu_j >= 0.
    void validate() const;
    double max_coupling_ratio() const;
    bool weak_coupling(double threshold = 0.1) const { return max_coupling_ratio() <= threshold; }
};

NoiseSpectrum spinbath_to_spectrum(const SpinBath& bath, double broadening);

// {"model": "...", "params": {...}}
nlohmann::json to_json(const NoiseSpectrum& spectrum);
NoiseSpectrum spectrum_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const SpinBath& bath);
SpinBath spin_bath_from_json(const nlohmann::json& doc);
BosonBath boson_bath_from_json(const nlohmann::json& doc);

} // namespace dephase
