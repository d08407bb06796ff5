// spectra.cpp - noise spectrum models and bath mappings

#include "dephase/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dephase/errors.hpp"

namespace dephase {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError(message);
}

bool positive_finite(double x) { return x > 0.0 && std::isfinite(x); }

double gaussian_kernel(double x, double width) {
    const double z = x / width;
    return std::exp(-0.5 * z * z) / (width * std::sqrt(2.0 * std::numbers::pi));
}

double ohmic_density(const OhmicThermalNoise& m, double w) {
    if (!(w > 0.0)) return 0.0;
    double j = m.eta * w;
    if (std::isfinite(m.omega_cutoff)) {
        const double x = w / m.omega_cutoff;
        if (m.exponent != 1.0) j *= std::pow(x, m.exponent - 1.0);
        j *= std::exp(-x);
    }
    return j;
}

double ohmic_spectrum(const OhmicThermalNoise& m, double w) {
    if (w == 0.0) {
        // lim J(w) coth(beta w / 2) = 2 J'(0) / beta, nonzero only for s = 1.
        if (m.exponent == 1.0 && std::isfinite(m.beta)) return 2.0 * std::numbers::pi * m.eta / m.beta;
        return 0.0;
    }
    const double j = ohmic_density(m, w);
    if (j == 0.0) return 0.0;
    const double thermal = std::isfinite(m.beta) ? 1.0 / std::tanh(0.5 * m.beta * w) : 1.0;
    return std::numbers::pi * j * thermal;
}

double tabulated_value(const TabulatedNoise& m, double w) {
    const auto& x = m.omega;
    if (w <= x.front()) return m.values.front();
    if (w > x.back()) return 0.0;
    const auto hi = static_cast<std::size_t>(std::upper_bound(x.begin(), x.end(), w) - x.begin());
    if (hi >= x.size()) return m.values.back();
    const std::size_t lo = hi - 1;
    const double frac = (w - x[lo]) / (x[hi] - x[lo]);
    return m.values[lo] + frac * (m.values[hi] - m.values[lo]);
}

void validate_modes(const std::vector<SpinMode>& modes) {
    require(!modes.empty(), "spin bath needs at least one mode");
    for (const auto& mode : modes) {
        require(positive_finite(mode.omega), "spin mode splitting must be positive");
        require(mode.mu >= 0.0 && std::isfinite(mode.mu), "spin mode coupling must be non-negative");
    }
}

void validate(const NoiseSpectrum::Model& model) {
    std::visit(
        overloaded{
            [](const WhiteNoise& m) {
                require(m.s0 >= 0.0 && std::isfinite(m.s0), "white noise level must be >= 0");
            },
            [](const LorentzianNoise& m) {
                require(positive_finite(m.sigma2), "lorentzian sigma2 must be positive");
                require(positive_finite(m.tau_c), "lorentzian tau_c must be positive");
            },
            [](const OneOverFNoise& m) {
                require(positive_finite(m.amplitude), "1/f amplitude must be positive");
                require(positive_finite(m.omega_min), "1/f omega_min must be positive");
                require(positive_finite(m.omega_max) && m.omega_max > m.omega_min,
                        "1/f omega_max must exceed omega_min");
            },
            [](const OhmicThermalNoise& m) {
                require(positive_finite(m.eta), "ohmic eta must be positive");
                require(m.omega_cutoff > 0.0, "ohmic cutoff must be positive");
                require(m.beta > 0.0, "inverse temperature beta must be positive");
                require(m.exponent >= 1.0 && std::isfinite(m.exponent),
                        "ohmic exponent must be >= 1 (sub-ohmic S(0) diverges)");
                require(m.exponent == 1.0 || std::isfinite(m.omega_cutoff),
                        "non-ohmic exponent needs a finite cutoff");
            },
            [](const SpinSpinWeakNoise& m) {
                validate_modes(m.modes);
                require(positive_finite(m.broadening), "spin comb broadening must be positive");
            },
            [](const TabulatedNoise& m) {
                require(m.omega.size() >= 2 && m.omega.size() == m.values.size(),
                        "tabulated spectrum needs >= 2 matching nodes");
                require(m.omega.front() >= 0.0, "tabulated frequencies must be >= 0");
                for (std::size_t i = 0; i < m.omega.size(); ++i) {
                    require(std::isfinite(m.omega[i]), "tabulated frequencies must be finite");
                    require(m.values[i] >= 0.0 && std::isfinite(m.values[i]),
                            "tabulated values must be finite and >= 0");
                    if (i > 0) require(m.omega[i] > m.omega[i - 1], "tabulated frequencies must increase");
                }
            },
        },
        model);
}

double number_or_inf(const json& value, const char* key) {
    if (value.is_null()) return kInf;
    if (value.is_string()) {
        const auto text = value.get<std::string>();
        if (text == "inf" || text == "infinity") return kInf;
        throw ValidationError(std::string("parameter '") + key + "' must be a number or \"inf\"");
    }
    if (!value.is_number()) throw ValidationError(std::string("parameter '") + key + "' must be a number");
    return value.get<double>();
}

double get_number(const json& params, const char* key, bool allow_inf = false) {
    if (!params.contains(key)) throw ValidationError(std::string("missing parameter '") + key + "'");
    const auto& value = params.at(key);
    if (allow_inf) return number_or_inf(value, key);
    if (!value.is_number()) throw ValidationError(std::string("parameter '") + key + "' must be a number");
    return value.get<double>();
}

json number_or_inf_json(double x) { return std::isfinite(x) ? json(x) : json("inf"); }

std::vector<SpinMode> modes_from_json(const json& array) {
    if (!array.is_array()) throw ValidationError("'modes' must be an array");
    std::vector<SpinMode> modes;
    for (const auto& item : array) {
        if (item.is_array() && item.size() == 2) {
            modes.push_back({item[0].get<double>(), item[1].get<double>()});
        } else if (item.is_object()) {
            modes.push_back({get_number(item, "omega"), get_number(item, "mu")});
        } else {
            throw ValidationError("spin mode must be {\"omega\", \"mu\"} or [omega, mu]");
        }
    }
    return modes;
}

json modes_to_json(const std::vector<SpinMode>& modes) {
    json out = json::array();
    for (const auto& mode : modes) out.push_back({{"omega", mode.omega}, {"mu", mode.mu}});
    return out;
}

} // namespace

NoiseSpectrum::NoiseSpectrum(Model model) : model_(std::move(model)) { validate(model_); }

NoiseSpectrum NoiseSpectrum::white(double s0) { return NoiseSpectrum(WhiteNoise{s0}); }

NoiseSpectrum NoiseSpectrum::lorentzian(double sigma2, double tau_c) {
    return NoiseSpectrum(LorentzianNoise{sigma2, tau_c});
}

NoiseSpectrum NoiseSpectrum::one_over_f(double amplitude, double omega_min, double omega_max) {
    return NoiseSpectrum(OneOverFNoise{amplitude, omega_min, omega_max});
}

NoiseSpectrum NoiseSpectrum::ohmic_thermal(double eta, double omega_cutoff, double beta,
                                           double exponent) {
    return NoiseSpectrum(OhmicThermalNoise{eta, omega_cutoff, beta, exponent});
}

NoiseSpectrum NoiseSpectrum::tabulated(std::vector<double> omega, std::vector<double> values) {
    return NoiseSpectrum(TabulatedNoise{std::move(omega), std::move(values)});
}

double NoiseSpectrum::operator()(double omega) const {
    const double w = std::abs(omega);
    return std::visit(
        overloaded{
            [](const WhiteNoise& m) { return m.s0; },
            [w](const LorentzianNoise& m) {
                const double x = w * m.tau_c;
                return 2.0 * m.sigma2 * m.tau_c / (1.0 + x * x);
            },
            [w](const OneOverFNoise& m) {
                if (w > m.omega_max) return 0.0;
                return m.amplitude / std::max(w, m.omega_min);
            },
            [w](const OhmicThermalNoise& m) { return ohmic_spectrum(m, w); },
            [w](const SpinSpinWeakNoise& m) {
                double sum = 0.0;
                for (const auto& mode : m.modes) {
                    sum += mode.mu * mode.mu * gaussian_kernel(w - mode.omega, m.broadening);
                }
                return 4.0 * std::numbers::pi * sum;
            },
            [w](const TabulatedNoise& m) { return tabulated_value(m, w); },
        },
        model_);
}

double NoiseSpectrum::tail_sup(double omega) const {
    const double w = std::max(omega, 0.0);
    return std::visit(
        overloaded{
            [](const WhiteNoise& m) { return m.s0; },
            [this, w](const LorentzianNoise&) { return (*this)(w); },
            [this, w](const OneOverFNoise&) { return (*this)(w); },
            [w](const OhmicThermalNoise& m) {
                const double peak = std::isfinite(m.omega_cutoff) ? m.exponent * m.omega_cutoff : kInf;
                if (w >= peak) return ohmic_spectrum(m, w);
                if (!std::isfinite(peak) || w == 0.0) return kInf;
                const double thermal =
                    std::isfinite(m.beta) ? 1.0 / std::tanh(0.5 * m.beta * w) : 1.0;
                return std::numbers::pi * ohmic_density(m, peak) * thermal;
            },
            [w](const SpinSpinWeakNoise& m) {
                double sum = 0.0;
                for (const auto& mode : m.modes) {
                    const double dx = std::max(w - mode.omega, 0.0);
                    sum += mode.mu * mode.mu * gaussian_kernel(dx, m.broadening);
                }
                return 4.0 * std::numbers::pi * sum;
            },
            [w](const TabulatedNoise& m) {
                if (w > m.omega.back()) return 0.0;
                double best = tabulated_value(m, w);
                for (std::size_t i = 0; i < m.omega.size(); ++i) {
                    if (m.omega[i] >= w) best = std::max(best, m.values[i]);
                }
                return best;
            },
        },
        model_);
}

double NoiseSpectrum::plateau() const {
    if (const auto* white = std::get_if<WhiteNoise>(&model_)) return white->s0;
    return 0.0;
}

double NoiseSpectrum::characteristic_frequency() const {
    return std::visit(
        overloaded{
            [](const WhiteNoise&) { return 0.0; },
            [](const LorentzianNoise& m) { return 1.0 / m.tau_c; },
            [](const OneOverFNoise& m) { return m.omega_min; },
            [](const OhmicThermalNoise& m) {
                return std::isfinite(m.omega_cutoff) ? std::max(1.0, m.exponent) * m.omega_cutoff : kInf;
            },
            [](const SpinSpinWeakNoise& m) {
                double top = 0.0;
                for (const auto& mode : m.modes) top = std::max(top, mode.omega);
                return top + 8.0 * m.broadening;
            },
            [](const TabulatedNoise& m) { return m.omega.back(); },
        },
        model_);
}

std::vector<double> NoiseSpectrum::breakpoints() const {
    std::vector<double> out;
    std::visit(overloaded{
                   [](const WhiteNoise&) {},
                   [](const LorentzianNoise&) {},
                   [&out](const OneOverFNoise& m) {
                       out.push_back(m.omega_min);
                       out.push_back(m.omega_max);
                   },
                   [](const OhmicThermalNoise&) {},
                   [&out](const SpinSpinWeakNoise& m) {
                       for (const auto& mode : m.modes) {
                           for (double k : {-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0}) {
                               const double w = mode.omega + k * m.broadening;
                               if (w > 0.0) out.push_back(w);
                           }
                       }
                   },
                   [&out](const TabulatedNoise& m) {
                       if (m.omega.front() > 0.0) out.push_back(m.omega.front());
                       out.push_back(m.omega.back());
                   },
               },
               model_);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string NoiseSpectrum::model_name() const {
    return std::visit(overloaded{
                          [](const WhiteNoise&) { return std::string("white"); },
                          [](const LorentzianNoise&) { return std::string("lorentzian"); },
                          [](const OneOverFNoise&) { return std::string("one_over_f"); },
                          [](const OhmicThermalNoise&) { return std::string("ohmic_thermal"); },
                          [](const SpinSpinWeakNoise&) { return std::string("spin_spin_weak"); },
                          [](const TabulatedNoise&) { return std::string("tabulated"); },
                      },
                      model_);
}

double boson_occupation(double omega, double beta) {
    if (!std::isfinite(beta)) return 0.0;
    return 1.0 / std::expm1(beta * omega);
}

double BosonBath::J(double omega) const {
    return ohmic_density(OhmicThermalNoise{eta, omega_cutoff, beta, exponent}, omega);
}

NoiseSpectrum boson_to_spectrum(const BosonBath& bath) {
    if (!(bath.beta > 0.0)) throw ValidationError("inverse temperature beta must be positive");
    return NoiseSpectrum::ohmic_thermal(bath.eta, bath.omega_cutoff, bath.beta, bath.exponent);
}

void SpinBath::validate() const { validate_modes(modes); }

double SpinBath::max_coupling_ratio() const {
    double worst = 0.0;
    for (const auto& mode : modes) worst = std::max(worst, mode.mu / mode.omega);
    return worst;
}

NoiseSpectrum spinbath_to_spectrum(const SpinBath& bath, double broadening) {
    bath.validate();
    return NoiseSpectrum(SpinSpinWeakNoise{bath.modes, broadening});
}

nlohmann::json to_json(const NoiseSpectrum& spectrum) {
    json params = std::visit(
        overloaded{
            [](const WhiteNoise& m) { return json{{"s0", m.s0}}; },
            [](const LorentzianNoise& m) { return json{{"sigma2", m.sigma2}, {"tau_c", m.tau_c}}; },
            [](const OneOverFNoise& m) {
                return json{{"amplitude", m.amplitude}, {"omega_min", m.omega_min},
                            {"omega_max", m.omega_max}};
            },
            [](const OhmicThermalNoise& m) {
                return json{{"eta", m.eta},
                            {"omega_cutoff", number_or_inf_json(m.omega_cutoff)},
                            {"beta", number_or_inf_json(m.beta)},
                            {"exponent", m.exponent}};
            },
            [](const SpinSpinWeakNoise& m) {
                return json{{"modes", modes_to_json(m.modes)}, {"broadening", m.broadening}};
            },
            [](const TabulatedNoise& m) { return json{{"omega", m.omega}, {"S", m.values}}; },
        },
        spectrum.model());
    return json{{"model", spectrum.model_name()}, {"params", std::move(params)}};
}

NoiseSpectrum spectrum_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("model")) {
        throw ValidationError("spectrum must be an object with a \"model\" field");
    }
    const auto name = doc.at("model").get<std::string>();
    const json params = doc.value("params", json::object());
    if (name == "white") return NoiseSpectrum::white(get_number(params, "s0"));
    if (name == "lorentzian") {
        return NoiseSpectrum::lorentzian(get_number(params, "sigma2"), get_number(params, "tau_c"));
    }
    if (name == "one_over_f") {
        return NoiseSpectrum::one_over_f(get_number(params, "amplitude"),
                                         get_number(params, "omega_min"),
                                         get_number(params, "omega_max"));
    }
    if (name == "ohmic_thermal") {
        const double exponent = params.contains("exponent") ? get_number(params, "exponent") : 1.0;
        return NoiseSpectrum::ohmic_thermal(get_number(params, "eta"),
                                            get_number(params, "omega_cutoff", true),
                                            get_number(params, "beta", true), exponent);
    }
    if (name == "spin_spin_weak") {
        if (!params.contains("modes")) throw ValidationError("missing parameter 'modes'");
        return NoiseSpectrum(
            SpinSpinWeakNoise{modes_from_json(params.at("modes")), get_number(params, "broadening")});
    }
    if (name == "tabulated") {
        if (!params.contains("omega") || !params.contains("S")) {
            throw ValidationError("tabulated spectrum needs 'omega' and 'S' arrays");
        }
        return NoiseSpectrum::tabulated(params.at("omega").get<std::vector<double>>(),
                                        params.at("S").get<std::vector<double>>());
    }
    throw ValidationError("unknown spectrum model '" + name + "'");
}

nlohmann::json to_json(const SpinBath& bath) { return json{{"modes", modes_to_json(bath.modes)}}; }

SpinBath spin_bath_from_json(const nlohmann::json& doc) {
    if (!doc.contains("modes")) throw ValidationError("spin bath needs 'modes'");
    SpinBath bath{modes_from_json(doc.at("modes"))};
    bath.validate();
    return bath;
}

BosonBath boson_bath_from_json(const nlohmann::json& doc) {
    BosonBath bath{get_number(doc, "eta"), get_number(doc, "omega_cutoff", true),
                   get_number(doc, "beta", true),
                   doc.contains("exponent") ? get_number(doc, "exponent") : 1.0};
    boson_to_spectrum(bath);  // validates
    return bath;
}

} // namespace dephase
