// coherence.cpp - filter integrals, closed-form exponents and spin-bath coherence

#include "dephase/coherence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "dephase/errors.hpp"
#include "dephase/io.hpp"
#include "dephase/quadrature.hpp"

namespace dephase {

namespace {

constexpr double kInvTwoPi = 0.5 / std::numbers::pi;

// Bound on sum_{j<k} |d_j d_k| / (t_k - t_j) over the jump coefficients of
// f_t (|d| = 1 at the ends, 2 at pulses), using min spacing and the harmonic
// series.
double cross_term_bound(const PulseSequence& seq) {
    const double m = static_cast<double>(seq.size()) + 2.0;
    return 4.0 * m * (std::log(m) + 1.0) / seq.min_interval();
}

std::vector<double> panel_edges(double omega_max, double width, const std::vector<double>& extra,
                                std::size_t budget) {
    const double count = std::ceil(omega_max / width);
    if (count > static_cast<double>(budget)) {
        throw QuadratureError("coherence integral needs " + std::to_string(count) +
                              " panels, more than the interval budget");
    }
    const auto n = static_cast<std::size_t>(count);
    std::vector<double> edges;
    edges.reserve(n + 1 + extra.size());
    for (std::size_t k = 0; k < n; ++k) edges.push_back(static_cast<double>(k) * width);
    edges.push_back(omega_max);
    for (double b : extra) {
        if (b > 0.0 && b < omega_max) edges.push_back(b);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

} // namespace

double coherence_exponent(const PulseSequence& seq, const NoiseSpectrum& s,
                          const CoherenceOptions& opts) {
    if (!(opts.abs_tol > 0.0)) throw ValidationError("abs_tol must be positive");
    const double t = seq.readout_time();
    const double plateau = opts.subtract_plateau ? s.plateau() : 0.0;
    const double analytic = 0.5 * plateau * t;
    if (opts.subtract_plateau && std::holds_alternative<WhiteNoise>(s.model())) return analytic;
    if (opts.method == CoherenceMethod::Auto) {
        if (const auto* ou = std::get_if<LorentzianNoise>(&s.model())) {
            return ou_exponent(seq, ou->sigma2, ou->tau_c);
        }
    }

    const double knee = s.characteristic_frequency();
    if (!std::isfinite(knee)) {
        throw ValidationError("spectrum " + s.model_name() +
                              " is not integrable against the filter function");
    }
    const auto residual = [&s, plateau](double w) { return s(w) - plateau; };

    // Beyond omega_top the integrand is split into its average part
    // (4n+2) R / w^2, integrated exactly, and an oscillating remainder bounded
    // by the second mean value theorem.
    const double dmin = seq.min_interval();
    const double jump_energy = 4.0 * static_cast<double>(seq.size()) + 2.0;
    const double cross = cross_term_bound(seq);
    double omega_top = std::max(32.0 * std::numbers::pi / dmin, 2.0 * knee);
    for (int iter = 0;; ++iter) {
        const double bound = 2.0 / std::numbers::pi * cross * std::abs(s.tail_sup(omega_top) - plateau) /
                             (omega_top * omega_top);
        if (bound <= 0.25 * opts.abs_tol) break;
        if (iter > 200) throw QuadratureError("coherence tail bound did not converge");
        omega_top *= 2.0;
    }

    const double width = std::min(std::numbers::pi / dmin, 4.0 * std::numbers::pi / t);
    const auto edges = panel_edges(omega_top, width, s.breakpoints(), opts.max_intervals);
    const auto body = [&](double w) { return residual(w) * filter_function(seq, w); };
    const auto main = quad::integrate(body, std::span<const double>(edges),
                                      0.5 * opts.abs_tol / kInvTwoPi, opts.max_intervals);

    // integral_{omega_top}^inf R(w) / w^2 dw with u = 1 / w.
    const double u_top = 1.0 / omega_top;
    const auto tail_body = [&](double u) { return u > 0.0 ? residual(1.0 / u) : 0.0; };
    std::vector<double> tail_edges;
    constexpr int kTailPanels = 16;
    for (int k = 0; k <= kTailPanels; ++k) tail_edges.push_back(u_top * k / kTailPanels);
    const double tail_tol = 0.25 * opts.abs_tol / (kInvTwoPi * jump_energy);
    const auto tail = quad::integrate(tail_body, std::span<const double>(tail_edges), tail_tol,
                                      opts.max_intervals);

    return analytic + kInvTwoPi * (main.value + jump_energy * tail.value);
}

double ou_exponent(const PulseSequence& seq, double sigma2, double tau_c) {
    // Segment a contributes 2 tau_c^2 (x - 1 + e^{-x}) with x = len / tau_c on
    // the diagonal. Off-diagonal pairs factorize because the kernel is
    // exponential; `carry` accumulates the earlier segments' signed overlap,
    // decayed to the start of the current one.
    double diag = 0.0, diag_c = 0.0;
    double cross = 0.0, cross_c = 0.0;
    const auto add = [](double& sum, double& comp, double x) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    };
    double carry = 0.0;
    double start = 0.0;
    double sign = 1.0;
    const auto times = seq.times();
    for (std::size_t k = 0; k <= times.size(); ++k) {
        const double end = k < times.size() ? times[k] : seq.readout_time();
        const double x = (end - start) / tau_c;
        const double one_minus = -std::expm1(-x);
        // x - 1 + e^{-x}, with a series near zero to avoid cancellation.
        const double shape = x < 1e-3 ? x * x * (0.5 - x / 6.0 + x * x / 24.0) : x - one_minus;
        add(diag, diag_c, 2.0 * tau_c * tau_c * shape);
        add(cross, cross_c, sign * tau_c * one_minus * carry);
        carry = carry * std::exp(-x) + sign * tau_c * one_minus;
        start = end;
        sign = -sign;
    }
    return sigma2 * (0.5 * diag + cross);
}

double harmonic_rate(const NoiseSpectrum& s, double tau, int L) {
    double sum = 0.0;
    for (int l = 0; l <= L; ++l) {
        const double k = 2.0 * l + 1.0;
        sum += s(k * std::numbers::pi / (2.0 * tau)) / (k * k);
    }
    return 4.0 / (std::numbers::pi * std::numbers::pi) * sum;
}

DecayRate asymptotic_rate(const SequenceFamily& family, const NoiseSpectrum& s, int L) {
    if (!family.is_equidistant()) {
        throw ValidationError("asymptotic rate needs an equidistant family, got " +
                              to_string(family.kind));
    }
    if (!(family.tau > 0.0)) throw ValidationError("tau must be positive");
    if (L < 1) throw ValidationError("harmonic cutoff L must be >= 1");
    double partial = 0.0;
    for (int l = 0; l <= L; ++l) {
        const double k = 2.0 * l + 1.0;
        partial += 1.0 / (k * k);
    }
    const double remainder = std::max(std::numbers::pi * std::numbers::pi / 8.0 - partial, 0.0);
    const double next = (2.0 * L + 3.0) * std::numbers::pi / (2.0 * family.tau);
    DecayRate out;
    out.rate = harmonic_rate(s, family.tau, L);
    out.tau = family.tau;
    out.harmonics_used = L;
    out.tail_bound = 4.0 / (std::numbers::pi * std::numbers::pi) * s.tail_sup(next) * remainder;
    return out;
}

double spin_spin_exponent(const PulseSequence& seq, const SpinBath& bath) {
    double chi = 0.0;
    for (const auto& mode : bath.modes) {
        if (mode.mu == 0.0) continue;
        const double alpha = std::atan2(2.0 * mode.mu, mode.omega);
        const double gamma = std::hypot(mode.omega, 2.0 * mode.mu);
        const double theta = alpha * gamma * std::abs(filter_transform(seq, gamma));
        const double c = std::abs(std::cos(theta));
        if (c < 1e-12) return std::numeric_limits<double>::infinity();
        chi -= std::log(c);
    }
    return chi;
}

double spin_spin_exact(const PulseSequence& seq, const SpinBath& bath) {
    const double chi = spin_spin_exponent(seq, bath);
    return std::isfinite(chi) ? std::exp(-chi) : 0.0;
}

double spin_spin_gaussian_exponent(const PulseSequence& seq, const SpinBath& bath) {
    double chi = 0.0;
    for (const auto& mode : bath.modes) {
        chi += 2.0 * mode.mu * mode.mu * filter_function(seq, mode.omega);
    }
    return chi;
}

double source_exponent(const PulseSequence& seq, const NoiseSource& source,
                       const CoherenceOptions& opts) {
    if (const auto* spectrum = std::get_if<NoiseSpectrum>(&source)) {
        return coherence_exponent(seq, *spectrum, opts);
    }
    return spin_spin_exponent(seq, std::get<SpinBath>(source));
}

namespace {

std::string source_name(const NoiseSource& source) {
    if (const auto* spectrum = std::get_if<NoiseSpectrum>(&source)) return spectrum->model_name();
    return "spin_bath";
}

CoherencePoint make_point(int n, double t, double chi) {
    return CoherencePoint{n, t, std::exp(-chi), chi};
}

} // namespace

CoherenceCurve coherence_curve(const SequenceFamily& family, const NoiseSource& source,
                               std::span<const int> n_list, const CoherenceOptions& opts) {
    if (n_list.empty()) throw ValidationError("n_list must not be empty");
    if (family.kind != SequenceKind::CPMG && family.kind != SequenceKind::APCP) {
        throw ValidationError("pulse-count sweeps need a CPMG or APCP family, got " +
                              to_string(family.kind));
    }
    if (const auto* bath = std::get_if<SpinBath>(&source)) bath->validate();
    CoherenceCurve curve;
    curve.protocol = to_string(family.kind) + " tau=" + format_double(family.tau) + " source=" +
                     source_name(source);
    int prev = 0;
    for (int n : n_list) {
        if (n <= prev) throw ValidationError("n_list must be strictly ascending and positive");
        prev = n;
        const auto seq = make_sequence(family.with_pulses(n));
        curve.points.push_back(make_point(n, seq.readout_time(), source_exponent(seq, source, opts)));
    }
    return curve;
}

CoherenceCurve readout_sweep(const SequenceFamily& family, const NoiseSource& source,
                             std::span<const double> t_list, const CoherenceOptions& opts) {
    if (t_list.empty()) throw ValidationError("t_list must not be empty");
    if (family.kind != SequenceKind::SpinEcho && family.kind != SequenceKind::UDD) {
        throw ValidationError("readout sweeps need a spin echo or UDD family, got " +
                              to_string(family.kind));
    }
    if (const auto* bath = std::get_if<SpinBath>(&source)) bath->validate();
    CoherenceCurve curve;
    curve.protocol = to_string(family.kind) + " n=" + std::to_string(family.n) + " source=" +
                     source_name(source);
    double prev = 0.0;
    for (double t : t_list) {
        if (!(t > prev)) throw ValidationError("t_list must be strictly ascending and positive");
        prev = t;
        SequenceFamily f = family;
        if (f.kind == SequenceKind::SpinEcho) {
            f.tau = 0.5 * t;
        } else {
            f.readout = t;
        }
        const auto seq = make_sequence(f);
        curve.points.push_back(make_point(static_cast<int>(seq.size()), t,
                                          source_exponent(seq, source, opts)));
    }
    return curve;
}

void write_curve_csv(std::ostream& os, const CoherenceCurve& curve) {
    os << "t,W,chi\n";
    for (const auto& p : curve.points) {
        os << format_double(p.t) << ',' << format_double(p.W) << ',' << format_double(p.chi) << '\n';
    }
}

} // namespace dephase
