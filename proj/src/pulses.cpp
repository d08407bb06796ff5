// pulses.cpp - pulse layouts, switching functions and filter transforms

#include "dephase/pulses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "dephase/errors.hpp"

namespace dephase {

namespace {

constexpr std::complex<double> kI{0.0, 1.0};

double sinc(double z) {
    if (std::abs(z) < 1e-4) {
        const double z2 = z * z;
        return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
    }
    return std::sin(z) / z;
}

// Sum over constant-sign segments of (-1)^k * integral_{a}^{b} e^{i w t} dt,
// written as e^{i w mid} * len * sinc(w len / 2) so omega = 0 is exact.
std::complex<double> segment_sum(const PulseSequence& seq, double omega) {
    std::complex<double> acc{0.0, 0.0};
    double a = 0.0;
    double sign = 1.0;
    const auto times = seq.times();
    const std::size_t n = times.size();
    for (std::size_t k = 0; k <= n; ++k) {
        const double b = (k < n) ? times[k] : seq.readout_time();
        const double len = b - a;
        const double mid = 0.5 * (a + b);
        acc += sign * len * sinc(0.5 * omega * len) * std::polar(1.0, omega * mid);
        a = b;
        sign = -sign;
    }
    return acc;
}

// Equidistant layout: i w f~ = -1 + (-1)^n e^{2 i n w tau} + 2 e^{i w tau} G with
// G = sum_{k<n} (-1)^k e^{2 i k w tau}. Reducing w tau + pi/2 = m pi + x turns G
// into a Dirichlet kernel in x that stays accurate on the harmonic peaks.
std::complex<double> equidistant_transform(const EquidistantLayout& eq, double omega) {
    const double wt = omega * eq.tau;
    const double u = wt / std::numbers::pi + 0.5;
    const double m = std::nearbyint(u);
    const double x = std::numbers::pi * (u - m);
    const int n = eq.n;
    std::complex<double> g;
    if (x == 0.0) {
        g = static_cast<double>(n);
    } else {
        g = std::polar(1.0, (n - 1) * x) * (std::sin(n * x) / std::sin(x));
    }
    const double end_sign = (n % 2 == 0) ? 1.0 : -1.0;
    const std::complex<double> numer =
        -1.0 + end_sign * std::polar(1.0, 2.0 * n * wt) + 2.0 * std::polar(1.0, wt) * g;
    return numer / (kI * omega);
}

void require_positive(double value, const char* what) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw ValidationError(std::string(what) + " must be positive and finite");
    }
}

} // namespace

PulseSequence::PulseSequence(std::vector<double> times, double readout_time)
    : times_(std::move(times)), readout_(readout_time) {
    require_positive(readout_, "readout time");
    double prev = 0.0;
    for (std::size_t k = 0; k < times_.size(); ++k) {
        const double tk = times_[k];
        if (!std::isfinite(tk)) throw ValidationError("pulse times must be finite");
        if (!(tk > prev)) {
            throw ValidationError(k == 0 ? "first pulse must come after t = 0"
                                         : "pulse times must be strictly increasing");
        }
        prev = tk;
    }
    if (!(readout_ > prev)) throw ValidationError("readout time must follow the last pulse");
    finish();
}

PulseSequence PulseSequence::free_evolution(double readout_time) {
    return PulseSequence({}, readout_time);
}

PulseSequence PulseSequence::equidistant(double tau, int n) {
    require_positive(tau, "tau");
    if (n < 1) throw ValidationError("equidistant sequence needs n >= 1");
    PulseSequence seq;
    seq.times_.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) seq.times_[static_cast<std::size_t>(k)] = (2.0 * k + 1.0) * tau;
    seq.readout_ = 2.0 * n * tau;
    seq.layout_ = EquidistantLayout{tau, n};
    seq.finish();
    return seq;
}

void PulseSequence::finish() {
    double a = 0.0;
    min_interval_ = readout_;
    for (double tk : times_) {
        min_interval_ = std::min(min_interval_, tk - a);
        a = tk;
    }
    min_interval_ = std::min(min_interval_, readout_ - a);
}

std::string to_string(SequenceKind kind) {
    switch (kind) {
        case SequenceKind::SpinEcho: return "spin_echo";
        case SequenceKind::CPMG: return "cpmg";
        case SequenceKind::APCP: return "apcp";
        case SequenceKind::Custom: return "custom";
        case SequenceKind::UDD: return "udd";
    }
    return "unknown";
}

SequenceKind sequence_kind_from_string(const std::string& name) {
    if (name == "spin_echo" || name == "se") return SequenceKind::SpinEcho;
    if (name == "cpmg") return SequenceKind::CPMG;
    if (name == "apcp") return SequenceKind::APCP;
    if (name == "custom") return SequenceKind::Custom;
    if (name == "udd") return SequenceKind::UDD;
    throw ValidationError("unknown sequence family '" + name + "'");
}

SequenceFamily SequenceFamily::spin_echo(double tau) {
    return SequenceFamily{SequenceKind::SpinEcho, tau, 1, {}, 0.0};
}

SequenceFamily SequenceFamily::cpmg(double tau, int n) {
    return SequenceFamily{SequenceKind::CPMG, tau, n, {}, 0.0};
}

SequenceFamily SequenceFamily::apcp(double tau, int n) {
    return SequenceFamily{SequenceKind::APCP, tau, n, {}, 0.0};
}

SequenceFamily SequenceFamily::custom(std::vector<double> times, double readout) {
    return SequenceFamily{SequenceKind::Custom, 0.0, static_cast<int>(times.size()),
                          std::move(times), readout};
}

SequenceFamily SequenceFamily::udd(double readout, int n) {
    return SequenceFamily{SequenceKind::UDD, 0.0, n, {}, readout};
}

bool SequenceFamily::is_equidistant() const noexcept {
    return kind == SequenceKind::SpinEcho || kind == SequenceKind::CPMG ||
           kind == SequenceKind::APCP;
}

SequenceFamily SequenceFamily::with_pulses(int count) const {
    SequenceFamily out = *this;
    switch (kind) {
        case SequenceKind::CPMG:
        case SequenceKind::APCP:
        case SequenceKind::UDD:
            out.n = count;
            return out;
        default:
            throw ValidationError("pulse count is fixed for " + to_string(kind));
    }
}

std::string SequenceFamily::describe() const {
    std::ostringstream os;
    os.precision(17);
    os << to_string(kind);
    switch (kind) {
        case SequenceKind::SpinEcho: os << " tau=" << tau; break;
        case SequenceKind::CPMG:
        case SequenceKind::APCP: os << " tau=" << tau << " n=" << n; break;
        case SequenceKind::UDD: os << " t=" << readout << " n=" << n; break;
        case SequenceKind::Custom: os << " n=" << times.size() << " t=" << readout; break;
    }
    return os.str();
}

PulseSequence make_sequence(const SequenceFamily& family) {
    switch (family.kind) {
        case SequenceKind::SpinEcho:
            return PulseSequence::equidistant(family.tau, 1);
        case SequenceKind::CPMG:
            return PulseSequence::equidistant(family.tau, family.n);
        case SequenceKind::APCP:
            if (family.n % 2 != 0) throw ValidationError("APCP requires an even pulse count");
            return PulseSequence::equidistant(family.tau, family.n);
        case SequenceKind::Custom:
            return PulseSequence(family.times, family.readout);
        case SequenceKind::UDD: {
            require_positive(family.readout, "UDD readout time");
            if (family.n < 1) throw ValidationError("UDD needs n >= 1");
            std::vector<double> times(static_cast<std::size_t>(family.n));
            const double denom = 2.0 * family.n + 2.0;
            for (int k = 1; k <= family.n; ++k) {
                const double s = std::sin(k * std::numbers::pi / denom);
                times[static_cast<std::size_t>(k - 1)] = family.readout * s * s;
            }
            return PulseSequence(std::move(times), family.readout);
        }
    }
    throw ValidationError("unknown sequence family");
}

int switching_function(const PulseSequence& seq, double t_prime) {
    if (!(t_prime >= 0.0) || !(t_prime < seq.readout_time())) return 0;
    const auto times = seq.times();
    const auto before = std::upper_bound(times.begin(), times.end(), t_prime) - times.begin();
    return (before % 2 == 0) ? 1 : -1;
}

std::complex<double> filter_transform(const PulseSequence& seq, double omega) {
    const auto& layout = seq.layout();
    if (layout && std::abs(omega) * seq.readout_time() > 1.0) {
        return equidistant_transform(*layout, omega);
    }
    return segment_sum(seq, omega);
}

FilterSample filter_sample(const PulseSequence& seq, double omega) {
    const auto value = filter_transform(seq, omega);
    return FilterSample{omega, std::norm(value), value};
}

std::vector<double> fourier_coefficients(const SequenceFamily& family, int m_max) {
    if (!family.is_equidistant()) {
        throw ValidationError("Fourier coefficients need an equidistant (4 tau periodic) family");
    }
    require_positive(family.tau, "tau");
    if (m_max < 0) throw ValidationError("m_max must be non-negative");

    // Two pulses at tau and 3 tau cover exactly one period [0, 4 tau).
    const PulseSequence period({family.tau, 3.0 * family.tau}, 4.0 * family.tau);
    const double norm = 4.0 * family.tau;
    std::vector<double> out(static_cast<std::size_t>(m_max) + 1);
    for (int m = 0; m <= m_max; ++m) {
        const double omega_m = m * std::numbers::pi / (2.0 * family.tau);
        out[static_cast<std::size_t>(m)] = std::norm(segment_sum(period, omega_m) / norm);
    }
    return out;
}

} // namespace dephase
