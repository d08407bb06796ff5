// pulses.hpp - ideal pi-pulse sequences, the switching function f_t(t') and
// its Fourier transform (the filter function).

#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dephase {

// Pulses at tau, 3tau, 5tau, ... with readout at 2 n tau.
struct EquidistantLayout {
    double tau;
    int n;
};

// Ordered instantaneous pi-pulse times 0 < t_1 < ... < t_n < t.
// Pulse axes and phases are not stored: the coherence magnitude depends only
// on the timings.
class PulseSequence {
public:
    PulseSequence(std::vector<double> times, double readout_time);

    static PulseSequence free_evolution(double readout_time);
    static PulseSequence equidistant(double tau, int n);

    std::span<const double> times() const noexcept { return times_; }
    double readout_time() const noexcept { return readout_; }
    std::size_t size() const noexcept { return times_.size(); }

    // Shortest constant-sign segment, including the two end segments.
    double min_interval() const noexcept { return min_interval_; }

    const std::optional<EquidistantLayout>& layout() const noexcept { return layout_; }

private:
    PulseSequence() = default;
    void finish();

    std::vector<double> times_;
    double readout_ = 0.0;
    double min_interval_ = 0.0;
    std::optional<EquidistantLayout> layout_;
};

enum class SequenceKind { SpinEcho, CPMG, APCP, Custom, UDD };

std::string to_string(SequenceKind kind);
SequenceKind sequence_kind_from_string(const std::string& name);

// A recipe for a PulseSequence. CPMG and APCP coincide for ideal pulses; APCP
// keeps its even-n block structure {tau - pi(x) - 2tau - pi(-x) - tau}^{n/2}.
struct SequenceFamily {
    SequenceKind kind = SequenceKind::SpinEcho;
    double tau = 0.0;           // half spacing for SE/CPMG/APCP
    int n = 0;                  // pulse count for CPMG/APCP/UDD
    std::vector<double> times;  // Custom only
    double readout = 0.0;       // Custom and UDD

    static SequenceFamily spin_echo(double tau);
    static SequenceFamily cpmg(double tau, int n);
    static SequenceFamily apcp(double tau, int n);
    static SequenceFamily custom(std::vector<double> times, double readout);
    static SequenceFamily udd(double readout, int n);

    bool is_equidistant() const noexcept;

    // Same family with a different pulse count (CPMG/APCP/UDD).
    SequenceFamily with_pulses(int count) const;

    std::string describe() const;
};

PulseSequence make_sequence(const SequenceFamily& family);

// (-1)^k on [t_k, t_{k+1}), zero outside [0, t).
int switching_function(const PulseSequence& seq, double t_prime);

// Closed-form integral of e^{i omega t'} f_t(t') over the support. Exact at
// omega = 0 and for any omega; O(1) for equidistant layouts, O(n) otherwise.
std::complex<double> filter_transform(const PulseSequence& seq, double omega);

struct FilterSample {
    double omega;
    double ff;  // |f~_t(omega)|^2
    std::complex<double> complex_value;
};

FilterSample filter_sample(const PulseSequence& seq, double omega);

inline double filter_function(const PulseSequence& seq, double omega) {
    return std::norm(filter_transform(seq, omega));
}

// |C_m|^2 for m = 0..m_max, where C_m is the Fourier coefficient of the
// 4 tau periodic switching function at omega_m = m pi / (2 tau).
std::vector<double> fourier_coefficients(const SequenceFamily& family, int m_max);

} // namespace dephase
