// stochastic.hpp - Monte Carlo oracle for classical Gaussian dephasing noise:
// Ornstein-Uhlenbeck trajectories, accumulated signed phase and the resulting
// coherence estimate, plus a periodogram spectrum estimate.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "dephase/pulses.hpp"
#include "dephase/spectra.hpp"

namespace dephase {

struct OUProcessParams {
    double sigma2 = 1.0;      // variance of xi
    double tau_c = 1.0;       // correlation time
    std::uint64_t seed = 0;
    double dt = 0.01;         // integration step, at most tau_c / 10
    std::size_t n_traj = 1000;

    // Throws ValidationError.
    void validate() const;

    NoiseSpectrum spectrum() const { return NoiseSpectrum::lorentzian(sigma2, tau_c); }
};

inline constexpr std::size_t kMinTrajectories = 100;
inline constexpr std::size_t kMaxGridPoints = std::size_t{1} << 26;

struct MCEstimate {
    double W_hat = 0.0;
    double std_error = 0.0;   // batch-means standard error of W_hat
    std::size_t n_traj = 0;
    std::size_t batches = 0;
    double phase_variance = 0.0;  // sample variance of the accumulated phase
};

// Trajectory `index` of the ensemble defined by params.seed, sampled at
// k * dt for k = 0 .. floor(t_end / dt). Stationary start, exact update.
std::vector<double> generate_ou(const OUProcessParams& params, double t_end,
                                std::uint64_t index = 0);

// Threads default to the hardware concurrency. Results do not depend on the
// thread count.
MCEstimate mc_coherence(const PulseSequence& seq, const OUProcessParams& params,
                        unsigned threads = 0);

// Hann-windowed periodogram averaged over params.n_traj records of length
// t_end; requires t_end >= 50 tau_c.
NoiseSpectrum estimate_spectrum_from_trajectories(const OUProcessParams& params, double t_end,
                                                  unsigned threads = 0);

nlohmann::json to_json(const OUProcessParams& params);
OUProcessParams ou_params_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const MCEstimate& estimate, const OUProcessParams& params);

} // namespace dephase
