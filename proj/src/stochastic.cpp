// stochastic.cpp - Ornstein-Uhlenbeck trajectories, Monte Carlo coherence and periodograms

#include "dephase/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>

#include <unsupported/Eigen/FFT>

#include "dephase/errors.hpp"
#include "dephase/parallel.hpp"

namespace dephase {

namespace {

// Neumaier compensated accumulator.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + carry; }
};

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Independent stream for trajectory `index`, fixed by (seed, index) alone.
std::mt19937_64 trajectory_rng(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t state = seed;
    const std::uint64_t a = splitmix64(state);
    state = a ^ (index * 0xd1b54a32d192ed03ULL);
    splitmix64(state);
    return std::mt19937_64(splitmix64(state));
}

class OUStepper {
public:
    OUStepper(const OUProcessParams& p, std::uint64_t index)
        : rng_(trajectory_rng(p.seed, index)),
          decay_(std::exp(-p.dt / p.tau_c)),
          kick_(std::sqrt(p.sigma2 * -std::expm1(-2.0 * p.dt / p.tau_c))) {
        value_ = std::sqrt(p.sigma2) * normal_(rng_);
    }
    double value() const { return value_; }
    double step() {
        value_ = value_ * decay_ + kick_ * normal_(rng_);
        return value_;
    }

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    double decay_;
    double kick_;
    double value_ = 0.0;
};

std::size_t grid_steps(double t_end, double dt) {
    const double steps = std::floor(t_end / dt * (1.0 + 1e-12));
    if (!(steps >= 1.0)) throw ValidationError("record length must cover at least one step");
    if (steps + 1.0 > static_cast<double>(kMaxGridPoints)) {
        throw ValidationError("trajectory grid exceeds the memory budget");
    }
    return static_cast<std::size_t>(steps);
}

} // namespace

void OUProcessParams::validate() const {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ValidationError("sigma2 must be positive");
    if (!(tau_c > 0.0) || !std::isfinite(tau_c)) throw ValidationError("tau_c must be positive");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("dt must be positive");
    if (dt > tau_c / 10.0 * (1.0 + 1e-12)) throw ValidationError("dt must not exceed tau_c / 10");
    if (n_traj < kMinTrajectories) {
        throw ValidationError("n_traj must be at least " + std::to_string(kMinTrajectories));
    }
}

std::vector<double> generate_ou(const OUProcessParams& params, double t_end, std::uint64_t index) {
    params.validate();
    const std::size_t steps = grid_steps(t_end, params.dt);
    std::vector<double> out(steps + 1);
    OUStepper ou(params, index);
    out[0] = ou.value();
    for (std::size_t k = 1; k <= steps; ++k) out[k] = ou.step();
    return out;
}

MCEstimate mc_coherence(const PulseSequence& seq, const OUProcessParams& params, unsigned threads) {
    params.validate();
    const std::size_t batches = std::min<std::size_t>(50, params.n_traj / 5);
    if (batches < 20) throw ValidationError("too few trajectories for 20 batches");

    const double dt = params.dt;
    const double steps_real = seq.readout_time() / dt;
    const std::size_t steps = static_cast<std::size_t>(std::llround(steps_real));
    if (std::abs(steps_real - static_cast<double>(steps)) > 1e-6 * std::max(1.0, steps_real)) {
        throw ValidationError("readout time is not a multiple of dt");
    }
    grid_steps(seq.readout_time(), dt);

    // Sign of f_t on each grid interval after snapping pulses to the nearest
    // grid point (timing shift at most dt/2).
    std::vector<signed char> sign(steps);
    {
        std::size_t prev = 0;
        std::size_t k = 0;
        signed char s = 1;
        for (double tp : seq.times()) {
            const auto idx = static_cast<std::size_t>(std::llround(tp / dt));
            if (idx <= prev || idx >= steps) {
                throw ValidationError("dt is too coarse to resolve the pulse spacing");
            }
            for (; k < idx; ++k) sign[k] = s;
            s = static_cast<signed char>(-s);
            prev = idx;
        }
        for (; k < steps; ++k) sign[k] = s;
    }

    std::vector<double> phase(params.n_traj);
    parallel_for(params.n_traj, threads, [&](std::size_t i) {
        OUStepper ou(params, i);
        double prev = ou.value();
        double acc = 0.0;
        for (std::size_t k = 0; k < steps; ++k) {
            const double next = ou.step();
            acc += sign[k] * (prev + next);
            prev = next;
        }
        phase[i] = 0.5 * dt * acc;
    });

    const std::size_t n = params.n_traj;
    KahanSum re, im, ph;
    std::vector<std::complex<double>> batch_mean(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        const std::size_t lo = b * n / batches;
        const std::size_t hi = (b + 1) * n / batches;
        KahanSum bre, bim;
        for (std::size_t i = lo; i < hi; ++i) {
            const double c = std::cos(phase[i]);
            const double s = std::sin(phase[i]);
            bre.add(c);
            bim.add(s);
            re.add(c);
            im.add(s);
            ph.add(phase[i]);
        }
        const double m = static_cast<double>(hi - lo);
        batch_mean[b] = {bre.value() / m, bim.value() / m};
    }
    const std::complex<double> mean{re.value() / n, im.value() / n};
    const double mean_phase = ph.value() / n;
    KahanSum var;
    for (double p : phase) var.add((p - mean_phase) * (p - mean_phase));

    MCEstimate out;
    out.n_traj = n;
    out.batches = batches;
    out.W_hat = std::abs(mean);
    out.phase_variance = var.value() / static_cast<double>(n - 1);

    // Project batch means on the direction of the overall mean; |mean| is
    // first-order sensitive only to that component.
    const std::complex<double> dir = out.W_hat > 0.0 ? mean / out.W_hat : std::complex<double>{1.0, 0.0};
    KahanSum ysum;
    std::vector<double> y(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        y[b] = (batch_mean[b] * std::conj(dir)).real();
        ysum.add(y[b]);
    }
    const double ybar = ysum.value() / static_cast<double>(batches);
    KahanSum ss;
    for (double v : y) ss.add((v - ybar) * (v - ybar));
    const double bm = static_cast<double>(batches);
    const double se = std::sqrt(ss.value() / (bm * (bm - 1.0)));
    const double floor = 8.0 * std::numeric_limits<double>::epsilon() * std::max(out.W_hat, 1e-3);
    out.std_error = std::max(se, floor);
    return out;
}

NoiseSpectrum estimate_spectrum_from_trajectories(const OUProcessParams& params, double t_end,
                                                  unsigned threads) {
    params.validate();
    if (!(t_end >= 50.0 * params.tau_c * (1.0 - 1e-12))) {
        throw ValidationError("record length must be at least 50 tau_c");
    }
    const std::size_t steps = grid_steps(t_end, params.dt);
    const std::size_t len = steps + 1;
    std::size_t padded = 1;
    while (padded < 2 * len) padded <<= 1;
    const std::size_t bins = padded / 2 + 1;

    std::vector<double> window(len);
    double window_energy = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
        window[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                          static_cast<double>(len - 1)));
        window_energy += window[k] * window[k];
    }

    // Fixed-size blocks summed in block order keep the result independent of
    // the thread count.
    constexpr std::size_t kBlock = 16;
    const std::size_t blocks = (params.n_traj + kBlock - 1) / kBlock;
    std::vector<std::vector<double>> block_sums(blocks, std::vector<double>(bins, 0.0));
    parallel_for(blocks, threads, [&](std::size_t b) {
        Eigen::FFT<double> fft;
        std::vector<double> record(padded, 0.0);
        std::vector<std::complex<double>> spectrum;
        auto& acc = block_sums[b];
        const std::size_t hi = std::min(params.n_traj, (b + 1) * kBlock);
        for (std::size_t i = b * kBlock; i < hi; ++i) {
            OUStepper ou(params, i);
            record[0] = ou.value() * window[0];
            for (std::size_t k = 1; k < len; ++k) record[k] = ou.step() * window[k];
            fft.fwd(spectrum, record);
            for (std::size_t k = 0; k < bins; ++k) acc[k] += std::norm(spectrum[k]);
        }
    });

    std::vector<double> omega(bins), values(bins);
    const double scale = params.dt / (window_energy * static_cast<double>(params.n_traj));
    for (std::size_t k = 0; k < bins; ++k) {
        KahanSum s;
        for (const auto& blk : block_sums) s.add(blk[k]);
        omega[k] = 2.0 * std::numbers::pi * static_cast<double>(k) /
                   (static_cast<double>(padded) * params.dt);
        values[k] = s.value() * scale;
    }
    return NoiseSpectrum::tabulated(std::move(omega), std::move(values));
}

nlohmann::json to_json(const OUProcessParams& params) {
    return nlohmann::json{{"sigma2", params.sigma2}, {"tau_c", params.tau_c},
                          {"seed", params.seed},     {"dt", params.dt},
                          {"n_traj", params.n_traj}};
}

OUProcessParams ou_params_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ValidationError("OU parameters must be a JSON object");
    OUProcessParams p;
    try {
        p.sigma2 = doc.at("sigma2").get<double>();
        p.tau_c = doc.at("tau_c").get<double>();
        p.dt = doc.value("dt", p.tau_c / 20.0);
        p.seed = doc.value("seed", std::uint64_t{0});
        p.n_traj = doc.value("n_traj", std::size_t{1000});
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad OU parameters: ") + e.what());
    }
    p.validate();
    return p;
}

nlohmann::json to_json(const MCEstimate& estimate, const OUProcessParams& params) {
    return nlohmann::json{{"W_hat", estimate.W_hat},   {"stderr", estimate.std_error},
                          {"n_traj", estimate.n_traj}, {"seed", params.seed},
                          {"params", to_json(params)}};
}

} // namespace dephase
