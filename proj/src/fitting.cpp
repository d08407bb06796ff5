// fitting.cpp - Levenberg-Marquardt spectrum model fits

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include "dephase/errors.hpp"
#include "dephase/estimation.hpp"
#include "dephase/io.hpp"

namespace dephase {

ModelFamily ModelFamily::one_over_f(double omega_min, double omega_max) {
    ModelFamily f{Kind::OneOverF};
    f.omega_min = omega_min;
    f.omega_max = omega_max;
    return f;
}

ModelFamily ModelFamily::ohmic_thermal(double beta, double exponent) {
    ModelFamily f{Kind::OhmicThermal};
    f.beta = beta;
    f.exponent = exponent;
    return f;
}

std::string ModelFamily::name() const {
    switch (kind) {
        case Kind::White: return "white";
        case Kind::Lorentzian: return "lorentzian";
        case Kind::OneOverF: return "one_over_f";
        case Kind::OhmicThermal: return "ohmic_thermal";
    }
    return "unknown";
}

std::vector<std::string> ModelFamily::parameter_names() const {
    switch (kind) {
        case Kind::White: return {"s0"};
        case Kind::Lorentzian: return {"sigma2", "tau_c"};
        case Kind::OneOverF: return {"amplitude"};
        case Kind::OhmicThermal: return {"eta", "omega_cutoff"};
    }
    return {};
}

NoiseSpectrum ModelFamily::build(std::span<const double> p) const {
    if (p.size() != parameter_names().size()) {
        throw ValidationError(name() + " takes " + std::to_string(parameter_names().size()) +
                              " fit parameters");
    }
    switch (kind) {
        case Kind::White: return NoiseSpectrum::white(p[0]);
        case Kind::Lorentzian: return NoiseSpectrum::lorentzian(p[0], p[1]);
        case Kind::OneOverF: return NoiseSpectrum::one_over_f(p[0], omega_min, omega_max);
        case Kind::OhmicThermal: return NoiseSpectrum::ohmic_thermal(p[0], p[1], beta, exponent);
    }
    throw ValidationError("unknown model family");
}

ModelFamily model_family_from_json(const nlohmann::json& doc) {
    try {
        const auto name = doc.is_string() ? doc.get<std::string>() : doc.at("model").get<std::string>();
        const nlohmann::json fixed = doc.is_object() ? doc.value("fixed", nlohmann::json::object())
                                                     : nlohmann::json::object();
        if (name == "white") return ModelFamily::white();
        if (name == "lorentzian") return ModelFamily::lorentzian();
        if (name == "one_over_f") {
            return ModelFamily::one_over_f(fixed.at("omega_min").get<double>(),
                                           fixed.at("omega_max").get<double>());
        }
        if (name == "ohmic_thermal") {
            return ModelFamily::ohmic_thermal(fixed.at("beta").get<double>(),
                                              fixed.value("exponent", 1.0));
        }
        throw ValidationError("unknown fit model '" + name + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad fit model: ") + e.what());
    }
}

nlohmann::json to_json(const ModelFamily& family) {
    nlohmann::json fixed = nlohmann::json::object();
    if (family.kind == ModelFamily::Kind::OneOverF) {
        fixed = {{"omega_min", family.omega_min}, {"omega_max", family.omega_max}};
    } else if (family.kind == ModelFamily::Kind::OhmicThermal) {
        fixed = {{"beta", family.beta}, {"exponent", family.exponent}};
    }
    return {{"model", family.name()}, {"fixed", fixed}};
}

namespace {

struct ScanData {
    std::vector<double> tau;
    std::vector<double> rate;
    std::vector<double> sqrt_weight;
    bool stderr_weights = false;
};

ScanData prepare(const T2Scan& scan) {
    scan.validate();
    ScanData d;
    d.stderr_weights = !scan.entries.empty() &&
                       std::all_of(scan.entries.begin(), scan.entries.end(),
                                   [](const T2ScanEntry& e) { return e.t2l.stderr_t2 > 0.0; });
    for (const auto& e : scan.entries) {
        const double rate = 1.0 / e.t2l.t2;
        d.tau.push_back(e.tau);
        d.rate.push_back(rate);
        // sigma_rate = rate * stderr_t2 / t2; without stderrs fall back to
        // relative residuals.
        const double sigma = d.stderr_weights ? rate * e.t2l.stderr_t2 / e.t2l.t2 : rate;
        d.sqrt_weight.push_back(1.0 / sigma);
    }
    return d;
}

// Weighted residuals; non-finite or invalid parameters give a huge residual
// so the optimizer backs off.
void residuals(const ScanData& d, const ModelFamily& family, std::span<const double> params, int L,
               Eigen::VectorXd& out) {
    out.resize(static_cast<Eigen::Index>(d.tau.size()));
    try {
        const NoiseSpectrum s = family.build(params);
        for (std::size_t k = 0; k < d.tau.size(); ++k) {
            out[static_cast<Eigen::Index>(k)] = d.sqrt_weight[k] * (d.rate[k] - harmonic_rate(s, d.tau[k], L));
        }
    } catch (const ValidationError&) {
        out.setConstant(1e150);
    }
}

double relative_rms(const ScanData& d, const ModelFamily& family, std::span<const double> params, int L) {
    const NoiseSpectrum s = family.build(params);
    double ss = 0.0;
    for (std::size_t k = 0; k < d.tau.size(); ++k) {
        const double r = (d.rate[k] - harmonic_rate(s, d.tau[k], L)) / d.rate[k];
        ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(d.tau.size()));
}

// Bounded log-parameter map: z in R -> ln(theta) in [lo, hi].
struct BoxMap {
    std::vector<double> log_lo, log_hi;
    double to_log(std::size_t j, double z) const {
        return log_lo[j] + (log_hi[j] - log_lo[j]) * 0.5 * (1.0 + std::tanh(z));
    }
    double to_z(std::size_t j, double log_theta) const {
        const double u = 2.0 * (log_theta - log_lo[j]) / (log_hi[j] - log_lo[j]) - 1.0;
        return std::atanh(std::clamp(u, -1.0 + 1e-12, 1.0 - 1e-12));
    }
    std::vector<double> natural(const Eigen::VectorXd& z) const {
        std::vector<double> out(log_lo.size());
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::exp(to_log(j, z[static_cast<Eigen::Index>(j)]));
        return out;
    }
};

struct LogFunctor : Eigen::DenseFunctor<double> {
    LogFunctor(const ScanData& d, const ModelFamily& f, const BoxMap& map, int L)
        : Eigen::DenseFunctor<double>(static_cast<int>(map.log_lo.size()), static_cast<int>(d.tau.size())),
          data(&d), family(&f), box(&map), harmonics(L) {}
    int operator()(const Eigen::VectorXd& z, Eigen::VectorXd& fvec) const {
        const auto theta = box->natural(z);
        residuals(*data, *family, theta, harmonics, fvec);
        return 0;
    }
    const ScanData* data;
    const ModelFamily* family;
    const BoxMap* box;
    int harmonics;
};

// Data-driven starting point from the pointwise estimates S ~ (pi^2/4) rate.
std::vector<double> initial_guess(const ScanData& d, const ModelFamily& family) {
    std::vector<double> omega, s_hat;
    for (std::size_t k = 0; k < d.tau.size(); ++k) {
        omega.push_back(std::numbers::pi / (2.0 * d.tau[k]));
        s_hat.push_back(std::numbers::pi * std::numbers::pi / 4.0 * d.rate[k]);
    }
    std::vector<std::size_t> order(omega.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return omega[a] < omega[b]; });
    const std::size_t mid = order[order.size() / 2];
    const double s_max = *std::max_element(s_hat.begin(), s_hat.end());

    switch (family.kind) {
        case ModelFamily::Kind::White: {
            std::vector<double> sorted = d.rate;
            std::sort(sorted.begin(), sorted.end());
            return {2.0 * sorted[sorted.size() / 2]};
        }
        case ModelFamily::Kind::Lorentzian: {
            // Half-power frequency of the point estimates.
            double knee = omega[order.back()];
            for (auto i : order) {
                if (s_hat[i] <= 0.5 * s_max) {
                    knee = omega[i];
                    break;
                }
            }
            const double tau_c = 1.0 / knee;
            return {s_max / (2.0 * tau_c), tau_c};
        }
        case ModelFamily::Kind::OneOverF: return {s_hat[mid] * omega[mid]};
        case ModelFamily::Kind::OhmicThermal: {
            const double wc = omega[mid];
            const double w = omega[mid];
            const double thermal = std::isfinite(family.beta) ? 1.0 / std::tanh(0.5 * family.beta * w) : 1.0;
            const double eta = s_hat[mid] / (std::numbers::pi * w * std::exp(-1.0) * thermal);
            return {eta, wc};
        }
    }
    return {};
}

struct StartResult {
    std::vector<double> theta;
    double objective = std::numeric_limits<double>::infinity();
    double rel_rms = std::numeric_limits<double>::infinity();
};

StartResult run_start(const ScanData& d, const ModelFamily& family, const BoxMap& box, int L,
                      const std::vector<double>& start) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(start.size()));
    for (std::size_t j = 0; j < start.size(); ++j) z[static_cast<Eigen::Index>(j)] = box.to_z(j, std::log(start[j]));
    LogFunctor functor(d, family, box, L);
    Eigen::NumericalDiff<LogFunctor, Eigen::Central> numdiff(functor);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<LogFunctor, Eigen::Central>> lm(numdiff);
    lm.setMaxfev(400 * (static_cast<int>(start.size()) + 1));
    lm.setXtol(1e-14);
    lm.setFtol(1e-16);
    lm.setGtol(0.0);
    lm.minimize(z);

    StartResult r;
    r.theta = box.natural(z);
    Eigen::VectorXd fvec;
    residuals(d, family, r.theta, L, fvec);
    r.objective = fvec.squaredNorm();
    try {
        r.rel_rms = relative_rms(d, family, r.theta, L);
    } catch (const ValidationError&) {
        r.rel_rms = std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(r.objective)) r.objective = std::numeric_limits<double>::infinity();
    return r;
}

} // namespace

double fit_objective(const T2Scan& scan, const ModelFamily& family, std::span<const double> params,
                     int L) {
    const ScanData d = prepare(scan);
    Eigen::VectorXd r;
    residuals(d, family, params, L, r);
    return r.squaredNorm();
}

ReconstructionResult fit_spectrum(const T2Scan& scan, const ModelFamily& family, int L,
                                  const FitOptions& opts) {
    const auto names = family.parameter_names();
    const std::size_t np = names.size();
    if (L < 10) throw ValidationError("harmonic cutoff L must be at least 10 for a spectrum fit");
    if (scan.entries.size() < 2 * np) {
        throw ValidationError("scan needs at least " + std::to_string(2 * np) + " entries for a " +
                              family.name() + " fit");
    }
    if (opts.starts < 8) throw ValidationError("at least 8 optimizer starts are required");
    const ScanData d = prepare(scan);

    const auto guess = initial_guess(d, family);
    BoxMap box;
    std::vector<double> lower = opts.lower, upper = opts.upper;
    if (lower.empty()) for (double g : guess) lower.push_back(g * 1e-3);
    if (upper.empty()) for (double g : guess) upper.push_back(g * 1e3);
    if (lower.size() != np || upper.size() != np) {
        throw ValidationError("fit bounds need one value per parameter");
    }
    for (std::size_t j = 0; j < np; ++j) {
        if (!(lower[j] > 0.0) || !(upper[j] > lower[j]) || !std::isfinite(upper[j])) {
            throw ValidationError("fit bounds must satisfy 0 < lower < upper < inf");
        }
        box.log_lo.push_back(std::log(lower[j]));
        box.log_hi.push_back(std::log(upper[j]));
    }

    // Start 0 is the clamped guess; the rest are log-uniform over the box.
    std::vector<std::vector<double>> starts;
    std::vector<double> g0(np);
    for (std::size_t j = 0; j < np; ++j) {
        g0[j] = std::exp(std::clamp(std::log(guess[j]), box.log_lo[j], box.log_hi[j]));
    }
    starts.push_back(g0);
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int s = 0; s < opts.starts; ++s) {
        std::vector<double> theta(np);
        for (std::size_t j = 0; j < np; ++j) {
            theta[j] = std::exp(box.log_lo[j] + (box.log_hi[j] - box.log_lo[j]) * unit(rng));
        }
        starts.push_back(theta);
    }

    std::vector<std::future<StartResult>> futures;
    for (const auto& start : starts) {
        futures.push_back(std::async(std::launch::async, run_start, std::cref(d), std::cref(family),
                                     std::cref(box), L, start));
    }
    std::vector<StartResult> results;
    for (auto& f : futures) results.push_back(f.get());

    // Deterministic choice: lowest objective, ties by start index.
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
        if (results[i].objective < results[best].objective) best = i;
    }
    const bool any_ok = std::any_of(results.begin(), results.end(), [&](const StartResult& r) {
        return r.rel_rms <= opts.max_rel_rms;
    });
    if (!any_ok) {
        double best_rms = std::numeric_limits<double>::infinity();
        for (const auto& r : results) best_rms = std::min(best_rms, r.rel_rms);
        throw FitFailure("spectrum fit failed: best relative rms " + format_double(best_rms) +
                             " exceeds " + format_double(opts.max_rel_rms) + " for every start",
                         best_rms);
    }
    const StartResult& win = results[best];

    ReconstructionResult out;
    out.points = pointwise_reconstruct(scan);
    out.family = family;
    out.param_names = names;
    out.params = win.theta;
    out.objective = win.objective;
    out.rel_rms = win.rel_rms;
    out.L = L;
    out.starts = static_cast<int>(starts.size());
    out.seed = opts.seed;
    out.best_start = static_cast<int>(best);
    out.lower = lower;
    out.upper = upper;
    for (std::size_t j = 0; j < np; ++j) {
        const double lt = std::log(win.theta[j]);
        out.at_bound.push_back(lt - box.log_lo[j] < 1e-3 || box.log_hi[j] - lt < 1e-3);
    }

    // Covariance from the Jacobian of the weighted residuals in natural units.
    const auto m = static_cast<Eigen::Index>(d.tau.size());
    Eigen::MatrixXd J(m, static_cast<Eigen::Index>(np));
    for (std::size_t j = 0; j < np; ++j) {
        const double h = 1e-6 * win.theta[j];
        auto up = win.theta, dn = win.theta;
        up[j] += h;
        dn[j] -= h;
        Eigen::VectorXd rp, rm;
        residuals(d, family, up, L, rp);
        residuals(d, family, dn, L, rm);
        // residual = w (rate - F), so dF/dtheta carries a minus sign.
        J.col(static_cast<Eigen::Index>(j)) = -(rp - rm) / (2.0 * h);
    }
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    Eigen::MatrixXd cov = JtJ.completeOrthogonalDecomposition().pseudoInverse();
    if (!d.stderr_weights) {
        const double dof = static_cast<double>(m) - static_cast<double>(np);
        cov *= dof > 0.0 ? win.objective / dof : 0.0;
    }
    out.covariance.assign(np, std::vector<double>(np));
    for (std::size_t a = 0; a < np; ++a) {
        for (std::size_t b = 0; b < np; ++b) {
            out.covariance[a][b] = cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        }
    }
    return out;
}

nlohmann::json to_json(const ReconstructionResult& r) {
    using nlohmann::json;
    json points = json::array();
    for (const auto& p : r.points) {
        points.push_back({{"omega", p.omega}, {"s_hat", p.s_hat}, {"s_hat_stderr", p.s_hat_stderr},
                          {"in_range", p.in_range}});
    }
    json params = json::object(), at_bound = json::object(), bounds = json::object();
    for (std::size_t j = 0; j < r.param_names.size(); ++j) {
        params[r.param_names[j]] = r.params[j];
        at_bound[r.param_names[j]] = static_cast<bool>(r.at_bound[j]);
        bounds[r.param_names[j]] = json::array({r.lower[j], r.upper[j]});
    }
    json out{{"points", points},
             {"model", to_json(r.family)},
             {"params", params},
             {"param_names", r.param_names},
             {"covariance", r.covariance},
             {"at_bound", at_bound},
             {"bounds", bounds},
             {"L", r.L},
             {"objective", r.objective},
             {"rel_rms", r.rel_rms},
             {"starts", {{"count", r.starts}, {"seed", r.seed}, {"best", r.best_start}}}};
    out["freq_range"] = r.freq_range ? json::array({r.freq_range->lo, r.freq_range->hi}) : json(nullptr);
    return out;
}

} // namespace dephase
