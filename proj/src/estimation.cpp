// estimation.cpp - T2 fits, readout-decay measurement, T2L scans and spectrum reconstruction

#include "dephase/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <numbers>
#include <ostream>

#include "dephase/errors.hpp"
#include "dephase/io.hpp"
#include "dephase/parallel.hpp"

namespace dephase {

void WindowPolicy::validate() const {
    const bool ok = w_lo > 0.0 && w_lo < w_hi && w_hi < 1.0 && range_lo > 0.0 &&
                    range_lo < range_hi && range_hi <= 1.0 && max_rms > 0.0 && monotone_tol >= 0.0;
    if (!ok) throw ValidationError("invalid fit window policy");
}

T2Estimate fit_t2(const CoherenceCurve& curve, const WindowPolicy& policy,
                  std::span<const double> w_stderr) {
    policy.validate();
    const auto& pts = curve.points;
    if (!w_stderr.empty() && w_stderr.size() != pts.size()) {
        throw ValidationError("one stderr per curve point is required");
    }
    const double chi_range_lo = -std::log(policy.range_hi);
    const double chi_range_hi = -std::log(policy.range_lo);
    const double chi_lo = -std::log(policy.w_hi);
    const double chi_hi = -std::log(policy.w_lo);

    std::size_t in_range = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i > 0) {
            if (!(pts[i].t > pts[i - 1].t)) throw ValidationError("curve times must increase");
            if (pts[i - 1].chi - pts[i].chi > policy.monotone_tol) {
                throw FitRejected("coherence rises between t = " + format_double(pts[i - 1].t) +
                                  " and t = " + format_double(pts[i].t));
            }
        }
        if (pts[i].chi >= chi_range_lo && pts[i].chi <= chi_range_hi) ++in_range;
    }
    if (in_range < 10) {
        throw FitRejected("only " + std::to_string(in_range) + " points with W in [" +
                          format_double(policy.range_lo) + ", " + format_double(policy.range_hi) +
                          "], need 10");
    }

    std::vector<double> t, y, w;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].chi < chi_lo || pts[i].chi > chi_hi) continue;
        t.push_back(pts[i].t);
        y.push_back(-pts[i].chi);
        double weight = 1.0;
        if (!w_stderr.empty()) {
            if (!(w_stderr[i] > 0.0)) throw ValidationError("point stderr must be positive");
            weight = std::pow(pts[i].W / w_stderr[i], 2);
        }
        w.push_back(weight);
    }
    const std::size_t m = t.size();
    if (m < 6) {
        throw FitRejected("only " + std::to_string(m) + " points inside the fit window, need 6");
    }

    double sw = 0.0, st = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sw += w[i];
        st += w[i] * t[i];
        sy += w[i] * y[i];
    }
    const double tbar = st / sw;
    const double ybar = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += w[i] * (t[i] - tbar) * (t[i] - tbar);
        sxy += w[i] * (t[i] - tbar) * (y[i] - ybar);
    }
    const double slope = sxy / sxx;
    const double intercept = ybar - slope * tbar;
    if (!(slope < 0.0)) throw FitRejected("fitted tail does not decay");

    double ss = 0.0, wss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double r = y[i] - (intercept + slope * t[i]);
        ss += r * r;
        wss += w[i] * r * r;
    }
    T2Estimate out;
    out.t2 = -1.0 / slope;
    out.t_lo = t.front();
    out.t_hi = t.back();
    out.points = m;
    out.residual_rms = std::sqrt(ss / static_cast<double>(m));
    const double slope_var = wss / static_cast<double>(m - 2) / sxx;
    out.stderr_t2 = std::sqrt(slope_var) / (slope * slope);
    if (out.residual_rms > policy.max_rms) {
        throw FitRejected("tail is not exponential: residual rms " + format_double(out.residual_rms) +
                          " exceeds " + format_double(policy.max_rms));
    }
    return out;
}

double t2se_to_s0(const T2Estimate& t2se) {
    if (!(t2se.t2 > 0.0)) throw ValidationError("T2SE must be positive");
    return 2.0 / t2se.t2;
}

namespace {

constexpr int kMaxDoublings = 40;

double chi_target(const WindowPolicy& policy) { return -1.2 * std::log(policy.w_lo); }

// Largest point index inside the fit window.
std::size_t last_window_index(const CoherenceCurve& curve, const WindowPolicy& policy) {
    const double chi_hi = -std::log(policy.w_lo);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        if (curve.points[i].chi <= chi_hi) idx = i;
    }
    return idx;
}

void check_stability(T2Measurement& m, double chi_w, double chi_2w, double dt, double tol) {
    const double slope = (chi_2w - chi_w) / dt;
    m.stability_delta = std::abs(slope * m.fit.t2 - 1.0);
    m.stable = m.stability_delta <= tol;
}

} // namespace

T2Measurement measure_t2l(const SequenceFamily& family, const NoiseSource& source,
                          const MeasureOptions& opts) {
    opts.window.validate();
    if (family.kind != SequenceKind::CPMG && family.kind != SequenceKind::APCP) {
        throw ValidationError("T2L measurement needs a CPMG or APCP family");
    }
    if (opts.grid_points < 10) throw ValidationError("grid_points must be at least 10");
    const int step = family.kind == SequenceKind::APCP ? 2 : 1;
    const auto chi_at = [&](int n) {
        return source_exponent(make_sequence(family.with_pulses(n)), source, opts.coherence);
    };

    const double target = chi_target(opts.window);
    int n_max = step;
    for (int i = 0; chi_at(n_max) < target; ++i) {
        if (i >= kMaxDoublings) throw FitRejected("coherence does not decay within 2^40 pulses");
        n_max *= 2;
    }

    std::vector<int> grid;
    for (int k = 1; k <= opts.grid_points; ++k) {
        int n = static_cast<int>(std::llround(static_cast<double>(k) * n_max / opts.grid_points));
        n = std::max(step, (n + step - 1) / step * step);
        if (grid.empty() || n > grid.back()) grid.push_back(n);
    }

    T2Measurement m;
    m.curve = coherence_curve(family, source, grid, opts.coherence);
    m.fit = fit_t2(m.curve, opts.window);
    const auto& last = m.curve.points[last_window_index(m.curve, opts.window)];
    m.n_used = last.n;
    const double chi_2w = chi_at(2 * last.n);
    check_stability(m, last.chi, chi_2w, last.t, opts.stability_tol);
    return m;
}

T2Measurement measure_readout_decay(const SequenceFamily& family, const NoiseSource& source,
                                    const MeasureOptions& opts) {
    opts.window.validate();
    if (family.kind != SequenceKind::SpinEcho && family.kind != SequenceKind::UDD) {
        throw ValidationError("readout sweeps need a spin echo or UDD family");
    }
    if (opts.grid_points < 10) throw ValidationError("grid_points must be at least 10");
    const auto chi_at = [&](double t) {
        const double ts[] = {t};
        return readout_sweep(family, source, ts, opts.coherence).points.front().chi;
    };

    const double target = chi_target(opts.window);
    double t_max = 1.0;
    int iter = 0;
    if (chi_at(t_max) >= target) {
        while (chi_at(0.5 * t_max) >= target) {
            if (++iter > 4 * kMaxDoublings) throw FitRejected("coherence decays too fast to resolve");
            t_max *= 0.5;
        }
    } else {
        while (chi_at(t_max) < target) {
            if (++iter > 4 * kMaxDoublings) throw FitRejected("coherence does not decay");
            t_max *= 2.0;
        }
    }

    std::vector<double> grid;
    for (int k = 1; k <= opts.grid_points; ++k) grid.push_back(t_max * k / opts.grid_points);
    T2Measurement m;
    m.curve = readout_sweep(family, source, grid, opts.coherence);
    m.fit = fit_t2(m.curve, opts.window);
    const auto& last = m.curve.points[last_window_index(m.curve, opts.window)];
    m.n_used = last.n;
    check_stability(m, last.chi, chi_at(2.0 * last.t), last.t, opts.stability_tol);
    return m;
}

void T2Scan::validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!(entries[i].tau > 0.0)) throw ValidationError("scan taus must be positive");
        if (i > 0 && !(entries[i].tau > entries[i - 1].tau)) {
            throw ValidationError("scan taus must be strictly increasing");
        }
        if (!(entries[i].t2l.t2 > 0.0) || !std::isfinite(entries[i].t2l.t2)) {
            throw ValidationError("scan T2L values must be positive");
        }
    }
}

ScanOutcome run_t2_scan(const SequenceFamily& family, const NoiseSource& source,
                        std::span<const double> taus, const MeasureOptions& opts, unsigned threads) {
    if (taus.empty()) throw ValidationError("tau grid must not be empty");
    for (std::size_t i = 0; i < taus.size(); ++i) {
        if (!(taus[i] > 0.0) || (i > 0 && !(taus[i] > taus[i - 1]))) {
            throw ValidationError("tau grid must be positive and strictly increasing");
        }
    }
    ScanOutcome out;
    out.diagnostics.resize(taus.size());
    parallel_for(taus.size(), threads, [&](std::size_t i) {
        SequenceFamily f = family;
        f.tau = taus[i];
        auto& d = out.diagnostics[i];
        d.tau = taus[i];
        try {
            d.measurement = measure_t2l(f, source, opts);
            d.accepted = true;
        } catch (const FitRejected& e) {
            d.reason = std::string("fit rejected: ") + e.what();
        } catch (const QuadratureError& e) {
            d.reason = std::string("quadrature failed: ") + e.what();
        }
    });
    for (const auto& d : out.diagnostics) {
        if (d.accepted) out.scan.entries.push_back({d.tau, d.measurement.fit, d.measurement.n_used});
    }
    return out;
}

FrequencyRange frequency_bounds(double t2_se, double tau_p) {
    if (!(t2_se > 0.0) || !(tau_p > 0.0)) throw ValidationError("t2_se and tau_p must be positive");
    if (!(tau_p < t2_se)) throw ValidationError("tau_p must be shorter than t2_se");
    return FrequencyRange{std::numbers::pi / t2_se, std::numbers::pi / tau_p};
}

std::vector<PointEstimate> pointwise_reconstruct(const T2Scan& scan,
                                                 const std::optional<FrequencyRange>& range) {
    std::vector<PointEstimate> out;
    out.reserve(scan.entries.size());
    const double factor = std::numbers::pi * std::numbers::pi / 4.0;
    for (const auto& e : scan.entries) {
        PointEstimate p;
        p.omega = std::numbers::pi / (2.0 * e.tau);
        p.s_hat = factor / e.t2l.t2;
        p.s_hat_stderr = p.s_hat * e.t2l.stderr_t2 / e.t2l.t2;
        p.in_range = !range || range->contains(p.omega);
        out.push_back(p);
    }
    return out;
}

void write_scan_csv(std::ostream& os, const T2Scan& scan) {
    os << "tau,n,t2l,t2l_stderr\n";
    for (const auto& e : scan.entries) {
        os << format_double(e.tau) << ',' << e.n_used << ',' << format_double(e.t2l.t2) << ','
           << format_double(e.t2l.stderr_t2) << '\n';
    }
}

T2Scan read_scan_csv(std::istream& is) {
    const CsvTable table = read_csv(is);
    const std::size_t c_tau = table.column("tau");
    const std::size_t c_n = table.column("n");
    const std::size_t c_t2 = table.column("t2l");
    const std::size_t c_se = table.column("t2l_stderr");
    T2Scan scan;
    for (const auto& row : table.rows) {
        T2ScanEntry e;
        e.tau = parse_double(row[c_tau]);
        e.n_used = static_cast<int>(parse_double(row[c_n]));
        e.t2l.t2 = parse_double(row[c_t2]);
        e.t2l.stderr_t2 = parse_double(row[c_se]);
        scan.entries.push_back(e);
    }
    scan.validate();
    return scan;
}

} // namespace dephase
