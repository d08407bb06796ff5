// cli.cpp - subcommand dispatch and config handling for the dephase CLI

#include "dephase/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include "dephase/coherence.hpp"
#include "dephase/errors.hpp"
#include "dephase/estimation.hpp"
#include "dephase/io.hpp"
#include "dephase/pulses.hpp"
#include "dephase/spectra.hpp"
#include "dephase/stochastic.hpp"

namespace dephase {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool force = false;
    std::optional<int> harmonics;
    std::string scan_path;  // reconstruct positional
};

// The effective run configuration: config file merged with flag overrides.
struct Run {
    json config;
    RunMeta meta;
    fs::path out_dir;
    int harmonics = kDefaultHarmonics;
    bool force = false;
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ValidationError("config is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw ValidationError("config must be a JSON object");
    return doc;
}

Run make_run(const Flags& flags) {
    Run run;
    run.config = load_config(flags.config_path);
    auto& c = run.config;
    if (flags.seed) c["seed"] = *flags.seed;
    if (flags.out_dir) c["out"] = *flags.out_dir;
    if (flags.harmonics) c["harmonics"] = *flags.harmonics;
    if (!flags.scan_path.empty()) c["reconstruct"]["scan"] = flags.scan_path;
    run.force = flags.force;
    run.harmonics = c.value("harmonics", kDefaultHarmonics);
    if (run.harmonics < 1) throw ValidationError("harmonics must be >= 1");
    run.out_dir = c.value("out", std::string("."));
    // Where results go does not change what they are.
    json hashed = c;
    hashed.erase("out");
    run.meta.config_hash = config_hash(hashed);
    if (c.contains("seed")) run.meta.seed = c.at("seed").get<std::uint64_t>();
    return run;
}

std::uint64_t run_seed(const Run& run) { return run.meta.seed.value_or(0); }

std::ofstream open_output(const Run& run, const std::string& name) {
    fs::create_directories(run.out_dir);
    const fs::path path = run.out_dir / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write '" + path.string() + "'");
    return os;
}

void write_json(const Run& run, const std::string& name, json body) {
    body["meta"] = meta_json(run.meta);
    auto os = open_output(run, name);
    os << body.dump(2) << '\n';
}

const json& require_key(const json& doc, const std::string& key, const std::string& where) {
    if (!doc.is_object() || !doc.contains(key)) {
        throw ValidationError(where + " is missing '" + key + "'");
    }
    return doc.at(key);
}

SequenceFamily family_from_json(const json& doc) {
    const auto kind = sequence_kind_from_string(require_key(doc, "family", "sequence").get<std::string>());
    switch (kind) {
        case SequenceKind::SpinEcho: return SequenceFamily::spin_echo(doc.value("tau", 0.0));
        case SequenceKind::CPMG: return SequenceFamily::cpmg(doc.value("tau", 0.0), doc.value("n", 1));
        case SequenceKind::APCP: return SequenceFamily::apcp(doc.value("tau", 0.0), doc.value("n", 2));
        case SequenceKind::UDD: return SequenceFamily::udd(doc.value("readout", 0.0), doc.value("n", 1));
        case SequenceKind::Custom:
            return SequenceFamily::custom(require_key(doc, "times", "sequence").get<std::vector<double>>(),
                                          require_key(doc, "readout", "sequence").get<double>());
    }
    throw ValidationError("unknown sequence family");
}

NoiseSource source_from_config(const json& c) {
    if (c.contains("spectrum")) return spectrum_from_json(c.at("spectrum"));
    if (c.contains("bath")) {
        const auto& bath = c.at("bath");
        const auto type = require_key(bath, "type", "bath").get<std::string>();
        if (type == "spin") return spin_bath_from_json(bath);
        if (type == "boson") return boson_to_spectrum(boson_bath_from_json(bath));
        throw ValidationError("bath type must be 'spin' or 'boson'");
    }
    throw ValidationError("config needs a 'spectrum' or 'bath' section");
}

std::vector<double> grid_from_json(const json& doc, const std::string& what) {
    if (doc.is_array()) return doc.get<std::vector<double>>();
    const double start = require_key(doc, "start", what).get<double>();
    const double stop = require_key(doc, "stop", what).get<double>();
    const int count = require_key(doc, "count", what).get<int>();
    const bool log = doc.value("spacing", std::string("linear")) == "log";
    if (count < 1) return {};
    if (log && !(start > 0.0 && stop > 0.0)) throw ValidationError(what + ": log spacing needs positive ends");
    std::vector<double> out;
    for (int k = 0; k < count; ++k) {
        const double f = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
        out.push_back(log ? start * std::pow(stop / start, f) : start + (stop - start) * f);
    }
    return out;
}

CoherenceOptions coherence_options(const json& c) {
    CoherenceOptions o;
    if (c.contains("tolerance")) {
        const auto& t = c.at("tolerance");
        o.abs_tol = t.value("abs_tol", o.abs_tol);
        o.max_intervals = t.value("max_intervals", o.max_intervals);
        if (t.value("method", std::string("auto")) == "quadrature") o.method = CoherenceMethod::Quadrature;
    }
    if (!(o.abs_tol > 0.0)) throw ValidationError("tolerance.abs_tol must be positive");
    return o;
}

MeasureOptions measure_options(const json& c) {
    MeasureOptions m;
    m.coherence = coherence_options(c);
    if (c.contains("window")) {
        const auto& w = c.at("window");
        m.window.w_lo = w.value("w_lo", m.window.w_lo);
        m.window.w_hi = w.value("w_hi", m.window.w_hi);
        m.window.range_lo = w.value("range_lo", std::min(m.window.range_lo, m.window.w_lo));
        m.window.range_hi = w.value("range_hi", m.window.range_hi);
        m.window.max_rms = w.value("max_rms", m.window.max_rms);
    }
    m.window.validate();
    m.grid_points = c.value("grid_points", m.grid_points);
    m.stability_tol = c.value("stability_tol", m.stability_tol);
    return m;
}

// ---- filter ----------------------------------------------------------------

int cmd_filter(const Run& run, std::ostream& out) {
    const auto& c = run.config;
    const auto seq = make_sequence(family_from_json(require_key(c, "sequence", "config")));
    const auto omegas = grid_from_json(require_key(c, "omega", "config"), "omega grid");
    if (omegas.empty()) throw ValidationError("omega grid is empty");
    auto os = open_output(run, "filter.csv");
    write_meta_comments(os, run.meta);
    os << "omega,ff\n";
    for (double w : omegas) os << format_double(w) << ',' << format_double(filter_function(seq, w)) << '\n';
    out << "filter: " << omegas.size() << " samples -> " << (run.out_dir / "filter.csv").string() << '\n';
    return kExitOk;
}

// ---- coherence -------------------------------------------------------------

int cmd_coherence(const Run& run, std::ostream& out) {
    const auto& c = run.config;
    const auto family = family_from_json(require_key(c, "sequence", "config"));
    const auto source = source_from_config(c);
    const auto opts = coherence_options(c);
    CoherenceCurve curve;
    if (c.contains("n_list")) {
        curve = coherence_curve(family, source, c.at("n_list").get<std::vector<int>>(), opts);
    } else if (c.contains("t_list")) {
        curve = readout_sweep(family, source, grid_from_json(c.at("t_list"), "t_list"), opts);
    } else {
        const auto seq = make_sequence(family);
        const double chi = source_exponent(seq, source, opts);
        curve.protocol = family.describe();
        curve.points.push_back({static_cast<int>(seq.size()), seq.readout_time(), std::exp(-chi), chi});
    }
    auto os = open_output(run, "coherence.csv");
    write_meta_comments(os, run.meta);
    os << "# protocol: " << curve.protocol << '\n';
    if (family.is_equidistant() && family.tau > 0.0) {
        if (const auto* s = std::get_if<NoiseSpectrum>(&source)) {
            const auto rate = asymptotic_rate(family, *s, run.harmonics);
            os << "# asymptotic_rate: " << format_double(rate.rate) << " L=" << rate.harmonics_used
               << " tail_bound=" << format_double(rate.tail_bound) << '\n';
        }
    }
    write_curve_csv(os, curve);
    out << "coherence: " << curve.points.size() << " points -> "
        << (run.out_dir / "coherence.csv").string() << '\n';
    return kExitOk;
}

// ---- mc-validate -----------------------------------------------------------

int cmd_mc_validate(const Run& run, std::ostream& out) {
    const auto& c = run.config;
    const auto& mc = require_key(c, "mc", "config");
    OUProcessParams p;
    p.sigma2 = require_key(mc, "sigma2", "mc").get<double>();
    p.tau_c = require_key(mc, "tau_c", "mc").get<double>();
    p.dt = mc.value("dt", p.tau_c / 40.0);
    const auto n_traj = mc.value("n_traj", std::int64_t{10000});
    if (n_traj < 0) throw ValidationError("n_traj must be positive");
    p.n_traj = static_cast<std::size_t>(n_traj);
    p.seed = run_seed(run);
    p.validate();

    std::vector<SequenceFamily> suite;
    if (mc.contains("suite")) {
        for (const auto& item : mc.at("suite")) suite.push_back(family_from_json(item));
    } else {
        const double tau = mc.value("tau", 0.5 * p.tau_c);
        suite = {SequenceFamily::spin_echo(tau), SequenceFamily::cpmg(tau, 8), SequenceFamily::cpmg(tau, 32)};
    }
    if (suite.empty()) throw ValidationError("mc suite is empty");
    // Validate every case before running any of them.
    std::vector<PulseSequence> seqs;
    for (const auto& f : suite) seqs.push_back(make_sequence(f));

    const auto spectrum = p.spectrum();
    json cases = json::array();
    std::size_t passed = 0;
    for (std::size_t i = 0; i < suite.size(); ++i) {
        const double w_analytic = coherence_integral(seqs[i], spectrum, coherence_options(c));
        const auto est = mc_coherence(seqs[i], p);
        const double z = (est.W_hat - w_analytic) / est.std_error;
        const bool ok = std::abs(z) <= 3.0;
        passed += ok ? 1 : 0;
        cases.push_back({{"sequence", suite[i].describe()}, {"W_analytic", w_analytic},
                         {"W_hat", est.W_hat}, {"stderr", est.std_error}, {"z", z}, {"pass", ok}});
        out << "mc-validate: " << suite[i].describe() << " z=" << format_double(z) << '\n';
    }
    const bool verdict = static_cast<double>(passed) >= 0.95 * static_cast<double>(suite.size());
    write_json(run, "mc_validate.json",
               {{"cases", cases}, {"params", to_json(p)}, {"verdict", verdict ? "PASS" : "FAIL"}});
    out << "mc-validate: " << (verdict ? "PASS" : "FAIL") << '\n';
    return verdict ? kExitOk : kExitMcFail;
}

// ---- bounds ----------------------------------------------------------------

std::optional<FrequencyRange> configured_range(const json& c) {
    if (!c.contains("t2_se") || !c.contains("tau_p")) return std::nullopt;
    return frequency_bounds(c.at("t2_se").get<double>(), c.at("tau_p").get<double>());
}

int cmd_bounds(const Run& run, std::ostream& out) {
    const auto& c = run.config;
    const auto range = frequency_bounds(require_key(c, "t2_se", "config").get<double>(),
                                        require_key(c, "tau_p", "config").get<double>());
    json body{{"omega_lo", range.lo}, {"omega_hi", range.hi}};
    if (c.contains("taus") || c.contains("tau_grid")) {
        json flags = json::array();
        for (double tau : grid_from_json(c.contains("taus") ? c.at("taus") : c.at("tau_grid"), "taus")) {
            const double w = std::numbers::pi / (2.0 * tau);
            flags.push_back({{"tau", tau}, {"omega", w}, {"in_range", range.contains(w)}});
        }
        body["taus"] = flags;
    }
    write_json(run, "bounds.json", body);
    out << "bounds: omega_lo=" << format_double(range.lo) << " omega_hi=" << format_double(range.hi) << '\n';
    return kExitOk;
}

// ---- t2scan ----------------------------------------------------------------

int cmd_t2scan(const Run& run, std::ostream& out, std::ostream& err) {
    const auto& c = run.config;
    SequenceFamily family = family_from_json(require_key(c, "sequence", "config"));
    if (family.kind != SequenceKind::CPMG && family.kind != SequenceKind::APCP) {
        throw ValidationError("t2scan needs a cpmg or apcp sequence family");
    }
    const auto source = source_from_config(c);
    const auto opts = measure_options(c);
    const auto taus =
        grid_from_json(c.contains("taus") ? c.at("taus") : require_key(c, "tau_grid", "config"), "taus");
    if (taus.empty()) throw ValidationError("tau grid is empty");

    // Frequency window: explicit t2_se, or measured from a spin echo sweep.
    double t2_se = 0.0;
    if (c.contains("t2_se")) {
        t2_se = c.at("t2_se").get<double>();
    } else {
        try {
            t2_se = measure_t2se(source, opts).fit.t2;
        } catch (const FitRejected& e) {
            throw ValidationError(std::string("cannot measure T2SE for the frequency bounds (") + e.what() +
                                  "); set t2_se in the config");
        }
    }
    FrequencyRange range{std::numbers::pi / t2_se, std::numeric_limits<double>::infinity()};
    if (c.contains("tau_p")) range = frequency_bounds(t2_se, c.at("tau_p").get<double>());
    std::vector<bool> in_range;
    for (double tau : taus) {
        const double w = std::numbers::pi / (2.0 * tau);
        in_range.push_back(range.contains(w));
        if (!in_range.back() && !run.force) {
            throw ValidationError("tau " + format_double(tau) + " maps to omega " + format_double(w) +
                                  " outside [" + format_double(range.lo) + ", " + format_double(range.hi) +
                                  "]; use --force to scan anyway");
        }
    }

    const auto outcome = run_t2_scan(family, source, taus, opts);
    {
        auto os = open_output(run, "scan.csv");
        write_meta_comments(os, run.meta);
        write_scan_csv(os, outcome.scan);
    }
    {
        auto os = open_output(run, "scan_diagnostics.csv");
        write_meta_comments(os, run.meta);
        os << "# t2_se: " << format_double(t2_se) << '\n';
        os << "tau,omega,status,n_used,t2l,residual_rms,window_t_lo,window_t_hi,stability_delta,stable,"
              "in_range,rate_asymptotic,reason\n";
        const auto* spectrum = std::get_if<NoiseSpectrum>(&source);
        for (std::size_t i = 0; i < outcome.diagnostics.size(); ++i) {
            const auto& d = outcome.diagnostics[i];
            const auto& m = d.measurement;
            SequenceFamily f = family;
            f.tau = d.tau;
            const double asym = spectrum ? asymptotic_rate(f, *spectrum, run.harmonics).rate
                                         : std::numeric_limits<double>::quiet_NaN();
            os << format_double(d.tau) << ',' << format_double(std::numbers::pi / (2.0 * d.tau)) << ','
               << (d.accepted ? "ok" : "rejected") << ',' << m.n_used << ','
               << format_double(d.accepted ? m.fit.t2 : std::numeric_limits<double>::quiet_NaN()) << ','
               << format_double(m.fit.residual_rms) << ',' << format_double(m.fit.t_lo) << ','
               << format_double(m.fit.t_hi) << ',' << format_double(m.stability_delta) << ','
               << (m.stable ? 1 : 0) << ',' << (in_range[i] ? 1 : 0) << ',' << format_double(asym) << ',';
            // Reasons are free text; keep the CSV one field wide.
            std::string reason = d.reason;
            for (char& ch : reason) {
                if (ch == ',' || ch == '\n') ch = ';';
            }
            os << reason << '\n';
        }
    }
    out << "t2scan: " << outcome.scan.entries.size() << "/" << taus.size() << " taus accepted -> "
        << (run.out_dir / "scan.csv").string() << '\n';
    if (outcome.partial()) {
        for (const auto& d : outcome.diagnostics) {
            if (!d.accepted) err << "t2scan: tau=" << format_double(d.tau) << ": " << d.reason << '\n';
        }
        return kExitPartialScan;
    }
    return kExitOk;
}

// ---- reconstruct -----------------------------------------------------------

int cmd_reconstruct(const Run& run, std::ostream& out, std::ostream& err) {
    const auto& c = run.config;
    const json rc = c.value("reconstruct", json::object());
    const auto scan_path = require_key(rc, "scan", "reconstruct").get<std::string>();
    std::ifstream in(scan_path);
    if (!in) throw ValidationError("cannot open scan file '" + scan_path + "'");
    const T2Scan scan = read_scan_csv(in);
    if (scan.entries.empty()) throw ValidationError("scan file has no entries");
    const ModelFamily family = model_family_from_json(rc.value("model", json("lorentzian")));
    FitOptions fo;
    fo.seed = run_seed(run);
    fo.starts = rc.value("starts", fo.starts);
    fo.max_rel_rms = rc.value("max_rel_rms", fo.max_rel_rms);
    if (rc.contains("lower")) fo.lower = rc.at("lower").get<std::vector<double>>();
    if (rc.contains("upper")) fo.upper = rc.at("upper").get<std::vector<double>>();
    const auto range = configured_range(c);

    ReconstructionResult result;
    try {
        result = fit_spectrum(scan, family, run.harmonics, fo);
    } catch (const FitFailure& e) {
        err << "reconstruct: " << e.what() << '\n';
        ReconstructionResult partial;
        partial.points = pointwise_reconstruct(scan, range);
        write_json(run, "reconstruction.json",
                   {{"error", e.what()}, {"best_rel_rms", e.best_residual()}, {"model", to_json(family)},
                    {"points", to_json(partial)["points"]}});
        return kExitFitFailure;
    }
    result.freq_range = range;
    result.points = pointwise_reconstruct(scan, range);
    write_json(run, "reconstruction.json", to_json(result));
    out << "reconstruct: " << family.name();
    for (std::size_t j = 0; j < result.params.size(); ++j) {
        out << ' ' << result.param_names[j] << '=' << format_double(result.params[j])
            << (result.at_bound[j] ? " (at bound)" : "");
    }
    out << " rel_rms=" << format_double(result.rel_rms) << '\n';
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dephasing-noise spectroscopy workbench", "dephase"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    app.fallthrough();

    Flags flags;
    std::uint64_t seed = 0;
    std::string out_dir;
    int harmonics = 0;
    app.add_option("--config", flags.config_path, "JSON run configuration");
    auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides config)");
    auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides config)");
    app.add_flag("--force", flags.force, "scan taus outside the frequency bounds");
    auto* harm_opt = app.add_option("--harmonics", harmonics, "harmonic cutoff L (overrides config)");

    auto* filter = app.add_subcommand("filter", "filter function |f~(w)|^2 on a frequency grid");
    auto* coherence = app.add_subcommand("coherence", "coherence W(t) for a sequence and noise source");
    auto* mc = app.add_subcommand("mc-validate", "Monte Carlo check of the analytic coherence");
    auto* scan = app.add_subcommand("t2scan", "T2L against pulse spacing");
    auto* recon = app.add_subcommand("reconstruct", "fit a spectrum model to a T2L scan");
    recon->add_option("scan", flags.scan_path, "scan CSV (overrides config reconstruct.scan)");
    auto* bounds = app.add_subcommand("bounds", "frequency window from T2SE and pulse duration");

    std::vector<std::string> argv_storage{"dephase"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_storage) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }
    if (seed_opt->count()) flags.seed = seed;
    if (out_opt->count()) flags.out_dir = out_dir;
    if (harm_opt->count()) flags.harmonics = harmonics;

    try {
        const Run run = make_run(flags);
        if (filter->parsed()) return cmd_filter(run, out);
        if (coherence->parsed()) return cmd_coherence(run, out);
        if (mc->parsed()) return cmd_mc_validate(run, out);
        if (scan->parsed()) return cmd_t2scan(run, out, err);
        if (recon->parsed()) return cmd_reconstruct(run, out, err);
        if (bounds->parsed()) return cmd_bounds(run, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const json::exception& e) {
        err << "error: bad config value: " << e.what() << '\n';
        return kExitValidation;
    } catch (const FitRejected& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const QuadratureError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitValidation;
}

} // namespace dephase
