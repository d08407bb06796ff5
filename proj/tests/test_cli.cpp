// test_cli.cpp - subcommands, exit codes, reproducible outputs

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "dephase/cli.hpp"
#include "dephase/io.hpp"

using namespace dephase;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Sandbox {
    fs::path dir;

    explicit Sandbox(const std::string& name) {
        dir = fs::temp_directory_path() / ("dephase_cli_" + name);
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Sandbox() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }

    std::string write_config(const json& config, const std::string& name = "config.json") const {
        const auto path = dir / name;
        std::ofstream(path) << config.dump(2);
        return path.string();
    }

    std::string read(const std::string& name) const {
        std::ifstream in(dir / name);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

CsvTable read_table(const Sandbox& box, const std::string& name) {
    std::istringstream in(box.read(name));
    return read_csv(in);
}

json read_json(const Sandbox& box, const std::string& name) { return json::parse(box.read(name)); }

json lorentzian_scan_config() {
    std::vector<double> taus;
    for (int k = 0; k < 12; ++k) taus.push_back(0.05 * std::pow(9.0, k / 11.0));
    return {{"spectrum", {{"model", "lorentzian"}, {"params", {{"sigma2", 1.0}, {"tau_c", 1.0}}}}},
            {"sequence", {{"family", "cpmg"}}},
            {"taus", taus},
            {"t2_se", 1.0},
            {"tau_p", 0.001},
            {"seed", 7}};
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("filter writes |f~|^2 samples") {
    Sandbox box("filter");
    std::vector<double> omegas;
    for (int k = 0; k <= 100; ++k) omegas.push_back(0.1 * k);
    omegas.push_back(std::numbers::pi);
    std::sort(omegas.begin(), omegas.end());
    const auto cfg = box.write_config({{"sequence", {{"family", "spin_echo"}, {"tau", 1.0}}}, {"omega", omegas}});
    const auto r = run({"filter", "--config", cfg, "--out", box.dir.string()});
    REQUIRE(r.code == kExitOk);
    const auto table = read_table(box, "filter.csv");
    REQUIRE(table.header == std::vector<std::string>{"omega", "ff"});
    bool found = false;
    for (const auto& row : table.rows) {
        if (parse_double(row[0]) == std::numbers::pi) {
            found = true;
            CHECK(parse_double(row[1]) == doctest::Approx(1.6211389382774044).epsilon(1e-14));
        }
    }
    CHECK(found);
    const auto text = box.read("filter.csv");
    CHECK(text.find("# config_hash: ") != std::string::npos);
    CHECK(text.find("# tool: dephase") != std::string::npos);
}

TEST_CASE("filter peak for CPMG sits at pi / 2tau") {
    Sandbox box("filter_peak");
    const double tau = 0.5;
    const auto cfg = box.write_config({{"sequence", {{"family", "cpmg"}, {"tau", tau}, {"n", 64}}},
                                       {"omega", {{"start", 0.0}, {"stop", 10.0}, {"count", 4001}}}});
    REQUIRE(run({"filter", "--config", cfg, "--out", box.dir.string()}).code == kExitOk);
    const auto table = read_table(box, "filter.csv");
    double best = -1.0, at = 0.0;
    for (const auto& row : table.rows) {
        const double v = parse_double(row[1]);
        if (v > best) {
            best = v;
            at = parse_double(row[0]);
        }
    }
    CHECK(std::abs(at - std::numbers::pi / (2.0 * tau)) <= 0.05 * std::numbers::pi / (2.0 * tau));
}

TEST_CASE("validation errors exit 2") {
    Sandbox box("validation");
    const auto empty = box.write_config({{"sequence", {{"family", "spin_echo"}, {"tau", 1.0}}},
                                         {"omega", json::array()}});
    CHECK(run({"filter", "--config", empty, "--out", box.dir.string()}).code == kExitValidation);
    const auto bad_seq = box.write_config({{"sequence", {{"family", "custom"}, {"times", {2.0, 1.0}}, {"readout", 3.0}}},
                                           {"omega", {1.0}}});
    CHECK(run({"filter", "--config", bad_seq, "--out", box.dir.string()}).code == kExitValidation);
    std::ofstream(box.dir / "broken.json") << "{ not json";
    CHECK(run({"filter", "--config", (box.dir / "broken.json").string()}).code == kExitValidation);
    CHECK(run({"filter", "--config", (box.dir / "missing.json").string()}).code == kExitValidation);
    CHECK(run({"frobnicate"}).code == kExitValidation);
    CHECK(run({}).code == kExitValidation);
    const auto wrong_type = box.write_config({{"sequence", {{"family", "cpmg"}, {"tau", "long"}, {"n", 2}}},
                                              {"omega", {1.0}}});
    CHECK(run({"filter", "--config", wrong_type, "--out", box.dir.string()}).code == kExitValidation);
}

TEST_CASE("coherence writes a curve") {
    Sandbox box("coherence");
    const auto cfg = box.write_config({{"spectrum", {{"model", "white"}, {"params", {{"s0", 0.4}}}}},
                                       {"sequence", {{"family", "cpmg"}, {"tau", 0.5}}},
                                       {"n_list", {1, 2, 4, 8}}});
    REQUIRE(run({"coherence", "--config", cfg, "--out", box.dir.string()}).code == kExitOk);
    const auto table = read_table(box, "coherence.csv");
    REQUIRE(table.header == std::vector<std::string>{"t", "W", "chi"});
    REQUIRE(table.rows.size() == 4);
    for (const auto& row : table.rows) {
        CHECK(parse_double(row[2]) == doctest::Approx(0.2 * parse_double(row[0])));
    }
    const auto bath = box.write_config({{"bath", {{"type", "spin"}, {"modes", {{1.0, 0.01}}}}},
                                        {"sequence", {{"family", "spin_echo"}}},
                                        {"t_list", {0.5, 1.0, 2.0}}}, "bath.json");
    CHECK(run({"coherence", "--config", bath, "--out", box.dir.string()}).code == kExitOk);
}

TEST_CASE("t2scan: full scan, determinism, bounds and partial scans") {
    Sandbox box("t2scan");
    const auto cfg = box.write_config(lorentzian_scan_config());
    const auto first = run({"t2scan", "--config", cfg, "--out", (box.dir / "a").string()});
    REQUIRE(first.code == kExitOk);
    const auto rerun = run({"t2scan", "--config", cfg, "--out", (box.dir / "b").string()});
    REQUIRE(rerun.code == kExitOk);
    const auto a = read_table(box, "a/scan.csv");
    CHECK(a.rows.size() == 12);
    CHECK(a.header == std::vector<std::string>{"tau", "n", "t2l", "t2l_stderr"});
    // The output directory is not part of the hashed config.
    CHECK(box.read("a/scan.csv") == box.read("b/scan.csv"));
    CHECK(box.read("a/scan_diagnostics.csv") == box.read("b/scan_diagnostics.csv"));
    CHECK(box.read("a/scan_diagnostics.csv").find("status") != std::string::npos);

    auto outside = lorentzian_scan_config();
    outside["taus"] = {0.1, 2.0};
    const auto out_cfg = box.write_config(outside, "outside.json");
    const auto refused = run({"t2scan", "--config", out_cfg, "--out", (box.dir / "c").string()});
    CHECK(refused.code == kExitValidation);
    CHECK(refused.err.find("--force") != std::string::npos);

    // Forced: tau = 2 is scanned but its decay is too fast per pulse.
    const auto forced = run({"t2scan", "--config", out_cfg, "--out", (box.dir / "c").string(), "--force"});
    CHECK(forced.code == kExitPartialScan);
    const auto diag = read_table(box, "c/scan_diagnostics.csv");
    REQUIRE(diag.rows.size() == 2);
    CHECK(diag.rows[1][diag.column("in_range")] == "0");
    CHECK(diag.rows[1][diag.column("status")] == "rejected");
    CHECK(read_table(box, "c/scan.csv").rows.size() == 1);
}

TEST_CASE("reconstruct fits a scan and reports failures") {
    Sandbox box("reconstruct");
    const auto cfg = box.write_config(lorentzian_scan_config());
    REQUIRE(run({"t2scan", "--config", cfg, "--out", box.dir.string()}).code == kExitOk);
    const auto scan_path = (box.dir / "scan.csv").string();

    auto rc = lorentzian_scan_config();
    rc["reconstruct"] = {{"model", "lorentzian"}, {"starts", 8}};
    const auto rc_cfg = box.write_config(rc, "rc.json");
    const auto fit = run({"reconstruct", scan_path, "--config", rc_cfg, "--out", box.dir.string()});
    REQUIRE(fit.code == kExitOk);
    const auto doc = read_json(box, "reconstruction.json");
    CHECK(doc["params"]["sigma2"].get<double>() == doctest::Approx(1.0).epsilon(0.02));
    CHECK(doc["params"]["tau_c"].get<double>() == doctest::Approx(1.0).epsilon(0.02));
    CHECK(doc["points"].size() == 12);
    CHECK(doc["starts"]["seed"].get<std::uint64_t>() == 7);
    CHECK(doc["meta"]["config_hash"].get<std::string>().size() == 16);

    rc["reconstruct"]["model"] = "white";
    const auto white_cfg = box.write_config(rc, "white.json");
    const auto failed = run({"reconstruct", scan_path, "--config", white_cfg, "--out", (box.dir / "w").string()});
    CHECK(failed.code == kExitFitFailure);
    CHECK(failed.err.find("rel") != std::string::npos);
    CHECK(read_json(box, "w/reconstruction.json").contains("best_rel_rms"));

    CHECK(run({"reconstruct", (box.dir / "nope.csv").string()}).code == kExitValidation);
}

TEST_CASE("mc-validate default suite") {
    Sandbox box("mc");
    const auto cfg = box.write_config({{"mc", {{"sigma2", 1.0}, {"tau_c", 1.0}, {"n_traj", 4000}}}});
    const auto r1 = run({"mc-validate", "--config", cfg, "--seed", "1", "--out", (box.dir / "1").string()});
    const auto r2 = run({"mc-validate", "--config", cfg, "--seed", "2", "--out", (box.dir / "2").string()});
    REQUIRE(r1.code == kExitOk);
    REQUIRE(r2.code == kExitOk);
    const auto j1 = read_json(box, "1/mc_validate.json");
    const auto j2 = read_json(box, "2/mc_validate.json");
    CHECK(j1["verdict"] == "PASS");
    CHECK(j2["verdict"] == "PASS");
    REQUIRE(j1["cases"].size() == 3);
    CHECK(j1["cases"][0]["W_hat"] != j2["cases"][0]["W_hat"]);
    CHECK(j1["meta"]["seed"] == 1);
    CHECK(j1["meta"]["config_hash"] != j2["meta"]["config_hash"]);

    const auto few = box.write_config({{"mc", {{"sigma2", 1.0}, {"tau_c", 1.0}, {"n_traj", 50}}}}, "few.json");
    CHECK(run({"mc-validate", "--config", few, "--out", box.dir.string()}).code == kExitValidation);
}

TEST_CASE("bounds") {
    Sandbox box("bounds");
    const auto cfg = box.write_config({{"t2_se", 10.0}, {"tau_p", 0.01}, {"taus", {0.1, 10.0}}});
    REQUIRE(run({"bounds", "--config", cfg, "--out", box.dir.string()}).code == kExitOk);
    const auto doc = read_json(box, "bounds.json");
    CHECK(doc["omega_lo"].get<double>() == doctest::Approx(0.3141592653589793));
    CHECK(doc["omega_hi"].get<double>() == doctest::Approx(314.1592653589793));
    CHECK(doc["taus"][0]["in_range"] == true);
    CHECK(doc["taus"][1]["in_range"] == false);
    const auto bad = box.write_config({{"t2_se", 1.0}, {"tau_p", 1.0}}, "bad.json");
    CHECK(run({"bounds", "--config", bad}).code == kExitValidation);
}

}
