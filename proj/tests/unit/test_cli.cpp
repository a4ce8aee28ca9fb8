#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include <sys/wait.h>

#include "lsm/cli.hpp"
#include "lsm/cochlea.hpp"
#include "lsm/config.hpp"
#include "lsm/volume_io.hpp"
#include "oracles.hpp"

using namespace lsm;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "lsm_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// A 32 x 32 ellipse segmented with a circle.
const char* kSmallEllipse = R"(seed = 3

[phantom]
kind = "ellipse"
dims = [32, 32, 1]
spacing = [0.03125, 0.03125, 0.03125]
origin = [0.015625, 0.015625, 0.0]
center = [0.5, 0.5, 0.0]
semi_axes = [0.3, 0.2]
angle = 0.5
background = { mu = 0.0, sigma = 30.0 }
foreground = { mu = 100.0, sigma = 30.0 }

[shape]
kind = "circle"
dimension = 2
initial = [0.45, 0.55, 0.15]

[fit]
l_ref = 0.03
l_ref_hard = 0.03
outer_tolerance = 0.001
max_outer_iterations = 30

[intensity]
background = [{ pi = 1.0, mu = 20.0, sigma = 50.0, nu = "inf" }]
foreground = [{ pi = 1.0, mu = 80.0, sigma = 50.0, nu = "inf" }]
)";

fs::path small_case(const fs::path& dir) {
    write_text(dir / "case.toml", kSmallEllipse);
    const auto r = cli({"synth", "--spec", (dir / "case.toml").string(), "--out-dir", (dir / "data").string()});
    REQUIRE(r.code == 0);
    return dir / "case.toml";
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"no-such-command"}).code == kExitUsage);
    CHECK(cli({"fit"}).code == kExitUsage);
    CHECK(cli({"metrics", "--a", "/nonexistent.mhd", "--b", "/nonexistent.mhd"}).code == kExitUsage);
    CHECK(cli({"--threads", "x", "config", "--defaults"}).code == kExitUsage);
    CHECK(cli({"config"}).code == kExitUsage);
    CHECK(cli({"sample-posterior", "--fit", "/nonexistent_dir", "--out", "x.mhd"}).code == kExitUsage);
}

TEST_CASE("help and version exit with 0") {
    const auto help = cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("sweep-lref") != std::string::npos);
    const auto sub = cli({"fit", "--help"});
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--out-dir") != std::string::npos);
    const auto v = cli({"--version"});
    CHECK(v.code == 0);
    CHECK(v.out.find(version_string()) != std::string::npos);
}

TEST_CASE("runtime errors exit with 2") {
    const auto dir = scratch("runtime");
    write_text(dir / "bad.mhd", "NDims = 9\n");
    const auto r = cli({"metrics", "--a", (dir / "bad.mhd").string(), "--b", (dir / "bad.mhd").string()});
    CHECK(r.code == kExitRuntime);
    CHECK(r.err.find("error:") == 0);
    write_text(dir / "unknown.toml", "bogus_key = 1\n");
    CHECK(cli({"fit", "--image", (dir / "bad.mhd").string(), "--config", (dir / "unknown.toml").string(),
               "--out-dir", (dir / "o").string()})
              .code == kExitRuntime);
}

TEST_CASE("config defaults round trip") {
    const auto dir = scratch("defaults");
    const auto toml = cli({"config", "--defaults"});
    REQUIRE(toml.code == 0);
    write_text(dir / "defaults.toml", toml.out);
    const auto parsed = load_run_config(dir / "defaults.toml");
    CHECK(run_config_to_json(parsed) == run_config_to_json(RunConfig::defaults()));

    const auto js = cli({"--json", "config", "--defaults"});
    REQUIRE(js.code == 0);
    CHECK(json::parse(js.out) == run_config_to_json(RunConfig::defaults()));
    write_text(dir / "defaults.json", js.out);
    CHECK(run_config_to_json(load_run_config(dir / "defaults.json")) == run_config_to_json(RunConfig::defaults()));
}

TEST_CASE("metrics on identical and shifted masks") {
    const auto dir = scratch("metrics");
    GridGeometry g;
    g.dims = {10, 10, 10};
    BinaryMask a(g, 0), b(g, 0);
    for (std::size_t k = 2; k < 6; ++k)
        for (std::size_t j = 2; j < 8; ++j)
            for (std::size_t i = 2; i < 8; ++i) {
                a.at(i, j, k) = 1;
                b.at(i, j, k + 1) = 1;
            }
    write_volume(a, dir / "a.mhd");
    write_volume(b, dir / "b.mhd");
    auto r = cli({"metrics", "--a", (dir / "a.mhd").string(), "--b", (dir / "a.mhd").string()});
    REQUIRE(r.code == 0);
    auto j = json::parse(r.out);
    CHECK(j["dice"] == 1.0);
    CHECK(j["hd95"] == 0.0);
    CHECK(j["hd100"] == 0.0);
    r = cli({"metrics", "--a", (dir / "a.mhd").string(), "--b", (dir / "b.mhd").string()});
    REQUIRE(r.code == 0);
    j = json::parse(r.out);
    CHECK(j["dice"].get<double>() == doctest::Approx(0.75));
    CHECK(j["hd100"].get<double>() == 1.0);
}

TEST_CASE("synth, fit and sample-posterior") {
    const auto dir = scratch("fit");
    const auto config = small_case(dir);
    const auto image = (dir / "data" / "image.mhd").string();
    const auto truth = read_mask(dir / "data" / "truth.mhd");

    const auto r = cli({"--json", "--threads", "1", "fit", "--image", image, "--config", config.string(), "--out-dir",
                        (dir / "fit1").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto summary = json::parse(r.out);
    CHECK(summary["cycles"].get<int>() >= 1);
    for (const char* f : {"posterior.mhd", "posterior.raw", "sroi.mhd", "ssi.mhd", "theta.json", "trace.csv",
                          "ms_report.csv"}) {
        CHECK_MESSAGE(fs::exists(dir / "fit1" / f), f);
    }
    const auto ssi = read_mask(dir / "fit1" / "ssi.mhd");
    std::size_t agree = 0, both = 0;
    for (std::size_t n = 0; n < ssi.size(); ++n) {
        agree += ssi[n] && truth[n];
        both += ssi[n] + truth[n];
    }
    CHECK(2.0 * double(agree) / double(both) > 0.85);
    const auto doc = load_document(dir / "fit1" / "theta.json");
    CHECK(doc["parameter_names"].size() == 3);
    CHECK(doc["covariance"].size() == 3);

    SUBCASE("thread count does not change any output") {
        const auto r3 = cli({"--threads", "3", "fit", "--image", image, "--config", config.string(), "--out-dir",
                             (dir / "fit3").string()});
        REQUIRE(r3.code == 0);
        for (const char* f : {"posterior.raw", "sroi.raw", "ssi.raw", "trace.csv", "ms_report.csv", "theta.json"}) {
            CHECK_MESSAGE(oracle::read_bytes(dir / "fit1" / f) == oracle::read_bytes(dir / "fit3" / f), f);
        }
    }
    SUBCASE("posterior samples are seeded") {
        const auto fit_dir = (dir / "fit1").string();
        const auto a = cli({"--seed", "5", "sample-posterior", "--fit", fit_dir, "--n", "8", "--out",
                            (dir / "m1.mhd").string(), "--samples-csv", (dir / "s1.csv").string()});
        REQUIRE_MESSAGE(a.code == 0, a.err);
        const auto b = cli({"--seed", "5", "--threads", "2", "sample-posterior", "--fit", fit_dir, "--n", "8",
                            "--out", (dir / "m2.mhd").string(), "--samples-csv", (dir / "s2.csv").string()});
        REQUIRE(b.code == 0);
        CHECK(oracle::read_bytes(dir / "m1.raw") == oracle::read_bytes(dir / "m2.raw"));
        CHECK(oracle::read_bytes(dir / "s1.csv") == oracle::read_bytes(dir / "s2.csv"));
        const auto csv = oracle::read_bytes(dir / "s1.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
        const auto m = read_image(dir / "m1.mhd");
        for (float v : m.data) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
    SUBCASE("sweep writes one row per l_ref") {
        const auto s = cli({"sweep-lref", "--image", image, "--config", config.string(), "--grid", "0.02,0.04",
                            "--truth", (dir / "data" / "truth.mhd").string(), "--out", (dir / "sweep.csv").string()});
        REQUIRE_MESSAGE(s.code == 0, s.err);
        const auto csv = oracle::read_bytes(dir / "sweep.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    }
}

TEST_CASE("shape sdf") {
    const auto dir = scratch("sdf");
    write_text(dir / "circle.toml", "theta = [0.0, 0.0, 2.0]\n\n[shape]\nkind = \"circle\"\ndimension = 2\n"
                                     "bounds = [[-5.0, 5.0], [-5.0, 5.0], [0.1, 5.0]]\n");
    const auto r = cli({"--json", "shape", "sdf", "--params", (dir / "circle.toml").string(), "--grid", "9,9,1,1.0",
                        "--origin", "-4,-4,0", "--out", (dir / "circle.mhd").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto field = read_image(dir / "circle.mhd");
    for (std::size_t n = 0; n < field.size(); ++n) {
        const Vec3 p = field.grid.point(n);
        CHECK(field[n] == float(4.0 - p.x() * p.x() - p.y() * p.y()));
    }
    CHECK(json::parse(r.out)["inside_voxels"] == 13);

    const auto defaults = CochleaShape::default_parameters();
    json params{{"theta", defaults}};
    write_text(dir / "cochlea.json", params.dump());
    const auto c = cli({"shape", "sdf", "--params", (dir / "cochlea.json").string(), "--grid", "20,16,16,0.5",
                        "--out", (dir / "cochlea.mhd").string()});
    REQUIRE_MESSAGE(c.code == 0, c.err);
    const auto cf = read_image(dir / "cochlea.mhd");
    CHECK(*std::max_element(cf.data.begin(), cf.data.end()) > 0.0f);

    CHECK(cli({"shape", "sdf", "--params", (dir / "circle.toml").string(), "--grid", "9,9,1", "--out",
               (dir / "x.mhd").string()})
              .code == kExitRuntime);
}

TEST_CASE("the installed binary reports exit codes") {
    const std::string bin = LSM_CLI_BINARY;
    CHECK(WEXITSTATUS(std::system((bin + " --version > /dev/null").c_str())) == 0);
    CHECK(WEXITSTATUS(std::system((bin + " frobnicate 2> /dev/null").c_str())) == 1);
    CHECK(WEXITSTATUS(std::system((bin + " metrics --a /dev/null --b /dev/null 2> /dev/null").c_str())) == 2);
}

} // TEST_SUITE
