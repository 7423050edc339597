#include "doctest.h"

#include "decohist/cli.hpp"
#include "decohist/phase.hpp"

#include "json.hpp"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace decohist;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("decohist_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

const char* kWigner = R"(# damped oscillator
[model]
potential = harmonic
omega = 1

[state]
x0 = 1.0
sigma_x = 0.7071067811865476

[bath]
gamma = 0.3 ; inline comment
kT = 0.5

[grid]
nx = 48
np = 48

[evolve]
equation = fokker_planck
duration = 1

[output]
wigner_binary = true
)";

const char* kLangevin = R"([model]
potential = harmonic
omega = 1.2

[state]
x0 = 0.3
sigma_x = 0.6

[bath]
gamma = 0.4
kT = 1

[history]
tau = 1
times = 0.5, 1
centers = -1, 0, 1
delta = 0.6

[ensemble]
K = 500
dt = 0.01
initial = husimi
)";

int run(const std::string& kind, const fs::path& config, const fs::path& out, std::vector<std::string> sets = {},
        std::string* message = nullptr, std::optional<std::uint64_t> seed = std::nullopt) {
    cli::RunOptions opt;
    opt.kind = kind;
    opt.config_path = config.string();
    opt.out_dir = out.string();
    opt.overrides = std::move(sets);
    opt.seed = seed;
    std::ostringstream err;
    const int code = cli::run_scenario(opt, err);
    if (message) *message = err.str();
    return code;
}

}  // namespace

TEST_CASE("config parsing") {
    std::istringstream in("[a]\nx = 1.5  # note\ny=2,3\n\n; comment\n[b]\nname = word\n");
    auto c = cli::Config::parse(in, "t.ini");
    CHECK(c.number("a.x") == 1.5);
    CHECK(c.numbers("a.y") == std::vector<double>{2.0, 3.0});
    CHECK(c.word("b.name", {"word"}) == "word");
    CHECK(c.number("a.z", 7.0) == 7.0);
    CHECK(c.resolved().at("a.z") == "7");
    CHECK(c.unused().empty());

    auto fails = [](const std::string& text, const std::string& needle) {
        std::istringstream s(text);
        try {
            cli::Config::parse(s, "f.ini");
        } catch (const cli::ConfigError& e) {
            const std::string what = e.what();
            CHECK_MESSAGE(what.find(needle) != std::string::npos, what);
            return;
        }
        FAIL("no error for " << text);
    };
    fails("x = 1\n", "f.ini:1: key 'x' outside any section");
    fails("[a]\nx = 1\nx = 2\n", "f.ini:3: duplicate key 'x'");
    fails("[a]\njunk\n", "f.ini:2:");
    fails("[a\n", "unterminated");
    fails("[a]\nx =\n", "no value");
    fails("[a]\n2x = 1\n", "invalid key name");

    std::istringstream bad("[a]\nx = 1e\nk = 2.5\nf = maybe\n");
    auto b = cli::Config::parse(bad, "g.ini");
    CHECK_THROWS_WITH_AS(b.number("a.x"), doctest::Contains("g.ini:2: a.x: expected a number"), cli::ConfigError);
    CHECK_THROWS_WITH_AS(b.integer("a.k"), doctest::Contains("g.ini:3"), cli::ConfigError);
    CHECK_THROWS_WITH_AS(b.flag("a.f"), doctest::Contains("g.ini:4"), cli::ConfigError);
    CHECK_THROWS_WITH_AS(b.number("a.missing"), doctest::Contains("required"), cli::ConfigError);
    CHECK_THROWS_AS(b.word("a.f", {"yes", "no"}), cli::ConfigError);

    b.apply_override("a.x=4");
    CHECK(b.number("a.x") == 4.0);
    CHECK_THROWS_AS(b.apply_override("nodot=1"), cli::ConfigError);
    CHECK_THROWS_AS(b.apply_override("a.x"), cli::ConfigError);

    for (const auto& d : cli::schema()) CHECK(std::string(d.key).find('.') != std::string::npos);
}

TEST_CASE("valid wigner scenario") {
    const auto dir = scratch("wigner");
    const auto cfg = write_file(dir / "w.ini", kWigner);
    std::string msg;
    REQUIRE_MESSAGE(run("wigner", cfg, dir / "out", {}, &msg) == 0, msg);
    const auto manifest = load_json(dir / "out" / "manifest.json");
    CHECK(manifest["metrics"]["normalization_drift"].get<double>() <= 1e-6);
    CHECK(manifest["parameters"]["kind"] == "wigner");
    CHECK(manifest["parameters"]["keys"]["bath.gamma"] == "0.3");
    CHECK(manifest["parameters"]["keys"]["evolve.moyal_order"] == "1");
    CHECK(fs::exists(dir / "out" / "report.json"));

    std::ifstream csv(dir / "out" / "wigner_final.csv");
    std::string header, row;
    std::getline(csv, header);
    CHECK(header == "x,p,W");
    std::size_t rows = 0;
    const auto W = phase::read_binary((dir / "out" / "wigner_final.bin").string());
    while (std::getline(csv, row)) {
        double x = 0, p = 0, w = 0;
        REQUIRE(std::sscanf(row.c_str(), "%lf,%lf,%lf", &x, &p, &w) == 3);
        CHECK(w == W.values[rows]);
        ++rows;
    }
    CHECK(rows == 48 * 48);
}

TEST_CASE("unknown key is rejected with its line") {
    const auto dir = scratch("unknown");
    std::string text = kWigner;
    text.replace(text.find("gamma = 0.3"), 5, "gama");
    const auto cfg = write_file(dir / "bad.ini", text);
    std::string msg;
    CHECK(run("wigner", cfg, dir / "out", {}, &msg) == 2);
    CHECK(msg.find("gama") != std::string::npos);
    CHECK(msg.find("bad.ini:11:") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "out" / "manifest.json"));

    CHECK(run("wigner", write_file(dir / "ok.ini", kWigner), dir / "out", {"bath.gama=1"}, &msg) == 2);
    CHECK(msg.find("gama") != std::string::npos);
    // a known key that this kind never reads
    CHECK(run("wigner", dir / "ok.ini", dir / "out", {"bath.cutoff=3"}, &msg) == 2);
    CHECK(msg.find("bath.cutoff") != std::string::npos);
    CHECK(run("wigner", dir / "missing.ini", dir / "out", {}, &msg) == 2);
    CHECK(run("nonsense", dir / "ok.ini", dir / "out", {}, &msg) == 2);
}

TEST_CASE("validation and numerical failures map to exit codes") {
    const auto dir = scratch("codes");
    const auto cfg = write_file(dir / "w.ini", kWigner);
    std::string msg;
    CHECK(run("wigner", cfg, dir / "o1", {"bath.gamma=-1"}, &msg) == 2);
    CHECK(msg.find("[bath]") != std::string::npos);
    CHECK(run("wigner", cfg, dir / "o2", {"grid.nx=7"}, &msg) == 2);
    CHECK(msg.find("grid.nx") != std::string::npos);
    CHECK(run("wigner", cfg, dir / "o3", {"evolve.steps=2"}, &msg) == 3);
    CHECK(msg.find("stability") != std::string::npos);
    // a truncated initial state is an input error
    CHECK(run("wigner", cfg, dir / "o4", {"grid.x_min=-2", "grid.x_max=2"}, &msg) == 2);
    CHECK(msg.find("normalized") != std::string::npos);
    // a hot bath spreads the state into the edge bands
    CHECK(run("wigner", cfg, dir / "o5", {"bath.kT=5", "evolve.duration=3", "grid.x_min=-6", "grid.x_max=6"}, &msg) == 3);
    CHECK(msg.find("boundary") != std::string::npos);
}

TEST_CASE("same config and seed give byte-identical artifacts") {
    const auto dir = scratch("determinism");
    const auto cfg = write_file(dir / "l.ini", kLangevin);
    REQUIRE(run("langevin", cfg, dir / "a", {}, nullptr, 5) == 0);
    REQUIRE(run("langevin", cfg, dir / "b", {}, nullptr, 5) == 0);
    REQUIRE(run("langevin", cfg, dir / "c", {}, nullptr, 6) == 0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        const auto name = e.path().filename();
        CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "b" / name), name.string());
        ++files;
    }
    CHECK(files == 5);
    CHECK(slurp(dir / "a" / "probabilities.csv") != slurp(dir / "c" / "probabilities.csv"));
}

TEST_CASE("manifest parameters reproduce the report") {
    const auto dir = scratch("replay");
    const auto cfg = write_file(dir / "l.ini", kLangevin);
    REQUIRE(run("langevin", cfg, dir / "a", {"ensemble.K=300"}, nullptr, 9) == 0);
    const auto manifest = load_json(dir / "a" / "manifest.json");
    // rebuild a config from the manifest alone
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [key, value] : manifest["parameters"]["keys"].items()) {
        const auto dot = key.find('.');
        sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), value.get<std::string>());
    }
    std::ostringstream text;
    for (const auto& [s, kv] : sections) {
        text << "[" << s << "]\n";
        for (const auto& [k, v] : kv) text << k << " = " << v << "\n";
    }
    text << "[run]\nseed = " << manifest["parameters"]["seed"].get<std::uint64_t>() << "\n";
    const auto replay = write_file(dir / "replay.ini", text.str());
    std::string msg;
    REQUIRE_MESSAGE(run("langevin", replay, dir / "b", {}, &msg) == 0, msg);
    CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
}

TEST_CASE("every kind runs on a small scenario") {
    const auto dir = scratch("kinds");
    const std::map<std::string, std::string> configs = {
        {"dfun", "[dfun]\ndim = 6\nstate = random\ntimes = 0.5, 1.5\n"},
        {"algebra", "[algebra]\nlevels = 12\n"},
        {"paths", "[model]\npotential = harmonic\n[bath]\ngamma = 0.3\nkT = 1\nkT_B = 0.01\n"
                  "[history]\ntau = 1\ntimes = 0.5, 1\ncenters = -1, 1\ndelta = 0.5\n[paths]\nslices = 16\n"},
        {"bath", "[model]\npotential = harmonic\n[bath]\ngamma = 0.2\nkT = 1\noscillators = 16\nduration = 2\nsamples = 5\n"},
        {"compare", "[model]\nhbar = 0.5\n[state]\nsigma_x = 0.6\n[bath]\ngamma = 0.5\nkT = 0.2\nkT_B = 0.002\n"
                    "[history]\ntau = 1\ntimes = 0.5, 1\ncenters = -1, 1\ndelta = 0.8\n"
                    "[ensemble]\nK = 400\n[grid]\nnx = 64\nnp = 64\n[paths]\nslices = 16\n"},
    };
    for (const auto& [kind, text] : configs) {
        std::string msg;
        const auto cfg = write_file(dir / (kind + ".ini"), text);
        CHECK_MESSAGE(run(kind, cfg, dir / kind, {}, &msg) == 0, kind << ": " << msg);
        const auto report = load_json(dir / kind / "report.json");
        CHECK(report["kind"] == kind);
        for (const auto& a : report["artifacts"]) CHECK(fs::exists(dir / kind / a.get<std::string>()));
    }
    const auto cmp = load_json(dir / "compare" / "report.json")["metrics"];
    for (const char* k : {"tv_distance", "wigner_l1_distance"}) CHECK(cmp.contains(k));
    CHECK(cmp["sqt"].contains("epsilon_max"));
    CHECK(cmp["dqt"]["max_imag_ratio"].get<double>() < 1e-8);
    const auto alg = load_json(dir / "algebra" / "report.json")["metrics"];
    CHECK(std::abs(alg["closeness_over_bound"].get<double>() - 1.0) < 1e-10);
}
