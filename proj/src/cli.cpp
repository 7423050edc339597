#include "decohist/cli.hpp"

#include "decohist/bath.hpp"
#include "decohist/doubled.hpp"
#include "decohist/histories.hpp"
#include "decohist/langevin.hpp"
#include "decohist/paths.hpp"
#include "decohist/phase.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

namespace decohist::cli {

namespace {

constexpr const char* kVersion = "1.0.0";

using json = nlohmann::json;

const std::vector<KeyDoc> kSchema = {
    {"run.seed", "1", "master seed (the --seed flag overrides)"},
    {"run.threads", "1", "worker cap (the --threads flag overrides)"},

    {"model.potential", "free", "free | harmonic | quartic | harmonic_quartic"},
    {"model.mass", "1", "particle mass"},
    {"model.hbar", "1", "reduced Planck constant"},
    {"model.omega", "1", "oscillator frequency (harmonic potentials)"},
    {"model.lambda", "0", "quartic coefficient, V = lambda x^4"},

    {"state.kind", "coherent", "coherent | gaussian | cat"},
    {"state.x0", "0", "mean position (cat: half separation)"},
    {"state.p0", "0", "mean momentum"},
    {"state.sigma_x", "1", "position width of coherent and cat states"},
    {"state.sxx", "", "gaussian: position variance"},
    {"state.spp", "", "gaussian: momentum variance"},
    {"state.sxp", "0", "gaussian: position-momentum covariance"},

    {"bath.gamma", "0", "damping rate"},
    {"bath.kT", "0", "environment temperature"},
    {"bath.kT_B", "0", "auxiliary environment temperature of the doubled theory"},
    {"bath.cutoff", "20", "bath kind: spectral cutoff"},
    {"bath.oscillators", "64", "bath kind: number of bath oscillators"},
    {"bath.grid", "linear", "bath kind: linear | gauss_legendre frequency grid"},
    {"bath.oscillator_mass", "1", "bath kind: mass of each bath oscillator"},
    {"bath.counterterm", "true", "bath kind: include the frequency counterterm"},
    {"bath.duration", "", "bath kind: propagation time"},
    {"bath.samples", "101", "bath kind: number of output times including t = 0"},
    {"bath.full", "false", "bath kind: propagate the full covariance"},

    {"history.tau", "", "final time"},
    {"history.times", "", "projection times, comma separated"},
    {"history.centers", "", "gate centres, comma separated, same at every time"},
    {"history.delta", "", "gate width"},
    {"history.window", "gaussian", "gaussian | sharp"},

    {"dfun.dim", "4", "Hilbert space dimension"},
    {"dfun.hamiltonian", "oscillator", "oscillator | random | matrix"},
    {"dfun.omega", "1", "oscillator level spacing over hbar"},
    {"dfun.matrix", "", "matrix: real symmetric entries, row major"},
    {"dfun.state", "thermal", "thermal | random | basis"},
    {"dfun.beta", "1", "thermal: inverse temperature"},
    {"dfun.index", "0", "basis: occupied basis vector"},
    {"dfun.family", "energy", "energy | basis projector family"},
    {"dfun.bins", "0", "coarse grain the family into this many groups, 0 keeps it"},
    {"dfun.times", "", "projection times, comma separated"},
    {"dfun.tol", "0.01", "epsilon_max threshold for the decoherent flag"},

    {"algebra.levels", "32", "Fock truncation per factor"},
    {"algebra.safe_levels", "0", "safe subspace levels, 0 picks levels/2"},
    {"algebra.omega_ref", "1", "reference frequency of the ladder operators"},
    {"algebra.state_B", "vacuum", "vacuum | thermal | squeezed | coherent"},
    {"algebra.nbar", "0", "thermal: mean occupation"},
    {"algebra.r", "0", "squeezed: squeezing parameter"},
    {"algebra.alpha_re", "0", "coherent: real part of the amplitude"},
    {"algebra.alpha_im", "0", "coherent: imaginary part of the amplitude"},

    {"paths.theory", "both", "sqt | dqt | both"},
    {"paths.slices", "64", "time slices of the path discretization"},
    {"paths.omega_ref", "1", "frequency of the auxiliary ground state"},
    {"paths.richardson", "false", "also run at half the slices and write an error column"},

    {"grid.nx", "128", "position nodes"},
    {"grid.np", "128", "momentum nodes"},
    {"grid.x_min", "-8", "position range start"},
    {"grid.x_max", "8", "position range end (excluded)"},
    {"grid.p_min", "-8", "momentum range start"},
    {"grid.p_max", "8", "momentum range end (excluded)"},
    {"grid.periodic_x", "false", "treat x as periodic (no x edge monitor)"},

    {"evolve.equation", "liouville", "liouville | fokker_planck | dqt"},
    {"evolve.duration", "1", "evolution time"},
    {"evolve.steps", "0", "RK4 steps, 0 picks the smallest stable count"},
    {"evolve.moyal_order", "1", "quantum correction terms kept: 0, 1 or 2"},
    {"evolve.drag", "0", "liouville: drag rate"},
    {"evolve.edge_tol", "0.0001", "mass allowed in the edge bands"},

    {"momentum.centers", "", "momentum window centres; enables the momentum history run"},
    {"momentum.delta", "1", "momentum window width"},
    {"momentum.window", "sharp", "gaussian | sharp"},

    {"ensemble.K", "10000", "trajectories"},
    {"ensemble.dt", "0.01", "integrator step"},
    {"ensemble.initial", "wigner", "wigner | husimi initial weight"},
    {"ensemble.husimi_sigma_x", "0", "husimi position width, 0 picks the default"},

    {"output.wigner_binary", "false", "write binary field dumps"},
    {"output.husimi", "false", "wigner kind: also write the Husimi smeared field"},
    {"output.husimi_sigma_x", "0", "smearing position width, 0 uses state.sigma_x"},
    {"output.trajectories", "100", "trajectories written to trajectories.csv"},
};

const std::vector<std::string> kKinds = {"dfun", "algebra", "paths", "wigner", "langevin", "bath", "compare"};

bool is_identifier(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string shortest(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

bool parse_double(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    const char* b = t.data();
    if (*b == '+') ++b;
    auto r = std::from_chars(b, t.data() + t.size(), out);
    return r.ec == std::errc() && r.ptr == t.data() + t.size() && std::isfinite(out);
}

}  // namespace

const std::vector<KeyDoc>& schema() { return kSchema; }
const std::vector<std::string>& kinds() { return kKinds; }

Config Config::parse(std::istream& in, const std::string& origin) {
    Config cfg;
    std::string line, section;
    int n = 0;
    auto bad = [&](const std::string& why) { throw ConfigError(origin + ":" + std::to_string(n) + ": " + why); };
    while (std::getline(in, line)) {
        ++n;
        for (std::size_t i = 0; i < line.size(); ++i)
            if ((line[i] == '#' || line[i] == ';') && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
                line.resize(i);
                break;
            }
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') bad("unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!is_identifier(section)) bad("invalid section name '" + section + "'");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) bad("expected 'name = value' or '[section]'");
        const std::string name = trim(t.substr(0, eq)), value = trim(t.substr(eq + 1));
        if (!is_identifier(name)) bad("invalid key name '" + name + "'");
        if (section.empty()) bad("key '" + name + "' outside any section");
        if (value.empty()) bad("key '" + name + "' has no value");
        const std::string key = section + "." + name;
        if (auto it = cfg.entries_.find(key); it != cfg.entries_.end())
            bad("duplicate key '" + name + "' in [" + section + "], first set on line " +
                std::to_string(it->second.line));
        cfg.entries_[key] = {value, origin, n};
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    return parse(in, path);
}

void Config::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    const std::string key = trim(assignment.substr(0, eq));
    const auto dot = key.find('.');
    if (eq == std::string::npos || dot == std::string::npos || !is_identifier(key.substr(0, dot)) ||
        !is_identifier(key.substr(dot + 1)))
        throw ConfigError("--set '" + assignment + "': expected section.name=value");
    const std::string value = trim(assignment.substr(eq + 1));
    if (value.empty()) throw ConfigError("--set '" + assignment + "': empty value");
    entries_[key] = {value, "--set", 0};
}

void Config::check_known() const {
    for (const auto& [key, e] : entries_) {
        const bool known = std::any_of(kSchema.begin(), kSchema.end(), [&](const KeyDoc& d) { return key == d.key; });
        if (!known) {
            const auto dot = key.find('.');
            throw ConfigError(where(key) + "unknown key '" + key.substr(dot + 1) + "' in section [" +
                              key.substr(0, dot) + "]");
        }
    }
}

const Config::Entry* Config::find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

std::string Config::where(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) return "";
    if (e->line == 0) return e->origin + ": ";
    return e->origin + ":" + std::to_string(e->line) + ": ";
}

void Config::fail(const std::string& key, const std::string& why) const {
    throw ConfigError(where(key) + key + ": " + why);
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

double Config::number(const std::string& key, std::optional<double> fallback) {
    const Entry* e = find(key);
    double v = 0.0;
    if (!e) {
        if (!fallback) fail(key, "required key missing");
        v = *fallback;
    } else if (!parse_double(e->text, v)) {
        fail(key, "expected a number, got '" + e->text + "'");
    }
    resolved_[key] = shortest(v);
    return v;
}

std::int64_t Config::integer(const std::string& key, std::optional<std::int64_t> fallback) {
    const Entry* e = find(key);
    std::int64_t v = 0;
    if (!e) {
        if (!fallback) fail(key, "required key missing");
        v = *fallback;
    } else {
        const std::string t = trim(e->text);
        auto r = std::from_chars(t.data(), t.data() + t.size(), v);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size()) fail(key, "expected an integer, got '" + e->text + "'");
    }
    resolved_[key] = std::to_string(v);
    return v;
}

bool Config::flag(const std::string& key, std::optional<bool> fallback) {
    const Entry* e = find(key);
    bool v = false;
    if (!e) {
        if (!fallback) fail(key, "required key missing");
        v = *fallback;
    } else if (e->text == "true" || e->text == "1" || e->text == "yes") {
        v = true;
    } else if (e->text == "false" || e->text == "0" || e->text == "no") {
        v = false;
    } else {
        fail(key, "expected true or false, got '" + e->text + "'");
    }
    resolved_[key] = v ? "true" : "false";
    return v;
}

std::string Config::word(const std::string& key, const std::vector<std::string>& allowed,
                         std::optional<std::string> fallback) {
    const Entry* e = find(key);
    std::string v;
    if (!e) {
        if (!fallback) fail(key, "required key missing");
        v = *fallback;
    } else {
        v = e->text;
    }
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
        fail(key, "expected one of {" + list + "}, got '" + v + "'");
    }
    resolved_[key] = v;
    return v;
}

std::vector<double> Config::numbers(const std::string& key, std::optional<std::vector<double>> fallback) {
    const Entry* e = find(key);
    std::vector<double> v;
    if (!e) {
        if (!fallback) fail(key, "required key missing");
        v = *fallback;
    } else {
        std::stringstream ss(e->text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            double d = 0.0;
            if (!parse_double(item, d)) fail(key, "expected comma-separated numbers, got '" + e->text + "'");
            v.push_back(d);
        }
        if (v.empty()) fail(key, "empty list");
    }
    std::string text;
    for (double d : v) text += (text.empty() ? "" : ",") + shortest(d);
    resolved_[key] = text;
    return v;
}

std::vector<std::string> Config::unused() const {
    std::vector<std::string> out;
    for (const auto& [key, e] : entries_)
        if (!resolved_.count(key)) out.push_back(key);
    return out;
}

namespace {

// Artifact writing ----------------------------------------------------------

class Output {
public:
    explicit Output(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::string path(const std::string& name) {
        files_.push_back(name);
        return (dir_ / name).string();
    }

    std::FILE* open(const std::string& name) {
        const std::string p = path(name);
        std::FILE* f = std::fopen(p.c_str(), "w");
        if (!f) throw ConfigError("cannot write " + p);
        return f;
    }

    static void close(std::FILE* f, const std::string& name) {
        if (std::fclose(f) != 0) throw ConfigError("error writing " + name);
    }

    const std::vector<std::string>& files() const { return files_; }
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

void write_dfun_csv(Output& out, const std::string& name, const DecoherenceMatrix& D,
                    const Eigen::MatrixXd* err = nullptr) {
    std::FILE* f = out.open(name);
    std::fprintf(f, err ? "row,col,history_row,history_col,re,im,abs_error\n" : "row,col,history_row,history_col,re,im\n");
    for (Eigen::Index a = 0; a < D.size(); ++a)
        for (Eigen::Index b = 0; b < D.size(); ++b) {
            std::fprintf(f, "%ld,%ld,%s,%s,%.17g,%.17g", static_cast<long>(a), static_cast<long>(b),
                         quoted(D.history_index[a]).c_str(), quoted(D.history_index[b]).c_str(),
                         D.entries(a, b).real(), D.entries(a, b).imag());
            if (err) std::fprintf(f, ",%.17g", (*err)(a, b));
            std::fprintf(f, "\n");
        }
    Output::close(f, name);
}

json dfun_metrics(const DecoherenceMatrix& D, double tol = 1e-2) {
    const auto r = histories::analyze_decoherence(D, tol);
    json m;
    m["histories"] = D.size();
    m["normalization"] = r.normalization;
    m["epsilon_max"] = r.epsilon_max;
    m["additivity_defect"] = r.additivity_defect;
    m["max_imag_ratio"] = r.max_imag_ratio;
    m["min_real"] = D.entries.real().minCoeff();
    m["decoherent"] = r.decoherent;
    return m;
}

// Shared readers ------------------------------------------------------------

ModelParams read_model(Config& c) {
    ModelParams m;
    const std::string pot =
        c.word("model.potential", {"free", "harmonic", "quartic", "harmonic_quartic"}, std::string("free"));
    m.mass = c.number("model.mass", 1.0);
    m.hbar = c.number("model.hbar", 1.0);
    if (pot == "free") m.potential = PotentialKind::Free;
    if (pot == "harmonic") m.potential = PotentialKind::Harmonic;
    if (pot == "quartic") m.potential = PotentialKind::Quartic;
    if (pot == "harmonic_quartic") m.potential = PotentialKind::HarmonicPlusQuartic;
    if (m.potential == PotentialKind::Harmonic || m.potential == PotentialKind::HarmonicPlusQuartic)
        m.omega = c.number("model.omega", 1.0);
    if (m.potential == PotentialKind::Quartic || m.potential == PotentialKind::HarmonicPlusQuartic)
        m.lambda = c.number("model.lambda");
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[model] ") + e.what());
    }
    return m;
}

struct StateInput {
    std::string kind;
    GaussianState gaussian;
    double x0{0.0}, sigma_x{1.0};
};

StateInput read_state(Config& c, const ModelParams& model, bool allow_cat) {
    StateInput s;
    std::vector<std::string> kinds{"coherent", "gaussian"};
    if (allow_cat) kinds.push_back("cat");
    s.kind = c.word("state.kind", kinds, std::string("coherent"));
    s.x0 = c.number("state.x0", 0.0);
    if (s.kind == "gaussian") {
        s.gaussian.mean << s.x0, c.number("state.p0", 0.0);
        const double sxx = c.number("state.sxx"), spp = c.number("state.spp"), sxp = c.number("state.sxp", 0.0);
        s.gaussian.cov << sxx, sxp, sxp, spp;
    } else {
        const double p0 = s.kind == "cat" ? 0.0 : c.number("state.p0", 0.0);
        s.sigma_x = c.number("state.sigma_x", 1.0);
        if (!(s.sigma_x > 0.0)) c.fail("state.sigma_x", "must be > 0");
        s.gaussian = GaussianState::coherent(s.x0, p0, s.sigma_x, model.hbar);
    }
    if (s.kind != "cat") {
        try {
            s.gaussian.validate(model.hbar);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("[state] ") + e.what());
        }
    }
    return s;
}

FPBath read_fp_bath(Config& c, const char* temperature) {
    FPBath b{c.number("bath.gamma", 0.0), c.number(temperature, 0.0)};
    try {
        b.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[bath] ") + e.what());
    }
    return b;
}

HistorySpec read_history(Config& c) {
    const double tau = c.number("history.tau");
    auto times = c.numbers("history.times");
    auto centers = c.numbers("history.centers");
    const double delta = c.number("history.delta");
    const auto window = c.word("history.window", {"gaussian", "sharp"}, std::string("gaussian")) == "sharp"
                            ? WindowShape::Sharp
                            : WindowShape::Gaussian;
    auto h = HistorySpec::uniform(tau, std::move(times), std::move(centers), delta, window);
    try {
        h.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[history] ") + e.what());
    }
    return h;
}

WignerField read_grid(Config& c) {
    const auto nx = c.integer("grid.nx", 128), np = c.integer("grid.np", 128);
    if (nx < 8 || nx % 2) c.fail("grid.nx", "must be an even count >= 8");
    if (np < 8 || np % 2) c.fail("grid.np", "must be an even count >= 8");
    const double x0 = c.number("grid.x_min", -8.0), x1 = c.number("grid.x_max", 8.0);
    const double p0 = c.number("grid.p_min", -8.0), p1 = c.number("grid.p_max", 8.0);
    if (!(x1 > x0)) c.fail("grid.x_max", "must exceed grid.x_min");
    if (!(p1 > p0)) c.fail("grid.p_max", "must exceed grid.p_min");
    return WignerField::zeros(static_cast<std::size_t>(nx), static_cast<std::size_t>(np), x0, x1, p0, p1);
}

double default_husimi_sigma_x(const ModelParams& model, const GaussianState& state) {
    if (model.potential == PotentialKind::Harmonic && model.omega > 0.0)
        return std::sqrt(model.hbar / (2.0 * model.mass * model.omega));
    return std::sqrt(state.cov(0, 0));
}

struct Context {
    Config& cfg;
    Output& out;
    std::uint64_t seed;
    unsigned threads;
    std::ostream& err;
};

// Kinds ---------------------------------------------------------------------
// Each kind reads and validates everything first, then returns the computation
// as a closure so no work starts before the unused-key check.

using Job = std::function<json()>;

Eigen::MatrixXcd random_hermitian(int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXcd A(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) A(i, j) = {g(rng), g(rng)};
    return 0.5 * (A + A.adjoint());
}

ProjectorFamily coarse_grain(const ProjectorFamily& fam, int bins) {
    const int n = static_cast<int>(fam.members.size());
    if (bins <= 0 || bins >= n) return fam;
    ProjectorFamily out;
    for (int b = 0; b < bins; ++b) {
        const int lo = b * n / bins, hi = (b + 1) * n / bins;
        Eigen::MatrixXcd P = fam.members[lo].matrix();
        for (int k = lo + 1; k < hi; ++k) P += fam.members[k].matrix();
        out.members.push_back(OperatorMatrix::hermitian(P));
        out.labels.push_back(hi - lo == 1 ? fam.labels[lo] : fam.labels[lo] + "-" + fam.labels[hi - 1]);
    }
    return out;
}

Job prepare_dfun(Context& ctx) {
    Config& c = ctx.cfg;
    const double hbar = c.number("model.hbar", 1.0);
    if (!(hbar > 0.0)) c.fail("model.hbar", "must be > 0");
    const auto dim = c.integer("dfun.dim", 4);
    if (dim < 2 || dim > 64) c.fail("dfun.dim", "must lie in [2, 64]");
    const int d = static_cast<int>(dim);
    std::mt19937_64 rng(langevin::mix_seed(ctx.seed, 0));

    const auto hkind = c.word("dfun.hamiltonian", {"oscillator", "random", "matrix"}, std::string("oscillator"));
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(d, d);
    if (hkind == "oscillator") {
        const double w = c.number("dfun.omega", 1.0);
        for (int n = 0; n < d; ++n) H(n, n) = hbar * w * (n + 0.5);
    } else if (hkind == "random") {
        H = random_hermitian(d, rng);
    } else {
        const auto m = c.numbers("dfun.matrix");
        if (m.size() != static_cast<std::size_t>(d * d)) c.fail("dfun.matrix", "needs dim^2 entries");
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) H(i, j) = m[static_cast<std::size_t>(i * d + j)];
        if ((H - H.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff()))
            c.fail("dfun.matrix", "must be symmetric");
    }
    const OperatorMatrix Hop = OperatorMatrix::hermitian(H);

    const auto skind = c.word("dfun.state", {"thermal", "random", "basis"}, std::string("thermal"));
    Eigen::MatrixXcd rho;
    if (skind == "thermal") {
        const double beta = c.number("dfun.beta", 1.0);
        if (!(beta >= 0.0)) c.fail("dfun.beta", "must be >= 0");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
        Eigen::VectorXd w = (-beta * (es.eigenvalues().array() - es.eigenvalues().minCoeff())).exp();
        w /= w.sum();
        rho = es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
    } else if (skind == "random") {
        std::normal_distribution<double> g(0.0, 1.0);
        Eigen::VectorXcd psi(d);
        for (int i = 0; i < d; ++i) psi(i) = {g(rng), g(rng)};
        psi.normalize();
        rho = psi * psi.adjoint();
    } else {
        const auto idx = c.integer("dfun.index", 0);
        if (idx < 0 || idx >= dim) c.fail("dfun.index", "must lie in [0, dim)");
        rho = Eigen::MatrixXcd::Zero(d, d);
        rho(idx, idx) = 1.0;
    }
    const OperatorMatrix rhoop = OperatorMatrix::hermitian(rho);

    const auto fkind = c.word("dfun.family", {"energy", "basis"}, std::string("energy"));
    const auto bins = c.integer("dfun.bins", 0);
    if (bins < 0) c.fail("dfun.bins", "must be >= 0");
    const auto times = c.numbers("dfun.times");
    const double tol = c.number("dfun.tol", 1e-2);
    ProjectorFamily fam = fkind == "energy" ? ProjectorFamily::eigenprojectors(Hop) : ProjectorFamily::basis(d);
    fam = coarse_grain(fam, static_cast<int>(bins));
    double count = 1.0;
    for (std::size_t k = 0; k < times.size(); ++k) count *= static_cast<double>(fam.members.size());
    if (count > 4096) c.fail("dfun.bins", "more than 4096 histories; coarse grain the family");

    return [=, &ctx]() {
        histories::validate_density_matrix(rhoop);
        std::vector<ProjectorFamily> fams(times.size(), fam);
        const auto D = histories::decoherence_functional(Hop, rhoop, times, fams, hbar, ctx.threads);
        write_dfun_csv(ctx.out, "dfun.csv", D);
        const auto r = histories::analyze_decoherence(D, tol);
        std::FILE* f = ctx.out.open("probabilities.csv");
        std::fprintf(f, "history,probability\n");
        for (const auto& [label, p] : r.probabilities) std::fprintf(f, "%s,%.17g\n", quoted(label).c_str(), p);
        Output::close(f, "probabilities.csv");
        return dfun_metrics(D, tol);
    };
}

Job prepare_algebra(Context& ctx) {
    Config& c = ctx.cfg;
    FockTruncation tr;
    tr.levels = static_cast<int>(c.integer("algebra.levels", 32));
    tr.mass = c.number("model.mass", 1.0);
    tr.hbar = c.number("model.hbar", 1.0);
    tr.omega_ref = c.number("algebra.omega_ref", 1.0);
    if (tr.levels < 4 || tr.levels > 64) c.fail("algebra.levels", "must lie in [4, 64]");
    auto safe = static_cast<int>(c.integer("algebra.safe_levels", 0));
    if (safe == 0) safe = tr.levels / 2;
    if (safe < 1 || safe >= tr.levels) c.fail("algebra.safe_levels", "must lie in [1, levels)");
    const auto sb = c.word("algebra.state_B", {"vacuum", "thermal", "squeezed", "coherent"}, std::string("vacuum"));
    double nbar = 0.0, r = 0.0;
    std::complex<double> alpha;
    if (sb == "thermal") nbar = c.number("algebra.nbar", 0.0);
    if (sb == "squeezed") r = c.number("algebra.r", 0.0);
    if (sb == "coherent") alpha = {c.number("algebra.alpha_re", 0.0), c.number("algebra.alpha_im", 0.0)};
    if (nbar < 0.0) c.fail("algebra.nbar", "must be >= 0");
    try {
        tr.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[algebra] ") + e.what());
    }

    return [=, &ctx]() {
        const auto ops = doubled::build_doubled_operators(tr, safe);
        OperatorMatrix rhoB;
        if (sb == "vacuum") rhoB = doubled::vacuum_state(tr.levels);
        if (sb == "thermal") rhoB = doubled::thermal_state(tr.levels, nbar);
        if (sb == "squeezed") rhoB = doubled::squeezed_vacuum(tr.levels, r);
        if (sb == "coherent") rhoB = doubled::coherent_state(tr.levels, alpha);
        const auto [vx, vp] = doubled::closeness_terms(ops, rhoB);
        const double prod = vx * vp, bound = tr.hbar * tr.hbar / 4.0;
        const int L = tr.levels;
        const std::complex<double> ih(0.0, tr.hbar);
        const auto& S = ops.safe_projector.matrix();
        auto restricted = [&](const Eigen::MatrixXcd& A) { return doubled::restrict_to_safe(A, L, safe); };
        const double xp_full = doubled::commutator(ops.X.matrix(), ops.P.matrix()).norm();
        const double xp_safe = restricted(doubled::commutator(ops.X.matrix(), ops.P.matrix())).norm();
        const double qp_safe = (restricted(doubled::commutator(ops.Q.matrix(), ops.P.matrix())) - ih * S).norm();
        const double xk_safe = (restricted(doubled::commutator(ops.X.matrix(), ops.K.matrix())) - ih * S).norm();

        json m;
        m["variance_X_minus_x"] = vx;
        m["variance_P_minus_p"] = vp;
        m["closeness_product"] = prod;
        m["closeness_over_bound"] = prod / bound;
        m["commutator_XP_norm_full"] = xp_full;
        m["commutator_XP_norm_safe"] = xp_safe;
        m["commutator_QP_defect_safe"] = qp_safe;
        m["commutator_XK_defect_safe"] = xk_safe;
        m["safe_levels"] = safe;
        std::FILE* f = ctx.out.open("algebra.csv");
        std::fprintf(f, "quantity,value\n");
        for (const auto& [k, v] : m.items()) std::fprintf(f, "%s,%.17g\n", k.c_str(), v.get<double>());
        Output::close(f, "algebra.csv");
        return m;
    };
}

struct PathsInput {
    ModelParams model;
    FPBath A, B;
    GaussianState rhoA, rhoB;
    HistorySpec hist;
    int slices{64};
};

PathsInput read_paths(Config& c) {
    PathsInput in;
    in.model = read_model(c);
    in.A = read_fp_bath(c, "bath.kT");
    in.B = in.A;
    in.B.kT = c.number("bath.kT_B", 0.0);
    if (!(in.B.kT >= 0.0)) c.fail("bath.kT_B", "must be >= 0");
    in.rhoA = read_state(c, in.model, false).gaussian;
    in.hist = read_history(c);
    in.slices = static_cast<int>(c.integer("paths.slices", 64));
    if (in.slices < 4 || in.slices > 4096) c.fail("paths.slices", "must lie in [4, 4096]");
    const double wref = c.number("paths.omega_ref", 1.0);
    if (!(wref > 0.0)) c.fail("paths.omega_ref", "must be > 0");
    in.rhoB = paths::default_rho_B(in.model, wref);
    if (!in.model.is_linear()) c.fail("model.potential", "path integrals need a free or harmonic model");
    if (in.hist.window != WindowShape::Gaussian) c.fail("history.window", "path integrals need gaussian windows");
    return in;
}

QuadraticForm paths_form(const PathsInput& in, bool dqt, int slices) {
    return dqt ? paths::assemble_dqt_form(in.model, in.A, in.B, in.hist, PathQuadrature{slices}, in.rhoA, in.rhoB)
               : paths::assemble_sqt_form(in.model, in.A, in.hist, PathQuadrature{slices}, in.rhoA);
}

Job prepare_paths(Context& ctx) {
    Config& c = ctx.cfg;
    const PathsInput in = read_paths(c);
    const auto theory = c.word("paths.theory", {"sqt", "dqt", "both"}, std::string("both"));
    const bool rich = c.flag("paths.richardson", false);
    if (rich && in.slices % 2) c.fail("paths.slices", "must be even with richardson");

    return [=, &ctx]() {
        json m;
        for (const std::string t : {"sqt", "dqt"}) {
            if (theory != "both" && theory != t) continue;
            const bool dqt = t == "dqt";
            const auto D = paths::evaluate_gaussian_dfun(paths_form(in, dqt, in.slices), in.hist, ctx.threads);
            json mt = dfun_metrics(D);
            mt["scale_re"] = D.scale.real();
            mt["scale_im"] = D.scale.imag();
            mt["times"] = D.times;
            if (rich) {
                const auto Dc =
                    paths::evaluate_gaussian_dfun(paths_form(in, dqt, in.slices / 2), in.hist, ctx.threads);
                const Eigen::MatrixXd err = paths::richardson_error(D, Dc);
                mt["max_abs_error"] = err.maxCoeff();
                write_dfun_csv(ctx.out, "paths_" + t + ".csv", D, &err);
            } else {
                write_dfun_csv(ctx.out, "paths_" + t + ".csv", D);
            }
            m[t] = mt;
        }
        return m;
    };
}

json field_metrics(const WignerField& W) {
    const auto g = W.moments();
    json m;
    m["mass"] = W.mass();
    m["min"] = W.min();
    m["max"] = W.max();
    m["mean_x"] = g.mean(0);
    m["mean_p"] = g.mean(1);
    m["var_x"] = g.cov(0, 0);
    m["cov_xp"] = g.cov(0, 1);
    m["var_p"] = g.cov(1, 1);
    return m;
}

void dump_field(Output& out, const std::string& stem, const WignerField& W, bool binary) {
    phase::write_csv(W, out.path(stem + ".csv"));
    if (binary) phase::write_binary(W, out.path(stem + ".bin"));
}

Job prepare_wigner(Context& ctx) {
    Config& c = ctx.cfg;
    EvolutionSpec spec;
    spec.model = read_model(c);
    const StateInput st = read_state(c, spec.model, true);
    const WignerField grid = read_grid(c);
    spec.periodic_x = c.flag("grid.periodic_x", false);
    const auto eq = c.word("evolve.equation", {"liouville", "fokker_planck", "dqt"}, std::string("liouville"));
    spec.duration = c.number("evolve.duration", 1.0);
    if (!(spec.duration >= 0.0)) c.fail("evolve.duration", "must be >= 0");
    spec.steps = static_cast<int>(c.integer("evolve.steps", 0));
    if (spec.steps < 0) c.fail("evolve.steps", "must be >= 0");
    spec.boundary_mass_tol = c.number("evolve.edge_tol", 1e-4);
    FPBath A, B;
    if (eq == "liouville") {
        spec.drag = c.number("evolve.drag", 0.0);
        if (!(spec.drag >= 0.0)) c.fail("evolve.drag", "must be >= 0");
    } else {
        A = read_fp_bath(c, "bath.kT");
        if (eq == "fokker_planck") {
            spec.moyal_order = static_cast<int>(c.integer("evolve.moyal_order", 1));
            if (spec.moyal_order < 0 || spec.moyal_order > 2) c.fail("evolve.moyal_order", "must be 0, 1 or 2");
            spec.bath = A;
        } else {
            B = {A.gamma, c.number("bath.kT_B", 0.0)};
            if (!(B.kT >= 0.0)) c.fail("bath.kT_B", "must be >= 0");
        }
    }
    const bool binary = c.flag("output.wigner_binary", false);
    const bool husimi = c.flag("output.husimi", false);
    double hsx = 0.0;
    if (husimi) {
        hsx = c.number("output.husimi_sigma_x", 0.0);
        if (hsx == 0.0) hsx = st.sigma_x;
        if (!(hsx > 0.0)) c.fail("output.husimi_sigma_x", "must be > 0");
    }
    std::optional<phase::MomentumWindows> windows;
    if (c.has("momentum.centers")) {
        phase::MomentumWindows w;
        w.centers = c.numbers("momentum.centers");
        w.delta = c.number("momentum.delta", 1.0);
        w.shape = c.word("momentum.window", {"gaussian", "sharp"}, std::string("sharp")) == "sharp"
                      ? WindowShape::Sharp
                      : WindowShape::Gaussian;
        if (!(w.delta > 0.0)) c.fail("momentum.delta", "must be > 0");
        if (eq != "fokker_planck") c.fail("evolve.equation", "momentum histories need fokker_planck");
        windows = w;
    }

    return [=, &ctx]() {
        const WignerField W0 = st.kind == "cat" ? phase::cat_state_field(grid, st.x0, st.sigma_x, spec.model.hbar)
                                                : phase::gaussian_field(grid, st.gaussian);
        EvolutionStats stats;
        WignerField W;
        if (eq == "liouville") W = phase::evolve_liouville(W0, spec, &stats);
        if (eq == "fokker_planck") W = phase::evolve_fokker_planck(W0, spec, &stats);
        if (eq == "dqt") W = phase::evolve_dqt_reduced(W0, spec, A, B, &stats);
        dump_field(ctx.out, "wigner_initial", W0, binary);
        dump_field(ctx.out, "wigner_final", W, binary);

        json m;
        m["initial"] = field_metrics(W0);
        m["final"] = field_metrics(W);
        m["normalization_drift"] = std::abs(stats.final_mass - stats.initial_mass);
        m["max_edge_mass"] = stats.max_edge_mass;
        m["steps"] = stats.steps;
        m["dt"] = stats.dt;
        m["momentum_coherence_norm"] = phase::momentum_coherence_norm(W);
        if (husimi) {
            const auto Hf = phase::husimi_smear(W, hsx, spec.model.hbar / (2.0 * hsx));
            dump_field(ctx.out, "husimi_final", Hf, binary);
            m["husimi"] = {{"sigma_x", hsx},
                           {"sigma_p", spec.model.hbar / (2.0 * hsx)},
                           {"min", Hf.min()},
                           {"max", Hf.max()},
                           {"min_over_max", Hf.min() / Hf.max()}};
        }
        if (windows) {
            const auto D = phase::momentum_history_dfun(W0, spec.model, *spec.bath, spec.duration, *windows);
            write_dfun_csv(ctx.out, "momentum_dfun.csv", D);
            m["momentum_histories"] = dfun_metrics(D);
        }
        return m;
    };
}

struct EnsembleInput {
    std::size_t K{10000};
    double dt{0.01};
    bool husimi{false};
    double sigma_x{0.0};
};

EnsembleInput read_ensemble(Config& c, bool with_initial) {
    EnsembleInput e;
    const auto K = c.integer("ensemble.K", 10000);
    if (K < 1 || K > 100000000) c.fail("ensemble.K", "must lie in [1, 1e8]");
    e.K = static_cast<std::size_t>(K);
    e.dt = c.number("ensemble.dt", 0.01);
    if (!(e.dt > 0.0)) c.fail("ensemble.dt", "must be > 0");
    if (with_initial) e.husimi = c.word("ensemble.initial", {"wigner", "husimi"}, std::string("wigner")) == "husimi";
    if (e.husimi || !with_initial) {
        e.sigma_x = c.number("ensemble.husimi_sigma_x", 0.0);
        if (!(e.sigma_x >= 0.0)) c.fail("ensemble.husimi_sigma_x", "must be >= 0");
    }
    return e;
}

void check_dt(Config& c, const ModelParams& model, double gamma, double dt) {
    if (dt > langevin::max_stable_dt(model, gamma) * (1.0 + 1e-12))
        c.fail("ensemble.dt", "exceeds the stable step " + shortest(langevin::max_stable_dt(model, gamma)));
}

void write_probabilities(Output& out, const std::string& name, const HistoryProbabilities& p) {
    std::FILE* f = out.open(name);
    std::fprintf(f, "history,probability,std_error\n");
    for (std::size_t h = 0; h < p.estimates.size(); ++h)
        std::fprintf(f, "%s,%.17g,%.17g\n", quoted(p.labels[h]).c_str(), p.estimates[h], p.std_errors[h]);
    Output::close(f, name);
}

Job prepare_langevin(Context& ctx) {
    Config& c = ctx.cfg;
    const ModelParams model = read_model(c);
    const FPBath A = read_fp_bath(c, "bath.kT");
    const GaussianState state = read_state(c, model, false).gaussian;
    const HistorySpec hist = read_history(c);
    const EnsembleInput e = read_ensemble(c, true);
    const auto keep = c.integer("output.trajectories", 100);
    if (keep < 0) c.fail("output.trajectories", "must be >= 0");
    check_dt(c, model, A.gamma, e.dt);
    const double sx = e.sigma_x > 0.0 ? e.sigma_x : default_husimi_sigma_x(model, state);
    const InitialWeight weight = e.husimi ? InitialWeight::husimi(sx, model.hbar) : InitialWeight::wigner();

    return [=, &ctx]() {
        const auto ens = langevin::sample_initial(state, weight, e.K, ctx.seed, model.hbar);
        const LangevinParams lp{model, A.gamma, A.kT, hist.tau, e.dt};
        const auto set = langevin::simulate_langevin(ens, lp, hist.times, ctx.threads);
        const auto pr = langevin::history_probabilities_mc(set, hist);
        langevin::write_trajectories_csv(set, ctx.out.path("trajectories.csv"), static_cast<std::size_t>(keep));
        write_probabilities(ctx.out, "probabilities.csv", pr);

        std::FILE* f = ctx.out.open("moments.csv");
        std::fprintf(f, "t,mean_x,mean_p,var_x,cov_xp,var_p\n");
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(set.times.size()); ++j) {
            const Eigen::VectorXd x = set.x.col(j), p = set.p.col(j);
            const double mx = x.mean(), mp = p.mean(), n = static_cast<double>(std::max<Eigen::Index>(x.size() - 1, 1));
            std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", set.times[static_cast<std::size_t>(j)], mx, mp,
                         (x.array() - mx).square().sum() / n, ((x.array() - mx) * (p.array() - mp)).sum() / n,
                         (p.array() - mp).square().sum() / n);
        }
        Output::close(f, "moments.csv");

        json m;
        m["trajectories"] = e.K;
        m["total_probability"] = pr.total();
        double worst = 0.0;
        for (double s : pr.std_errors) worst = std::max(worst, s);
        m["max_std_error"] = worst;
        m["husimi_sigma_x"] = e.husimi ? sx : 0.0;
        m["decoherence_parameter"] =
            2.0 * model.mass * A.gamma * A.kT * hist.tau * hist.delta * hist.delta / (model.hbar * model.hbar);
        return m;
    };
}

Job prepare_bath(Context& ctx) {
    Config& c = ctx.cfg;
    const ModelParams model = read_model(c);
    if (!model.is_linear()) c.fail("model.potential", "the exact bath needs a free or harmonic model");
    const double gamma = c.number("bath.gamma", 0.0), kT = c.number("bath.kT", 0.0);
    const double cutoff = c.number("bath.cutoff", 20.0);
    const auto N = c.integer("bath.oscillators", 64);
    if (N < 1 || N > 4096) c.fail("bath.oscillators", "must lie in [1, 4096]");
    const auto grid = c.word("bath.grid", {"linear", "gauss_legendre"}, std::string("linear")) == "linear"
                          ? FrequencyGrid::Linear
                          : FrequencyGrid::GaussLegendre;
    const double mosc = c.number("bath.oscillator_mass", 1.0);
    ClosedSystemOptions opt;
    opt.counterterm = c.flag("bath.counterterm", true);
    opt.full = c.flag("bath.full", false);
    const double duration = c.number("bath.duration");
    const auto samples = c.integer("bath.samples", 101);
    if (!(gamma >= 0.0)) c.fail("bath.gamma", "must be >= 0");
    if (!(kT >= 0.0)) c.fail("bath.kT", "must be >= 0");
    if (!(cutoff > 0.0)) c.fail("bath.cutoff", "must be > 0");
    if (!(mosc > 0.0)) c.fail("bath.oscillator_mass", "must be > 0");
    if (!(duration > 0.0)) c.fail("bath.duration", "must be > 0");
    if (samples < 2 || samples > 100000) c.fail("bath.samples", "must lie in [2, 1e5]");
    const GaussianState state = read_state(c, model, false).gaussian;

    return [=, &ctx]() {
        const auto b = bath::discretize_ohmic_bath(gamma, cutoff, static_cast<std::size_t>(N), model.mass, grid, mosc);
        const auto series =
            bath::evolve_gaussian_closed_system(model, b, kT, state, duration, static_cast<std::size_t>(samples), opt);
        const auto red = bath::reduced_moments(series);
        const bool ou = model.potential == PotentialKind::Free;
        std::FILE* f = ctx.out.open("bath_moments.csv");
        std::fprintf(f, ou ? "t,mean_x,mean_p,var_x,cov_xp,var_p,ou_var_p\n" : "t,mean_x,mean_p,var_x,cov_xp,var_p\n");
        double worst = 0.0;
        for (std::size_t i = 0; i < red.size(); ++i) {
            const double t = series.samples[i].t;
            std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", t, red[i].mean(0), red[i].mean(1), red[i].cov(0, 0),
                         red[i].cov(0, 1), red[i].cov(1, 1));
            if (ou) {
                const double v = bath::ou_momentum_variance(state.cov(1, 1), model.mass, gamma, kT, t);
                worst = std::max(worst, std::abs(red[i].cov(1, 1) - v) / v);
                std::fprintf(f, ",%.17g", v);
            }
            std::fprintf(f, "\n");
        }
        Output::close(f, "bath_moments.csv");
        if (series.recurrence_warning)
            ctx.err << "warning: duration exceeds the bath recurrence time " << shortest(b.recurrence_time()) << "\n";

        json m;
        m["oscillators"] = b.N;
        m["counterterm"] = b.counterterm;
        m["recurrence_time"] = b.recurrence_time();
        m["recurrence_warning"] = series.recurrence_warning;
        m["final"] = {{"var_x", red.back().cov(0, 0)}, {"cov_xp", red.back().cov(0, 1)}, {"var_p", red.back().cov(1, 1)}};
        if (ou) m["max_relative_ou_error"] = worst;
        return m;
    };
}

Job prepare_compare(Context& ctx) {
    Config& c = ctx.cfg;
    const PathsInput in = read_paths(c);
    const EnsembleInput e = read_ensemble(c, false);
    check_dt(c, in.model, in.A.gamma, e.dt);
    const WignerField grid = read_grid(c);
    EvolutionSpec spec;
    spec.model = in.model;
    spec.periodic_x = c.flag("grid.periodic_x", false);
    spec.duration = in.hist.tau;
    spec.steps = static_cast<int>(c.integer("evolve.steps", 0));
    if (spec.steps < 0) c.fail("evolve.steps", "must be >= 0");
    spec.moyal_order = static_cast<int>(c.integer("evolve.moyal_order", 1));
    if (spec.moyal_order < 0 || spec.moyal_order > 2) c.fail("evolve.moyal_order", "must be 0, 1 or 2");
    spec.boundary_mass_tol = c.number("evolve.edge_tol", 1e-4);
    spec.bath = in.A;
    const bool binary = c.flag("output.wigner_binary", false);
    const double sx = e.sigma_x > 0.0 ? e.sigma_x : default_husimi_sigma_x(in.model, in.rhoA);

    return [=, &ctx]() {
        json m;
        std::vector<DecoherenceMatrix> Ds;
        for (const std::string t : {"sqt", "dqt"}) {
            Ds.push_back(paths::evaluate_gaussian_dfun(paths_form(in, t == "dqt", in.slices), in.hist, ctx.threads));
            write_dfun_csv(ctx.out, "paths_" + t + ".csv", Ds.back());
            const json mt = dfun_metrics(Ds.back());
            m[t] = {{"epsilon_max", mt["epsilon_max"]}, {"max_imag_ratio", mt["max_imag_ratio"]}};
        }

        ComparisonSetup s;
        s.model = in.model;
        s.gamma = in.A.gamma;
        s.kT_A = in.A.kT;
        s.kT_B = in.B.kT;
        s.state = in.rhoA;
        s.husimi_sigma_x = sx;
        s.hist = in.hist;
        s.K = e.K;
        s.seed = ctx.seed;
        s.dt = e.dt;
        s.threads = ctx.threads;
        const auto r = langevin::compare_sqt_dqt(s);
        std::FILE* f = ctx.out.open("compare_probabilities.csv");
        std::fprintf(f, "history,p_sqt,se_sqt,p_dqt,se_dqt,d_sqt,d_dqt\n");
        for (std::size_t h = 0; h < r.sqt.estimates.size(); ++h) {
            const auto i = static_cast<Eigen::Index>(h);
            std::fprintf(f, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", quoted(r.sqt.labels[h]).c_str(),
                         r.sqt.estimates[h], r.sqt.std_errors[h], r.dqt.estimates[h], r.dqt.std_errors[h],
                         Ds[0].entries(i, i).real(), Ds[1].entries(i, i).real());
        }
        Output::close(f, "compare_probabilities.csv");
        m["tv_distance"] = r.tv_distance;
        m["max_z"] = r.max_z;
        m["husimi_sigma_x"] = sx;

        const WignerField W0 = phase::gaussian_field(grid, in.rhoA);
        const WignerField Wsqt = phase::evolve_fokker_planck(W0, spec, nullptr);
        const WignerField W0d = phase::husimi_smear(W0, sx, in.model.hbar / (2.0 * sx));
        const WignerField Wdqt = phase::evolve_dqt_reduced(W0d, spec, in.A, in.B, nullptr);
        dump_field(ctx.out, "wigner_sqt", Wsqt, binary);
        dump_field(ctx.out, "wigner_dqt", Wdqt, binary);
        m["wigner_l1_distance"] = phase::wigner_distance(Wsqt, Wdqt, DistanceMetric::L1);
        m["decoherence_parameter"] = 2.0 * in.model.mass * in.A.gamma * in.A.kT * in.hist.tau * in.hist.delta *
                                     in.hist.delta / (in.model.hbar * in.model.hbar);
        return m;
    };
}

void write_json(Output& out, const std::string& name, const json& j) {
    std::ofstream f(out.dir() / name);
    f << j.dump(2) << "\n";
    if (!f) throw ConfigError("error writing " + name);
}

}  // namespace

int run_scenario(const RunOptions& opt, std::ostream& err) {
    const std::string& kind = opt.kind;
    try {
        if (std::find(kKinds.begin(), kKinds.end(), kind) == kKinds.end())
            throw ConfigError("unknown kind '" + kind + "'");
        Config cfg = Config::load(opt.config_path);
        for (const auto& o : opt.overrides) cfg.apply_override(o);
        cfg.check_known();

        const auto seed_cfg = cfg.integer("run.seed", 1);
        if (seed_cfg < 0) cfg.fail("run.seed", "must be >= 0");
        const auto threads_cfg = cfg.integer("run.threads", 1);
        if (threads_cfg < 0 || threads_cfg > 1024) cfg.fail("run.threads", "must lie in [0, 1024]");
        const std::uint64_t seed = opt.seed ? *opt.seed : static_cast<std::uint64_t>(seed_cfg);
        const unsigned threads = opt.threads ? *opt.threads : static_cast<unsigned>(threads_cfg);

        std::error_code ec;
        std::filesystem::create_directories(opt.out_dir, ec);
        if (ec || !std::filesystem::is_directory(opt.out_dir))
            throw ConfigError("cannot create output directory '" + opt.out_dir + "'");
        Output out(opt.out_dir);
        Context ctx{cfg, out, seed, threads, err};

        Job job;
        if (kind == "dfun") job = prepare_dfun(ctx);
        if (kind == "algebra") job = prepare_algebra(ctx);
        if (kind == "paths") job = prepare_paths(ctx);
        if (kind == "wigner") job = prepare_wigner(ctx);
        if (kind == "langevin") job = prepare_langevin(ctx);
        if (kind == "bath") job = prepare_bath(ctx);
        if (kind == "compare") job = prepare_compare(ctx);
        if (const auto extra = cfg.unused(); !extra.empty())
            cfg.fail(extra.front(), "key not used by kind '" + kind + "'");

        json metrics;
        try {
            metrics = job();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(kind + ": " + e.what());
        } catch (const NumericalError& e) {
            throw NumericalError(kind + ": " + e.what());
        }

        json params(json::value_t::object);
        params["kind"] = kind;
        params["seed"] = seed;
        params["threads"] = threads;
        json keys(json::value_t::object);
        for (const auto& [k, v] : cfg.resolved())
            if (k != "run.seed" && k != "run.threads") keys[k] = v;
        params["keys"] = keys;

        json report;
        report["kind"] = kind;
        report["metrics"] = metrics;
        report["artifacts"] = out.files();
        write_json(out, "report.json", report);

        json manifest;
        manifest["tool"] = "decohist";
        manifest["version"] = kVersion;
        manifest["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                               "." + std::to_string(EIGEN_MINOR_VERSION)},
                                 {"fftw", phase::fft_library_version()}};
        manifest["config"] = std::filesystem::path(opt.config_path).filename().string();
        manifest["parameters"] = params;
        manifest["metrics"] = metrics;
        manifest["artifacts"] = out.files();
        write_json(out, "manifest.json", manifest);
        return 0;
    } catch (const ConfigError& e) {
        err << "decohist: config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "decohist: config error: " << kind << ": " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        err << "decohist: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "decohist: numerical failure: " << kind << ": " << e.what() << "\n";
        return 3;
    }
}

}  // namespace decohist::cli
