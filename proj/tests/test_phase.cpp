#include "doctest.h"

#include "decohist/expr.hpp"
#include "decohist/ode.hpp"
#include "decohist/phase.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <tuple>

using namespace decohist;

namespace {

WignerField grid(std::size_t n, double xl, double pl) { return WignerField::zeros(n, n, -xl, xl, -pl, pl); }

// Moment ODE for linear Fokker-Planck dynamics, integrated with a fixed-step RK4
// that shares nothing with the solvers under test.
struct MomentOracle {
    double m, w2, g, D;  // mass, omega^2, gamma, diffusion 2 m gamma kT

    std::array<double, 5> rhs(const std::array<double, 5>& s) const {
        // s = (mx, mp, sxx, sxp, spp)
        return {s[1] / m,
                -m * w2 * s[0] - 2 * g * s[1],
                2 * s[3] / m,
                s[4] / m - m * w2 * s[2] - 2 * g * s[3],
                -2 * m * w2 * s[3] - 4 * g * s[4] + 2 * D};
    }

    std::array<double, 5> run(std::array<double, 5> s, double t, int n = 20000) const {
        const double h = t / n;
        for (int i = 0; i < n; ++i) {
            auto add = [&](const std::array<double, 5>& a, const std::array<double, 5>& b, double c) {
                std::array<double, 5> r;
                for (int k = 0; k < 5; ++k) r[k] = a[k] + c * b[k];
                return r;
            };
            auto k1 = rhs(s), k2 = rhs(add(s, k1, h / 2)), k3 = rhs(add(s, k2, h / 2)), k4 = rhs(add(s, k3, h));
            for (int k = 0; k < 5; ++k) s[k] += h / 6 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]);
        }
        return s;
    }
};

double max_abs_diff(const WignerField& a, const WignerField& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) d = std::max(d, std::abs(a.values[i] - b.values[i]));
    return d;
}

}  // namespace

TEST_CASE("expression parser") {
    const std::vector<std::string> vars{"x", "p"};
    const double v[2] = {2.0, 3.0};
    CHECK(Expression::parse("x + p*2", vars).eval(v) == doctest::Approx(8.0));
    CHECK(Expression::parse("-x^2", vars).eval(v) == doctest::Approx(-4.0));
    CHECK(Expression::parse("2^3^2", vars).eval(v) == doctest::Approx(512.0));
    CHECK(Expression::parse("sin(pi/2) + exp(0) - sqrt(4)/(1+1)", vars).eval(v) == doctest::Approx(1.0));
    CHECK(Expression::parse("  (x - p) * (x + p) ", vars).eval(v) == doctest::Approx(-5.0));
    CHECK(Expression::parse("1e-3*x", vars).eval(v) == doctest::Approx(2e-3));
    CHECK_THROWS_AS(Expression::parse("x +", vars), std::invalid_argument);
    CHECK_THROWS_AS(Expression::parse("q", vars), std::invalid_argument);
    CHECK_THROWS_AS(Expression::parse("(x", vars), std::invalid_argument);
    CHECK_THROWS_AS(Expression::parse("sin x", vars), std::invalid_argument);
    try {
        Expression::parse("x $ p", vars);
        FAIL("expected parse error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("column 3") != std::string::npos);
    }
}

TEST_CASE("adaptive ODE integrator") {
    const OdeRhs osc = [](const std::vector<double>& y, std::vector<double>& dy) {
        dy[0] = y[1];
        dy[1] = -y[0];
    };
    auto y = integrate_ode(osc, {1.0, 0.0}, 0.0, 10.0);
    CHECK(std::abs(y[0] - std::cos(10.0)) < 1e-8);
    CHECK(std::abs(y[1] + std::sin(10.0)) < 1e-8);
    auto back = integrate_ode(osc, y, 10.0, 0.0);
    CHECK(std::abs(back[0] - 1.0) < 1e-8);
    CHECK(std::abs(back[1]) < 1e-8);

    const OdeRhs blowup = [](const std::vector<double>& y, std::vector<double>& dy) { dy[0] = y[0] * y[0]; };
    CHECK_THROWS_AS(integrate_ode(blowup, {1.0}, 0.0, 2.0), NumericalError);
}

TEST_CASE("field basics and gaussian sampling") {
    auto g = grid(64, 8.0, 8.0);
    GaussianState s = GaussianState::coherent(0.5, -0.3, 0.8, 1.0);
    s.cov(0, 1) = s.cov(1, 0) = 0.1;
    auto W = phase::gaussian_field(g, s);
    CHECK(std::abs(W.mass() - 1.0) < 1e-12);
    const auto mom = W.moments();
    CHECK((mom.mean - s.mean).norm() < 1e-10);
    CHECK((mom.cov - s.cov).norm() < 1e-10);
    double mx = 0.0;
    for (double v : W.marginal_x()) mx += v * W.dx();
    CHECK(std::abs(mx - 1.0) < 1e-12);
    CHECK_THROWS_AS(WignerField::zeros(7, 8, -1, 1, -1, 1), std::invalid_argument);
    CHECK_THROWS_AS(WignerField::zeros(8, 8, 1, -1, -1, 1), std::invalid_argument);
}

TEST_CASE("Liouville free shear") {
    auto g = grid(128, 10.0, 6.0);
    const auto s0 = GaussianState::coherent(0.0, 0.5, 0.8, 1.0);
    auto W0 = phase::gaussian_field(g, s0);
    EvolutionSpec spec;
    spec.model = ModelParams::free(1.5);
    spec.duration = 2.0;
    EvolutionStats st;
    auto W = phase::evolve_liouville(W0, spec, &st);
    Eigen::Matrix2d S;
    S << 1, spec.duration / 1.5, 0, 1;
    GaussianState s1;
    s1.mean = S * s0.mean;
    s1.cov = S * s0.cov * S.transpose();
    auto ref = phase::gaussian_field(g, s1);
    CHECK(max_abs_diff(W, ref) < 1e-7);
    CHECK(std::abs(st.final_mass - 1.0) < 1e-12);
    CHECK(st.steps == phase::min_stable_steps(W0, spec));
}

TEST_CASE("Liouville harmonic rotation and backward flow") {
    auto g = grid(128, 8.0, 8.0);
    const double x0 = 2.0;
    auto W0 = phase::gaussian_field(g, GaussianState::coherent(x0, 0.0, 0.7, 1.0));
    EvolutionSpec spec;
    spec.model = ModelParams::harmonic(1.0);
    spec.duration = 0.5 * std::acos(-1.0);
    auto Wq = phase::evolve_liouville(W0, spec);
    const auto mq = Wq.moments();
    CHECK(std::abs(mq.mean(0)) < 1e-8);
    CHECK(std::abs(mq.mean(1) + x0) < 1e-8);

    spec.duration = 2.0 * std::acos(-1.0);
    auto Wp = phase::evolve_liouville(W0, spec);
    CHECK(phase::wigner_distance(Wp, W0, DistanceMetric::L2) < 1e-4);
}

TEST_CASE("damped Liouville matches the characteristics oracle") {
    auto g = grid(96, 7.0, 7.0);
    const auto s0 = GaussianState::coherent(1.5, 0.5, 0.6, 1.0);
    auto W0 = phase::gaussian_field(g, s0);
    EvolutionSpec spec;
    spec.model = ModelParams::harmonic(1.3);
    spec.drag = 0.1;
    spec.duration = 1.5;
    auto W = phase::evolve_liouville(W0, spec);

    const Eigen::Matrix2d inv = s0.cov.inverse();
    const double norm = 1.0 / (2 * std::acos(-1.0) * std::sqrt(s0.cov.determinant()));
    auto w0 = [&](double x, double p) {
        Eigen::Vector2d d(x - s0.mean(0), p - s0.mean(1));
        return norm * std::exp(-0.5 * d.dot(inv * d));
    };
    // the flow is linear, so a coarser node grid suffices for the oracle
    auto ref = phase::evolve_characteristics(w0, g, phase::hamiltonian_flow(spec.model, spec.drag), spec.duration);
    CHECK(phase::wigner_distance(W, ref, DistanceMetric::L2) < 1e-6);
    CHECK(std::abs(W.mass() - 1.0) < 1e-10);
}

TEST_CASE("Liouville conserves the integral of W^2 up to discretization") {
    const auto s0 = GaussianState::coherent(1.0, 0.0, 0.5, 1.0);
    auto run = [&](std::size_t n) {
        auto g = grid(n, 6.0, 6.0);
        auto W0 = phase::gaussian_field(g, s0);
        EvolutionSpec spec;
        spec.model = ModelParams::quartic(0.1);
        spec.duration = 1.0;
        auto W = phase::evolve_liouville(W0, spec);
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < W.values.size(); ++i) {
            a += W0.values[i] * W0.values[i];
            b += W.values[i] * W.values[i];
        }
        return std::abs(b - a) / a;
    };
    const double coarse = run(32), fine = run(64);
    CHECK(fine < coarse);
    CHECK(fine < 1e-3);
}

TEST_CASE("Fokker-Planck moments follow the moment ODE") {
    SUBCASE("free particle relaxes to m kT") {
        auto g = WignerField::zeros(16, 128, -4.0, 4.0, -8.0, 8.0);
        const double m = 1.0, gamma = 0.5, kT = 2.0;
        // x-independent initial state on a periodic x grid
        auto W0 = phase::sample_function(g, [](double, double p) {
            return std::exp(-p * p / (2 * 0.25)) / std::sqrt(2 * std::acos(-1.0) * 0.25) / 8.0;
        });
        EvolutionSpec spec;
        spec.model = ModelParams::free(m);
        spec.bath = FPBath{gamma, kT};
        spec.periodic_x = true;
        double t = 0.0;
        for (double step : {0.5, 1.0, 1.5, 3.0}) {
            spec.duration = step;
            W0 = phase::evolve_fokker_planck(W0, spec);
            t += step;
            const double spp = W0.moments().cov(1, 1);
            const double exact = m * kT + (0.25 - m * kT) * std::exp(-4 * gamma * t);
            CHECK(std::abs(spp - exact) / exact < 1e-6);
        }
        CHECK(phase::momentum_coherence_norm(W0) < 1e-12);
    }
    SUBCASE("harmonic with full covariance") {
        auto g = grid(96, 8.0, 8.0);
        const double m = 1.2, w = 0.9, gamma = 0.2, kT = 0.8;
        const auto s0 = GaussianState::coherent(1.0, 0.5, 0.6, 1.0);
        auto W0 = phase::gaussian_field(g, s0);
        EvolutionSpec spec;
        spec.model = ModelParams::harmonic(w, m);
        spec.bath = FPBath{gamma, kT};
        spec.duration = 2.0;
        auto W = phase::evolve_fokker_planck(W0, spec);
        MomentOracle o{m, w * w, gamma, 2 * m * gamma * kT};
        auto s = o.run({s0.mean(0), s0.mean(1), s0.cov(0, 0), s0.cov(0, 1), s0.cov(1, 1)}, spec.duration);
        const auto mom = W.moments();
        CHECK(std::abs(mom.mean(0) - s[0]) < 1e-8);
        CHECK(std::abs(mom.mean(1) - s[1]) < 1e-8);
        CHECK(std::abs(mom.cov(0, 0) - s[2]) / s[2] < 1e-5);
        CHECK(std::abs(mom.cov(0, 1) - s[3]) < 1e-5 * s[2]);
        CHECK(std::abs(mom.cov(1, 1) - s[4]) / s[4] < 1e-5);
    }
}

TEST_CASE("operator reductions") {
    auto g = grid(64, 8.0, 8.0);
    auto W0 = phase::gaussian_field(g, GaussianState::coherent(1.0, 0.0, 0.7, 1.0));
    EvolutionSpec spec;
    spec.model = ModelParams::harmonic(1.0);
    spec.duration = 1.0;
    auto L = phase::evolve_liouville(W0, spec);
    spec.bath = FPBath{0.0, 0.0};
    auto F = phase::evolve_fokker_planck(W0, spec);
    CHECK(max_abs_diff(L, F) < 1e-10);

    // Moyal terms vanish for quadratic potentials
    spec.bath = FPBath{0.3, 1.0};
    spec.moyal_order = 0;
    auto F0 = phase::evolve_fokker_planck(W0, spec);
    spec.moyal_order = 2;
    auto F2 = phase::evolve_fokker_planck(W0, spec);
    CHECK(max_abs_diff(F0, F2) == 0.0);

    // traced doubled equation: delegation and the harmonic coincidence
    const FPBath A{0.3, 1.0}, B{0.3, 0.4};
    spec.moyal_order = 1;
    auto R = phase::evolve_dqt_reduced(W0, spec, A, B);
    EvolutionSpec s2 = spec;
    s2.moyal_order = 0;
    s2.bath = FPBath{0.3, 1.4};
    CHECK(max_abs_diff(R, phase::evolve_fokker_planck(W0, s2)) == 0.0);
    spec.bath = A;
    auto sqt = phase::evolve_fokker_planck(W0, spec);
    auto dqt = phase::evolve_dqt_reduced(W0, spec, A, FPBath{0.3, 0.0});
    CHECK(max_abs_diff(sqt, dqt) < 1e-10);

    // quartic: first Moyal term changes the field
    spec.model = ModelParams::quartic(0.05);
    spec.bath = FPBath{0.1, 0.5};
    spec.moyal_order = 0;
    auto Q0 = phase::evolve_fokker_planck(W0, spec);
    spec.moyal_order = 1;
    auto Q1 = phase::evolve_fokker_planck(W0, spec);
    CHECK(phase::wigner_distance(Q0, Q1, DistanceMetric::L1) > 1e-4);
}

TEST_CASE("Husimi smearing") {
    auto g = grid(128, 8.0, 8.0);
    GaussianState s = GaussianState::coherent(0.3, -0.2, 0.9, 1.0);
    s.cov(0, 1) = s.cov(1, 0) = 0.05;
    auto W = phase::gaussian_field(g, s);
    auto H = phase::husimi_smear(W, 0.5, 0.7);
    const auto m = H.moments();
    CHECK((m.mean - s.mean).norm() < 1e-10);
    Eigen::Matrix2d expect = s.cov;
    expect(0, 0) += 0.25;
    expect(1, 1) += 0.49;
    CHECK((m.cov - expect).norm() < 1e-9);
    CHECK(std::abs(H.mass() - 1.0) < 1e-8);
    CHECK(max_abs_diff(phase::husimi_smear(W, 0.0, 0.0), W) == 0.0);
    CHECK_THROWS_AS(phase::husimi_smear(W, 20.0, 0.1), std::invalid_argument);

    auto cat = phase::cat_state_field(g, 3.0, 0.6, 1.0);
    CHECK(std::abs(cat.mass() - 1.0) < 1e-10);
    CHECK(cat.min() < -0.3 * cat.max());
    const double sx = 0.6;
    auto Hc = phase::husimi_smear(cat, sx, 0.5 / sx);
    CHECK(Hc.min() >= -1e-6 * Hc.max());
}

TEST_CASE("wigner distance") {
    auto g = grid(32, 4.0, 4.0);
    auto a = phase::sample_function(g, [](double x, double) { return x < 0 ? 1.0 / 32.0 : 0.0; });
    auto b = phase::sample_function(g, [](double x, double) { return x >= 0 ? 1.0 / 32.0 : 0.0; });
    CHECK(std::abs(a.mass() - 1.0) < 1e-12);
    CHECK(phase::wigner_distance(a, a, DistanceMetric::L1) == 0.0);
    CHECK(phase::wigner_distance(a, b, DistanceMetric::L1) == doctest::Approx(2.0));
    CHECK(phase::wigner_distance(a, b, DistanceMetric::L2) == phase::wigner_distance(b, a, DistanceMetric::L2));
    CHECK_THROWS_AS(phase::wigner_distance(a, grid(16, 4.0, 4.0), DistanceMetric::L1), std::invalid_argument);
}

TEST_CASE("momentum coherence norm") {
    auto g = WignerField::zeros(32, 128, -8.0, 8.0, -8.0, 8.0);
    auto flat = phase::sample_function(g, [](double, double p) { return std::exp(-p * p) / std::sqrt(std::acos(-1.0)) / 16.0; });
    CHECK(phase::momentum_coherence_norm(flat) < 1e-14);
    auto bumpy = phase::sample_function(g, [](double x, double p) { return (1 + 0.5 * std::cos(x * std::acos(-1.0) / 8)) * std::exp(-p * p); });
    CHECK(phase::momentum_coherence_norm(bumpy) > 0.1);

    EvolutionSpec spec;
    spec.model = ModelParams::free();
    spec.bath = FPBath{0.4, 1.0};
    spec.duration = 1.0;
    spec.periodic_x = true;
    CHECK(phase::momentum_coherence_norm(phase::evolve_fokker_planck(flat, spec)) <= 1e-12);
    spec.model = ModelParams::harmonic(0.3);
    spec.duration = 0.5;
    CHECK(phase::momentum_coherence_norm(phase::evolve_fokker_planck(flat, spec)) > 1e-6);
}

TEST_CASE("exact momentum decoherence") {
    auto g = WignerField::zeros(32, 128, -8.0, 8.0, -8.0, 8.0);
    // x-dependent initial state: not diagonal in momentum
    auto W0 = phase::gaussian_field(g, GaussianState::coherent(0.5, 0.3, 1.0, 1.0));
    phase::MomentumWindows win{{-2.0, -1.0, 0.0, 1.0, 2.0}, 1.0, WindowShape::Sharp};

    for (auto [gamma, kT, t] : {std::tuple{0.5, 1.0, 1.0}, {0.2, 0.3, 2.5}, {1.0, 0.1, 0.3}}) {
        auto D = phase::momentum_history_dfun(W0, ModelParams::free(), FPBath{gamma, kT}, t, win);
        CHECK(D.size() == 25);
        double diag = 0.0, off = 0.0;
        for (Eigen::Index i = 0; i < D.size(); ++i)
            for (Eigen::Index j = 0; j < D.size(); ++j)
                (i == j ? diag : off) = std::max(i == j ? diag : off, std::abs(D.entries(i, j)));
        CHECK(off <= 1e-10 * diag);
        CHECK((D.entries - D.entries.adjoint()).norm() < 1e-14);
    }

    // no environment: second window must equal the first
    auto D0 = phase::momentum_history_dfun(W0, ModelParams::free(), FPBath{0.0, 0.0}, 1.0, win);
    const auto mp = W0.marginal_p();
    for (std::size_t a = 0; a < 5; ++a) {
        double mass = 0.0;
        for (std::size_t j = 0; j < g.np; ++j)
            if (g.p(j) >= win.centers[a] - 0.5 && g.p(j) < win.centers[a] + 0.5) mass += mp[j] * g.dp();
        const auto h = static_cast<Eigen::Index>(a * 5 + a);
        CHECK(std::abs(D0.entries(h, h).real() - mass) < 1e-12);
    }

    // momentum spreads: window-occupancy entropy grows
    auto entropy = [&](const DecoherenceMatrix& D) {
        double s = 0.0;
        for (std::size_t b = 0; b < 5; ++b) {
            double pb = 0.0;
            for (std::size_t a = 0; a < 5; ++a) pb += D.entries(a * 5 + b, a * 5 + b).real();
            if (pb > 0) s -= pb * std::log(pb);
        }
        return s;
    };
    auto wide = WignerField::zeros(64, 128, -16.0, 16.0, -8.0, 8.0);
    auto narrow = phase::gaussian_field(wide, GaussianState::coherent(0.0, 0.0, 3.0, 1.0));
    const double gamma = 0.5;
    const double s0 = entropy(phase::momentum_history_dfun(narrow, ModelParams::free(), FPBath{gamma, 1.0}, 0.0, win));
    const double s1 =
        entropy(phase::momentum_history_dfun(narrow, ModelParams::free(), FPBath{gamma, 1.0}, 5.0 / gamma, win));
    CHECK(s1 > s0);

    auto Dh = phase::momentum_history_dfun(W0, ModelParams::harmonic(0.5), FPBath{0.5, 1.0}, 1.0, win);
    double off = 0.0;
    for (Eigen::Index i = 0; i < Dh.size(); ++i)
        for (Eigen::Index j = 0; j < Dh.size(); ++j)
            if (i != j) off = std::max(off, std::abs(Dh.entries(i, j)));
    CHECK(off > 1e-6);

    CHECK_THROWS_AS(phase::momentum_history_dfun(W0, ModelParams::quartic(0.1), FPBath{0.5, 1.0}, 1.0, win),
                    std::invalid_argument);
}

TEST_CASE("general flows") {
    VectorFieldSpec rot{{"a", "b"}, {"-b", "a"}, {}};
    auto flow = phase::build_general_dqt_flow(rot);
    CHECK(flow.dim() == 2);
    auto z = phase::integrate_flow(flow, {1.0, 0.0}, 2.0);
    CHECK(std::abs(z[0] - std::cos(2.0)) < 1e-8);
    CHECK(std::abs(z[1] - std::sin(2.0)) < 1e-8);

    // logistic growth in one dimension has a closed form
    auto logistic = phase::build_general_dqt_flow({{"u"}, {"u*(1-u)"}, {"u"}});
    const double u0 = 0.1, t = 3.0;
    auto u = phase::integrate_flow(logistic, {u0}, t);
    CHECK(std::abs(u[0] - u0 / (u0 + (1 - u0) * std::exp(-t))) < 1e-8);

    // 3-d flow: divergence by differences
    auto lin3 = phase::build_general_dqt_flow({{"x", "y", "z"}, {"2*x", "-y", "0.5*z + x"}, {}});
    const double pt[3] = {0.3, -0.1, 2.0};
    CHECK(lin3.divergence(pt) == doctest::Approx(1.5).epsilon(1e-8));

    // canonical case reproduces the Hamiltonian flow
    auto canon = phase::build_general_dqt_flow({{"x", "p"}, {"p", "-x - 0.4*x^3"}, {}});
    auto ham = phase::hamiltonian_flow(ModelParams{1.0, 1.0, PotentialKind::HarmonicPlusQuartic, 1.0, 0.1});
    auto z1 = phase::integrate_flow(canon, {0.7, 0.2}, 4.0);
    auto z2 = phase::integrate_flow(ham, {0.7, 0.2}, 4.0);
    CHECK(std::abs(z1[0] - z2[0]) < 1e-9);
    CHECK(std::abs(z1[1] - z2[1]) < 1e-9);

    // pushforward through sharp gates is exactly diagonal
    std::vector<std::vector<double>> pts;
    std::vector<double> wts;
    for (int i = 0; i < 40; ++i) {
        pts.push_back({-2.0 + 0.1 * i, 0.05 * (i % 7) - 0.15});
        wts.push_back(1.0 / 40);
    }
    auto hist = HistorySpec::uniform(2.0, {1.0, 2.0}, {-1.5, -0.5, 0.5, 1.5}, 1.0, WindowShape::Sharp);
    auto D = phase::flow_history_dfun(canon, pts, wts, hist);
    const auto rep = histories::analyze_decoherence(D);
    CHECK(rep.epsilon_max == 0.0);

    CHECK_THROWS_AS(phase::build_general_dqt_flow({{"x", "p"}, {"p", "-x +"}, {}}), std::invalid_argument);
    CHECK_THROWS_AS(phase::build_general_dqt_flow({{"a", "b", "c", "d"}, {"a", "b", "c", "d"}, {}}),
                    std::invalid_argument);
}

TEST_CASE("serialization round trip") {
    auto g = WignerField::zeros(8, 10, -1.0, 1.5, -2.0, 2.0);
    auto W = phase::sample_function(g, [](double x, double p) { return std::sin(x) * p + 1.0 / 3.0; });
    const auto dir = std::filesystem::temp_directory_path();
    const auto bin = (dir / "decohist_wigner_test.bin").string();
    const auto csv = (dir / "decohist_wigner_test.csv").string();
    phase::write_binary(W, bin);
    auto R = phase::read_binary(bin);
    CHECK(R.same_grid(W));
    CHECK(R.values == W.values);
    CHECK(std::filesystem::file_size(bin) == 4 + 4 + 16 + 32 + 80 * 8);
    phase::write_csv(W, csv);
    std::FILE* f = std::fopen(csv.c_str(), "r");
    REQUIRE(f);
    char line[256];
    REQUIRE(std::fgets(line, sizeof line, f));
    CHECK(std::string(line) == "x,p,W\n");
    REQUIRE(std::fgets(line, sizeof line, f));
    double x, p, w;
    REQUIRE(std::sscanf(line, "%lf,%lf,%lf", &x, &p, &w) == 3);
    CHECK(x == W.x(0));
    CHECK(p == W.p(0));
    CHECK(w == W.at(0, 0));
    std::fclose(f);
    std::filesystem::remove(bin);
    std::filesystem::remove(csv);

    {
        std::FILE* bad = std::fopen(bin.c_str(), "wb");
        std::fputs("NOPE", bad);
        std::fclose(bad);
    }
    CHECK_THROWS_AS(phase::read_binary(bin), std::invalid_argument);
    std::filesystem::remove(bin);
}

TEST_CASE("evolution error paths") {
    auto g = grid(32, 4.0, 4.0);
    auto W0 = phase::gaussian_field(g, GaussianState::coherent(0.0, 0.0, 0.7, 1.0));
    EvolutionSpec spec;
    spec.model = ModelParams::harmonic(1.0);
    spec.duration = 1.0;
    spec.steps = 2;
    CHECK_THROWS_AS(phase::evolve_liouville(W0, spec), NumericalError);
    spec.steps = 0;
    spec.moyal_order = 3;
    CHECK_THROWS_AS(phase::evolve_liouville(W0, spec), std::invalid_argument);
    spec.moyal_order = 1;
    CHECK_THROWS_AS(phase::evolve_fokker_planck(W0, spec), std::invalid_argument);
    spec.bath = FPBath{0.1, 1.0};
    CHECK_THROWS_AS(phase::evolve_liouville(W0, spec), std::invalid_argument);

    auto half = W0;
    for (double& v : half.values) v *= 0.5;
    CHECK_THROWS_AS(phase::evolve_fokker_planck(half, spec), std::invalid_argument);

    // mass drifting onto the boundary band
    auto edge = phase::gaussian_field(grid(64, 8.0, 8.0), GaussianState::coherent(0.0, 1.5, 1.0, 1.0));
    spec.bath.reset();
    spec.model = ModelParams::free();
    spec.duration = 4.0;
    CHECK_THROWS_AS(phase::evolve_liouville(edge, spec), NumericalError);
}
