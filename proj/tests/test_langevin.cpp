#include "doctest.h"

#include "decohist/langevin.hpp"
#include "decohist/paths.hpp"

#include <cmath>

using namespace decohist;

namespace {

double mean_of(const Eigen::VectorXd& v) { return v.mean(); }

}  // namespace

TEST_CASE("initial sampling") {
    GaussianState s = GaussianState::coherent(0.4, -0.2, 0.8, 1.0);
    s.cov(1, 1) *= 1.5;
    s.cov(0, 1) = s.cov(1, 0) = 0.1;
    const std::size_t K = 40000;
    auto ens = langevin::sample_initial(s, InitialWeight::wigner(), K, 7, 1.0);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    for (const auto& z : ens.initial) mean += z;
    mean /= double(K);
    CHECK(std::abs(mean(0) - s.mean(0)) < 3 * std::sqrt(s.cov(0, 0) / K));
    CHECK(std::abs(mean(1) - s.mean(1)) < 3 * std::sqrt(s.cov(1, 1) / K));

    const auto hw = InitialWeight::husimi(0.5, 1.0);
    auto hens = langevin::sample_initial(s, hw, K, 7, 1.0);
    Eigen::Vector2d hm = Eigen::Vector2d::Zero();
    for (const auto& z : hens.initial) hm += z;
    hm /= double(K);
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const auto& z : hens.initial) cov += (z - hm) * (z - hm).transpose();
    cov /= double(K - 1);
    Eigen::Matrix2d expect = s.cov;
    expect(0, 0) += 0.25;
    expect(1, 1) += 1.0;
    // sample variance has relative standard error sqrt(2/K)
    CHECK(std::abs(cov(0, 0) - expect(0, 0)) < 4 * std::sqrt(2.0 / K) * expect(0, 0));
    CHECK(std::abs(cov(1, 1) - expect(1, 1)) < 4 * std::sqrt(2.0 / K) * expect(1, 1));
    CHECK(std::abs(cov(0, 1) - expect(0, 1)) < 4 * std::sqrt((expect(0, 0) * expect(1, 1)) / K));

    auto again = langevin::sample_initial(s, InitialWeight::wigner(), K, 7, 1.0);
    CHECK(again.initial == ens.initial);
    CHECK(again.sub_seeds == ens.sub_seeds);
    auto other = langevin::sample_initial(s, InitialWeight::wigner(), K, 8, 1.0);
    CHECK(other.initial != ens.initial);

    CHECK_THROWS_AS(langevin::sample_initial(s, InitialWeight{InitialKind::Husimi, 0.1, 0.1}, 10, 1, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(langevin::sample_initial(s, InitialWeight::wigner(), 0, 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(langevin::sample_initial(GaussianState::coherent(0, 0, 0.1, 1.0), InitialWeight::wigner(), 10, 1,
                                             4.0),
                    std::invalid_argument);
}

TEST_CASE("noise stream statistics") {
    const double var = langevin::noise_variance(ModelParams::free(2.0), 0.5, 1.5, 0.01);
    CHECK(var == doctest::Approx(4 * 2.0 * 0.5 * 1.5 / 0.01));
    langevin::NoiseStream noise(123, var);
    const int n = 200000;
    std::vector<double> eta(n);
    for (double& e : eta) e = noise.next();
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    for (int i = 0; i < n; ++i) {
        c0 += eta[i] * eta[i];
        if (i + 1 < n) c1 += eta[i] * eta[i + 1];
        if (i + 2 < n) c2 += eta[i] * eta[i + 2];
    }
    c0 /= n;
    c1 /= n - 1;
    c2 /= n - 2;
    const double se = var * std::sqrt(2.0 / n);
    CHECK(std::abs(c0 - var) < 4 * se);
    CHECK(std::abs(c1) < 4 * var / std::sqrt(double(n)));
    CHECK(std::abs(c2) < 4 * var / std::sqrt(double(n)));
}

TEST_CASE("deterministic limit follows the classical orbit") {
    const double w = 1.3, m = 0.8, tau = 2.0;
    GaussianState s = GaussianState::coherent(0.0, 0.0, 1.0, 1.0);
    auto ens = langevin::sample_initial(s, InitialWeight::wigner(), 5, 3, 1.0);
    LangevinParams lp{ModelParams::harmonic(w, m), 0.0, 0.0, tau, 5e-5};
    auto set = langevin::simulate_langevin(ens, lp, {0.5, 1.0, tau});
    for (std::size_t k = 0; k < 5; ++k)
        for (std::size_t j = 0; j < set.times.size(); ++j) {
            const double t = set.times[j];
            const double x0 = ens.initial[k](0), p0 = ens.initial[k](1);
            const double x = x0 * std::cos(w * t) + p0 / (m * w) * std::sin(w * t);
            const double p = -m * w * x0 * std::sin(w * t) + p0 * std::cos(w * t);
            CHECK(std::abs(set.x(k, j) - x) < 1e-8);
            CHECK(std::abs(set.p(k, j) - p) < 1e-8);
        }
}

TEST_CASE("free particle thermalizes to m kT") {
    const double m = 1.5, g = 1.0, kT = 0.7;
    GaussianState s = GaussianState::coherent(0.0, 0.0, 1.0, 1.0);
    const std::size_t K = 20000;
    auto ens = langevin::sample_initial(s, InitialWeight::wigner(), K, 11, 1.0);
    LangevinParams lp{ModelParams::free(m), g, kT, 6.0, 0.02};
    auto set = langevin::simulate_langevin(ens, lp, {6.0});
    Eigen::VectorXd p2 = set.p.col(1).array().square();
    const double mean = mean_of(p2);
    const double se = std::sqrt((p2.array() - mean).square().sum() / (K - 1) / K);
    CHECK(std::abs(mean - m * kT) < 3 * se);
}

TEST_CASE("thread count does not change trajectories") {
    GaussianState s = GaussianState::coherent(0.3, 0.1, 0.7, 1.0);
    auto ens = langevin::sample_initial(s, InitialWeight::wigner(), 257, 5, 1.0);
    LangevinParams lp{ModelParams::quartic(0.1), 0.4, 1.0, 1.0, 0.01};
    auto a = langevin::simulate_langevin(ens, lp, {0.5, 1.0}, 1);
    auto b = langevin::simulate_langevin(ens, lp, {0.5, 1.0}, 4);
    CHECK(a.x == b.x);
    CHECK(a.p == b.p);
}

TEST_CASE("history probabilities") {
    GaussianState s = GaussianState::coherent(0.0, 1.0, 0.5, 1.0);
    auto ens = langevin::sample_initial(s, InitialWeight::wigner(), 1000, 9, 1.0);
    LangevinParams lp{ModelParams::free(), 0.5, 1.0, 1.0, 0.01};
    auto set = langevin::simulate_langevin(ens, lp, {1.0});
    auto one = langevin::history_probabilities_mc(set, HistorySpec::uniform(1.0, {1.0}, {0.0}, 1e9, WindowShape::Sharp));
    CHECK(one.estimates[0] == 1.0);
    CHECK(one.std_errors[0] == 0.0);

    // deterministic flow, nearly sharp initial condition: indicator of the classical path
    const double hbar = 1e-10;
    auto sharp = GaussianState::coherent(0.0, 1.2, 1e-5, hbar);
    auto dens = langevin::sample_initial(sharp, InitialWeight::wigner(), 200, 2, hbar);
    LangevinParams dp{ModelParams::free(1.0, hbar), 0.0, 0.0, 2.0, 0.01};
    auto dset = langevin::simulate_langevin(dens, dp, {1.0, 2.0});
    auto hist = HistorySpec::uniform(2.0, {1.0, 2.0}, {-0.5, 0.5, 1.5, 2.5}, 1.0, WindowShape::Sharp);
    auto pr = langevin::history_probabilities_mc(dset, hist);
    for (std::size_t h = 0; h < pr.estimates.size(); ++h) {
        const bool classical = pr.labels[h] == "1.5,2.5";
        CHECK(pr.estimates[h] == (classical ? 1.0 : 0.0));
    }
    CHECK(pr.total() == 1.0);

    TrajectorySet empty;
    CHECK_THROWS_AS(langevin::history_probabilities_mc(empty, hist), std::invalid_argument);
    CHECK_THROWS_AS(langevin::history_probabilities_mc(dset, HistorySpec::uniform(2.0, {1.5}, {0.0}, 1.0)),
                    std::invalid_argument);
}

TEST_CASE("step-size bound") {
    GaussianState s = GaussianState::coherent(0.0, 0.0, 1.0, 1.0);
    auto ens = langevin::sample_initial(s, InitialWeight::wigner(), 4, 1, 1.0);
    CHECK(langevin::max_stable_dt(ModelParams::free(), 1.0) == doctest::Approx(0.05));
    CHECK(langevin::max_stable_dt(ModelParams::harmonic(2.0), 0.0) == doctest::Approx(std::acos(-1.0) / 50));
    LangevinParams lp{ModelParams::free(), 1.0, 1.0, 1.0, 0.06};
    CHECK_THROWS_AS(langevin::simulate_langevin(ens, lp, {1.0}), std::invalid_argument);
    lp.dt = 0.01;
    CHECK_THROWS_AS(langevin::simulate_langevin(ens, lp, {1.5}), std::invalid_argument);
}

TEST_CASE("DQT Gaussian-path diagonal matches the Langevin estimate") {
    // doubled theory: Husimi initial weight from rho_B, temperature kT_A + kT_B
    const auto model = ModelParams::harmonic(1.0);
    const FPBath A{0.4, 1.0}, B{0.4, 0.5};
    const auto rhoA = GaussianState::coherent(0.5, 0.0, 0.6, 1.0);
    const auto rhoB = paths::default_rho_B(model, 1.0);
    auto hist = HistorySpec::uniform(1.0, {0.5, 1.0}, {-1.0, 0.0, 1.0}, 0.6);
    auto form = paths::assemble_dqt_form(model, A, B, hist, PathQuadrature{128}, rhoA, rhoB);
    auto D = paths::evaluate_gaussian_dfun(form, hist);

    const std::size_t K = 100000;
    const double sx = std::sqrt(rhoB.cov(0, 0));
    auto ens = langevin::sample_initial(rhoA, InitialWeight::husimi(sx, 1.0), K, 21, 1.0);
    LangevinParams lp{model, A.gamma, A.kT + B.kT, 1.0, 0.005};
    auto pr = langevin::history_probabilities_mc(langevin::simulate_langevin(ens, lp, hist.times), hist);
    const double total = pr.total();
    double worst = 0.0;
    for (std::size_t h = 0; h < pr.estimates.size(); ++h) {
        const double z = std::abs(pr.estimates[h] / total - D.entries(h, h).real()) / (pr.std_errors[h] / total);
        worst = std::max(worst, z);
    }
    MESSAGE("largest z-score " << worst);
    CHECK(worst < 4.0);
}

TEST_CASE("SQT and DQT probabilities approach each other") {
    ComparisonSetup s;
    s.model = ModelParams::free(1.0, 0.01);
    s.gamma = 0.5;
    s.kT_A = 1.0;
    s.state = GaussianState::coherent(0.0, 0.5, 0.1, 0.01);
    s.hist = HistorySpec::uniform(2.0, {1.0, 2.0}, {-1.0, 0.0, 1.0, 2.0}, 1.0, WindowShape::Sharp);
    s.K = 20000;
    s.dt = 0.01;
    s.seed = 4;
    std::vector<double> tv;
    for (double ratio : {1.0, 0.1, 0.01}) {
        s.kT_B = ratio * s.kT_A;
        auto r = langevin::compare_sqt_dqt(s);
        tv.push_back(r.tv_distance);
        MESSAGE("kT_B/kT_A " << ratio << " tv " << r.tv_distance << " max z " << r.max_z);
        if (ratio == 0.01) CHECK(r.max_z < 3.0);
    }
    CHECK(tv[0] > tv[1]);
    CHECK(tv[1] > tv[2]);
}
