#include "decohist/bath.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace decohist {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_linear(const ModelParams& model) {
    model.validate();
    if (!model.is_linear()) throw std::invalid_argument("bath: only free or harmonic systems have exact Gaussian dynamics");
}

// Gauss-Legendre nodes and weights on [0, L] by Golub-Welsch.
void gauss_legendre(std::size_t n, double L, std::vector<double>& x, std::vector<double>& w) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 1; k < n; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        J(k - 1, k) = J(k, k - 1) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    x.resize(n);
    w.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        x[k] = 0.5 * L * (es.eigenvalues()(i) + 1.0);
        w[k] = L * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
}

struct NormalModes {
    Eigen::VectorXd inv_sqrt_mass, sqrt_mass;
    Eigen::MatrixXd U;       // eigenvectors of the mass-weighted stiffness
    Eigen::VectorXd omega2;  // its eigenvalues (may be <= 0)
};

NormalModes normal_modes(const ModelParams& model, const BathSpec& bath, bool counterterm) {
    const auto n = static_cast<Eigen::Index>(bath.N + 1);
    Eigen::VectorXd mass(n);
    mass(0) = model.mass;
    for (std::size_t k = 0; k < bath.N; ++k) mass(static_cast<Eigen::Index>(k + 1)) = bath.masses[k];
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, n);
    const double w = model.potential == PotentialKind::Harmonic ? model.omega : 0.0;
    V(0, 0) = model.mass * (w * w + (counterterm ? bath.counterterm : 0.0));
    for (std::size_t k = 0; k < bath.N; ++k) {
        const auto i = static_cast<Eigen::Index>(k + 1);
        V(i, i) = bath.masses[k] * bath.frequencies[k] * bath.frequencies[k];
        V(0, i) = V(i, 0) = -bath.couplings[k];
    }
    NormalModes nm;
    nm.sqrt_mass = mass.cwiseSqrt();
    nm.inv_sqrt_mass = nm.sqrt_mass.cwiseInverse();
    const Eigen::MatrixXd K = nm.inv_sqrt_mass.asDiagonal() * V * nm.inv_sqrt_mass.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    if (es.info() != Eigen::Success) throw NumericalError("bath: normal-mode decomposition failed");
    nm.U = es.eigenvectors();
    nm.omega2 = es.eigenvalues();
    return nm;
}

// Per-mode cos, sin/Omega and -Omega sin, continued to Omega^2 <= 0.
void mode_factors(double w2, double t, double& c, double& s_over, double& minus_ws) {
    if (std::abs(w2) * t * t < 1e-16) {
        c = 1.0 - 0.5 * w2 * t * t;
        s_over = t;
        minus_ws = -w2 * t;
    } else if (w2 > 0.0) {
        const double w = std::sqrt(w2);
        c = std::cos(w * t);
        s_over = std::sin(w * t) / w;
        minus_ws = -w * std::sin(w * t);
    } else {
        const double k = std::sqrt(-w2);
        c = std::cosh(k * t);
        s_over = std::sinh(k * t) / k;
        minus_ws = k * std::sinh(k * t);
    }
}

// Rows of exp(At) for the system coordinates x and p. Columns follow the
// (x, p, q_1, p_1, ...) interleaving.
Eigen::Matrix<double, 2, Eigen::Dynamic> system_rows(const NormalModes& nm, double t) {
    const Eigen::Index n = nm.U.rows();
    Eigen::VectorXd C(n), S(n), W(n);
    for (Eigen::Index j = 0; j < n; ++j) mode_factors(nm.omega2(j), t, C(j), S(j), W(j));
    const Eigen::RowVectorXd a = nm.inv_sqrt_mass(0) * nm.U.row(0);
    const Eigen::RowVectorXd b = nm.sqrt_mass(0) * nm.U.row(0);
    const Eigen::MatrixXd Ut = nm.U.transpose();
    // q-columns multiply U^T M^{1/2}, p-columns multiply U^T M^{-1/2}
    const Eigen::RowVectorXd xq = (a.cwiseProduct(C.transpose()) * Ut) * nm.sqrt_mass.asDiagonal();
    const Eigen::RowVectorXd xp = (a.cwiseProduct(S.transpose()) * Ut) * nm.inv_sqrt_mass.asDiagonal();
    const Eigen::RowVectorXd pq = (b.cwiseProduct(W.transpose()) * Ut) * nm.sqrt_mass.asDiagonal();
    const Eigen::RowVectorXd pp = (b.cwiseProduct(C.transpose()) * Ut) * nm.inv_sqrt_mass.asDiagonal();
    Eigen::Matrix<double, 2, Eigen::Dynamic> rows(2, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
        rows(0, 2 * i) = xq(i);
        rows(0, 2 * i + 1) = xp(i);
        rows(1, 2 * i) = pq(i);
        rows(1, 2 * i + 1) = pp(i);
    }
    return rows;
}

Eigen::MatrixXd full_transfer(const NormalModes& nm, double t) {
    const Eigen::Index n = nm.U.rows();
    Eigen::VectorXd C(n), S(n), W(n);
    for (Eigen::Index j = 0; j < n; ++j) mode_factors(nm.omega2(j), t, C(j), S(j), W(j));
    const Eigen::MatrixXd Q = nm.inv_sqrt_mass.asDiagonal() * nm.U;  // q = Q xi
    const Eigen::MatrixXd P = nm.sqrt_mass.asDiagonal() * nm.U;      // p = P eta
    const Eigen::MatrixXd Qi = nm.U.transpose() * nm.sqrt_mass.asDiagonal();
    const Eigen::MatrixXd Pi = nm.U.transpose() * nm.inv_sqrt_mass.asDiagonal();
    const Eigen::MatrixXd qq = Q * C.asDiagonal() * Qi;
    const Eigen::MatrixXd qp = Q * S.asDiagonal() * Pi;
    const Eigen::MatrixXd pq = P * W.asDiagonal() * Qi;
    const Eigen::MatrixXd pp = P * C.asDiagonal() * Pi;
    Eigen::MatrixXd out(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            out(2 * i, 2 * j) = qq(i, j);
            out(2 * i, 2 * j + 1) = qp(i, j);
            out(2 * i + 1, 2 * j) = pq(i, j);
            out(2 * i + 1, 2 * j + 1) = pp(i, j);
        }
    return out;
}

}  // namespace

void BathSpec::validate() const {
    if (N < 1) throw std::invalid_argument("bath spec: N must be >= 1");
    if (masses.size() != N || frequencies.size() != N || couplings.size() != N)
        throw std::invalid_argument("bath spec: parameter arrays must have N entries");
    for (std::size_t k = 0; k < N; ++k) {
        if (!(masses[k] > 0.0) || !(frequencies[k] > 0.0))
            throw std::invalid_argument("bath spec: oscillator masses and frequencies must be > 0");
        if (!std::isfinite(couplings[k])) throw std::invalid_argument("bath spec: non-finite coupling");
    }
    if (!(system_mass > 0.0)) throw std::invalid_argument("bath spec: system mass must be > 0");
}

double BathSpec::recurrence_time() const { return 2.0 * kPi * static_cast<double>(N) / cutoff; }

namespace bath {

BathSpec discretize_ohmic_bath(double gamma, double cutoff, std::size_t N, double system_mass, FrequencyGrid grid,
                               double oscillator_mass) {
    if (N < 1) throw std::invalid_argument("discretize_ohmic_bath: N must be >= 1");
    if (!(cutoff > 0.0)) throw std::invalid_argument("discretize_ohmic_bath: cutoff must be > 0");
    if (!(gamma >= 0.0)) throw std::invalid_argument("discretize_ohmic_bath: gamma must be >= 0");
    if (!(system_mass > 0.0) || !(oscillator_mass > 0.0))
        throw std::invalid_argument("discretize_ohmic_bath: masses must be > 0");
    BathSpec b;
    b.N = N;
    b.cutoff = cutoff;
    b.gamma = gamma;
    b.system_mass = system_mass;
    b.grid = grid;
    b.masses.assign(N, oscillator_mass);
    std::vector<double> dw(N);
    if (grid == FrequencyGrid::Linear) {
        b.frequencies.resize(N);
        for (std::size_t n = 0; n < N; ++n) {
            b.frequencies[n] = static_cast<double>(n + 1) * cutoff / static_cast<double>(N);
            dw[n] = cutoff / static_cast<double>(N);
        }
    } else {
        gauss_legendre(N, cutoff, b.frequencies, dw);
    }
    const double eta = 2.0 * system_mass * gamma;
    b.couplings.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
        const double w = b.frequencies[n];
        b.couplings[n] = std::sqrt(2.0 / kPi * b.masses[n] * w * (eta * w) * dw[n]);
        b.counterterm += b.couplings[n] * b.couplings[n] / (system_mass * b.masses[n] * w * w);
    }
    return b;
}

Eigen::MatrixXd hamiltonian_matrix(const ModelParams& model, const BathSpec& bath, bool counterterm) {
    check_linear(model);
    bath.validate();
    const auto n = static_cast<Eigen::Index>(2 * (bath.N + 1));
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, n);
    const double w = model.potential == PotentialKind::Harmonic ? model.omega : 0.0;
    H(0, 0) = model.mass * (w * w + (counterterm ? bath.counterterm : 0.0));
    H(1, 1) = 1.0 / model.mass;
    for (std::size_t k = 0; k < bath.N; ++k) {
        const auto q = static_cast<Eigen::Index>(2 * (k + 1));
        H(q, q) = bath.masses[k] * bath.frequencies[k] * bath.frequencies[k];
        H(q + 1, q + 1) = 1.0 / bath.masses[k];
        H(0, q) = H(q, 0) = -bath.couplings[k];
    }
    return H;
}

Eigen::MatrixXd generator(const ModelParams& model, const BathSpec& bath, bool counterterm) {
    const Eigen::MatrixXd H = hamiltonian_matrix(model, bath, counterterm);
    const Eigen::Index n = H.rows();
    // A = J H with J the symplectic form on interleaved (q, p) pairs
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < n; i += 2) {
        A.row(i) = H.row(i + 1);
        A.row(i + 1) = -H.row(i);
    }
    return A;
}

Eigen::MatrixXd transfer_matrix(const ModelParams& model, const BathSpec& bath, double t, bool counterterm) {
    check_linear(model);
    bath.validate();
    return full_transfer(normal_modes(model, bath, counterterm), t);
}

CovarianceSystem initial_state(const GaussianState& state, const BathSpec& bath, double kT_A) {
    bath.validate();
    if (!(kT_A >= 0.0)) throw std::invalid_argument("initial_state: kT_A must be >= 0");
    const auto n = static_cast<Eigen::Index>(2 * (bath.N + 1));
    CovarianceSystem s;
    s.mean = Eigen::VectorXd::Zero(n);
    s.mean.head<2>() = state.mean;
    s.cov = Eigen::MatrixXd::Zero(n, n);
    s.cov.topLeftCorner<2, 2>() = state.cov;
    for (std::size_t k = 0; k < bath.N; ++k) {
        const auto q = static_cast<Eigen::Index>(2 * (k + 1));
        s.cov(q, q) = kT_A / (bath.masses[k] * bath.frequencies[k] * bath.frequencies[k]);
        s.cov(q + 1, q + 1) = bath.masses[k] * kT_A;
    }
    return s;
}

CovarianceSeries evolve_gaussian_closed_system(const ModelParams& model, const BathSpec& bath, double kT_A,
                                               const GaussianState& state, double tau, std::size_t samples,
                                               const ClosedSystemOptions& opt) {
    check_linear(model);
    bath.validate();
    state.validate(model.hbar);
    if (!(tau > 0.0)) throw std::invalid_argument("evolve_gaussian_closed_system: tau must be > 0");
    if (samples < 2) throw std::invalid_argument("evolve_gaussian_closed_system: need >= 2 samples");
    const CovarianceSystem init = initial_state(state, bath, kT_A);
    const NormalModes nm = normal_modes(model, bath, opt.counterterm);

    CovarianceSeries series;
    series.full = opt.full;
    series.recurrence_warning = bath.grid == FrequencyGrid::Linear && tau > bath.recurrence_time();
    // the initial covariance is diagonal in the bath block
    const Eigen::VectorXd bath_var = init.cov.diagonal();
    for (std::size_t s = 0; s < samples; ++s) {
        const double t = tau * static_cast<double>(s) / static_cast<double>(samples - 1);
        CovarianceSystem out;
        out.t = t;
        if (opt.full) {
            const Eigen::MatrixXd F = full_transfer(nm, t);
            out.mean = F * init.mean;
            out.cov = F * init.cov * F.transpose();
            out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
        } else {
            const auto R = system_rows(nm, t);
            out.mean = R * init.mean;
            Eigen::Matrix2d c = R.leftCols<2>() * state.cov * R.leftCols<2>().transpose();
            const auto rest = R.rightCols(R.cols() - 2);
            c += rest * bath_var.tail(bath_var.size() - 2).asDiagonal() * rest.transpose();
            c(0, 1) = c(1, 0) = 0.5 * (c(0, 1) + c(1, 0));
            out.cov = c;
        }
        if (!out.cov.allFinite()) throw NumericalError("evolve_gaussian_closed_system: non-finite covariance");
        series.samples.push_back(std::move(out));
    }
    return series;
}

std::vector<GaussianState> reduced_moments(const CovarianceSeries& series) {
    std::vector<GaussianState> out;
    out.reserve(series.samples.size());
    for (const auto& s : series.samples) {
        if (s.mean.size() < 2 || s.cov.rows() < 2) throw std::invalid_argument("reduced_moments: malformed sample");
        GaussianState g;
        g.mean = s.mean.head<2>();
        g.cov = s.cov.topLeftCorner<2, 2>();
        out.push_back(g);
    }
    return out;
}

double quadratic_energy(const Eigen::MatrixXd& Hm, const CovarianceSystem& s) {
    if (Hm.rows() != s.cov.rows()) throw std::invalid_argument("quadratic_energy: dimension mismatch");
    return 0.5 * (Hm.cwiseProduct(s.cov).sum() + s.mean.dot(Hm * s.mean));
}

double ou_momentum_variance(double sigma_pp0, double mass, double gamma, double kT, double t) {
    return mass * kT + (sigma_pp0 - mass * kT) * std::exp(-4.0 * gamma * t);
}

}  // namespace bath
}  // namespace decohist
