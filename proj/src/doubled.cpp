#include "decohist/doubled.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>

namespace decohist {

void FockTruncation::validate(int min_levels) const {
    if (levels < min_levels)
        throw std::invalid_argument("fock truncation: levels must be >= " + std::to_string(min_levels));
    if (!(mass > 0.0)) throw std::invalid_argument("fock truncation: mass must be > 0");
    if (!(omega_ref > 0.0)) throw std::invalid_argument("fock truncation: omega_ref must be > 0");
    if (!(hbar > 0.0)) throw std::invalid_argument("fock truncation: hbar must be > 0");
}

namespace doubled {

namespace {

using Eigen::MatrixXcd;

using SpMat = Eigen::SparseMatrix<cplx>;

SpMat sparse(const MatrixXcd& A) { return A.sparseView(0.0, 0.0); }

MatrixXcd kron(const MatrixXcd& A, const MatrixXcd& B) {
    SpMat K;
    K = Eigen::kroneckerProduct(sparse(A), sparse(B));
    return MatrixXcd(K);
}

// Exact Hermitian part; removes rounding asymmetry from products.
MatrixXcd herm(const MatrixXcd& A) { return 0.5 * (A + A.adjoint()); }

double top_support(const OperatorMatrix& rho) {
    const Eigen::Index n = rho.dim();
    return std::abs(rho.matrix()(n - 1, n - 1));
}

OperatorMatrix pure(const Eigen::VectorXcd& psi) {
    const Eigen::VectorXcd v = psi / psi.norm();
    return OperatorMatrix(herm(v * v.adjoint()), true);
}

}  // namespace

MatrixXcd lowering(int levels) {
    MatrixXcd a = MatrixXcd::Zero(levels, levels);
    for (int n = 1; n < levels; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

std::pair<OperatorMatrix, OperatorMatrix> build_canonical_pair(const FockTruncation& trunc) {
    trunc.validate(1);
    const MatrixXcd a = lowering(trunc.levels);
    const MatrixXcd ad = a.adjoint();
    const double sx = std::sqrt(trunc.hbar / (2.0 * trunc.mass * trunc.omega_ref));
    const double sp = std::sqrt(trunc.mass * trunc.omega_ref * trunc.hbar / 2.0);
    MatrixXcd x = sx * (a + ad);
    MatrixXcd p = cplx(0.0, sp) * (ad - a);
    return {OperatorMatrix(std::move(x), true), OperatorMatrix(std::move(p), true)};
}

MatrixXcd safe_projector(int levels, int keep) {
    if (keep < 1 || keep > levels) throw std::invalid_argument("safe_projector: keep must lie in [1, levels]");
    MatrixXcd Pi = MatrixXcd::Zero(levels, levels);
    for (int i = 0; i < keep; ++i) Pi(i, i) = 1.0;
    return kron(Pi, Pi);
}

DoubledOperators build_doubled_operators(const FockTruncation& trunc, int safe_levels) {
    trunc.validate();
    const int N = trunc.levels;
    if (safe_levels == 0) safe_levels = N - 1;
    if (safe_levels < 1 || safe_levels > N - 1)
        throw std::invalid_argument("build_doubled_operators: safe_levels must lie in [1, levels-1]");
    const auto [x1, p1] = build_canonical_pair(trunc);
    const MatrixXcd I = MatrixXcd::Identity(N, N);

    DoubledOperators ops;
    ops.trunc = trunc;
    ops.safe_levels = safe_levels;
    const MatrixXcd xA = kron(x1.matrix(), I);
    const MatrixXcd pA = kron(p1.matrix(), I);
    const MatrixXcd yB = kron(I, x1.matrix());
    const MatrixXcd kB = kron(I, p1.matrix());
    ops.x = OperatorMatrix(xA, true);
    ops.p = OperatorMatrix(pA, true);
    ops.y = OperatorMatrix(yB, true);
    ops.k = OperatorMatrix(kB, true);
    ops.X = OperatorMatrix(xA + yB, true);
    ops.Q = OperatorMatrix(0.5 * (xA - yB), true);
    ops.K = OperatorMatrix(0.5 * (pA + kB), true);
    ops.P = OperatorMatrix(pA - kB, true);
    ops.safe_projector = OperatorMatrix(safe_projector(N, safe_levels), true);
    return ops;
}

ComplexPair build_complex_pair(const FockTruncation& trunc) {
    trunc.validate();
    const int N = trunc.levels;
    const auto [x1, p1] = build_canonical_pair(trunc);
    const MatrixXcd I = MatrixXcd::Identity(N, N);
    const cplx i(0.0, 1.0);
    MatrixXcd Xc = kron(x1.matrix(), I) + i * kron(I, x1.matrix());
    MatrixXcd Pc = kron(p1.matrix(), I) + i * kron(I, p1.matrix());
    const double m = trunc.mass;
    const double w = trunc.omega_ref;
    const SpMat Xs = sparse(Xc);
    const SpMat Ps = sparse(Pc);
    const SpMat Hs = SpMat(Ps.adjoint()) * Ps / (2.0 * m) + 0.5 * m * w * w * (SpMat(Xs.adjoint()) * Xs);
    MatrixXcd Hc = herm(MatrixXcd(Hs));
    return {OperatorMatrix(std::move(Xc)), OperatorMatrix(std::move(Pc)), OperatorMatrix(std::move(Hc), true)};
}

MatrixXcd commutator(const MatrixXcd& A, const MatrixXcd& B) {
    // the ladder operators are banded, so sparse products keep N = 32 cheap
    const SpMat As = sparse(A);
    const SpMat Bs = sparse(B);
    const SpMat C = As * Bs - Bs * As;
    return MatrixXcd(C);
}

MatrixXcd restrict_to_safe(const MatrixXcd& C, int levels, int keep) {
    MatrixXcd R = MatrixXcd::Zero(C.rows(), C.cols());
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
        if (j / levels >= keep || j % levels >= keep) continue;
        for (Eigen::Index i = 0; i < C.rows(); ++i)
            if (i / levels < keep && i % levels < keep) R(i, j) = C(i, j);
    }
    return R;
}

double expectation(const MatrixXcd& op, const MatrixXcd& rho) {
    // Tr(op rho) without forming the product
    return (op.transpose().cwiseProduct(rho)).sum().real();
}

std::pair<double, double> closeness_terms(const DoubledOperators& ops, const OperatorMatrix& rho_B,
                                          const OperatorMatrix* rho_A) {
    const int N = ops.trunc.levels;
    if (rho_B.dim() != N) throw std::invalid_argument("closeness_product: rho_B dimension mismatch");
    histories::validate_density_matrix(rho_B, 1e-8);
    if (top_support(rho_B) > 1e-8)
        throw NumericalError("closeness_product: rho_B has top-level support " +
                             std::to_string(top_support(rho_B)) + " (truncation unreliable)");
    const OperatorMatrix vac = vacuum_state(N);
    const OperatorMatrix& rA = rho_A ? *rho_A : vac;
    if (rA.dim() != N) throw std::invalid_argument("closeness_product: rho_A dimension mismatch");
    const SpMat rho = Eigen::kroneckerProduct(sparse(rA.matrix()), sparse(rho_B.matrix()));
    const SpMat dX = sparse(ops.X.matrix() - ops.x.matrix());
    const SpMat dP = sparse(ops.P.matrix() - ops.p.matrix());
    // Tr(A A rho) through sparse products
    const SpMat Xr = dX * rho;
    const SpMat Pr = dP * rho;
    auto tr = [](const SpMat& A, const SpMat& B) {
        const SpMat AB = A * B;
        cplx acc = 0.0;
        for (Eigen::Index i = 0; i < AB.rows(); ++i) acc += AB.coeff(i, i);
        return acc.real();
    };
    return {tr(dX, Xr), tr(dP, Pr)};
}

double closeness_product(const DoubledOperators& ops, const OperatorMatrix& rho_B, const OperatorMatrix* rho_A) {
    const auto [vx, vp] = closeness_terms(ops, rho_B, rho_A);
    return vx * vp;
}

OperatorMatrix vacuum_state(int levels) {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(levels);
    psi(0) = 1.0;
    return pure(psi);
}

OperatorMatrix thermal_state(int levels, double nbar) {
    if (!(nbar >= 0.0)) throw std::invalid_argument("thermal_state: nbar must be >= 0");
    Eigen::VectorXd pn(levels);
    for (int n = 0; n < levels; ++n) pn(n) = std::pow(nbar, n) / std::pow(nbar + 1.0, n + 1);
    pn /= pn.sum();
    return OperatorMatrix(pn.cast<cplx>().asDiagonal().toDenseMatrix(), true);
}

OperatorMatrix squeezed_vacuum(int levels, double r) {
    // amplitudes on |2n>: (-tanh r)^n sqrt((2n)!) / (2^n n!) / sqrt(cosh r), built recursively
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(levels);
    const double t = -std::tanh(r);
    double c = 1.0 / std::sqrt(std::cosh(r));
    for (int n = 0; 2 * n < levels; ++n) {
        psi(2 * n) = c;
        c *= t * std::sqrt((2.0 * n + 1.0) * (2.0 * n + 2.0)) / (2.0 * (n + 1.0));
    }
    return pure(psi);
}

OperatorMatrix coherent_state(int levels, cplx alpha) {
    Eigen::VectorXcd psi(levels);
    cplx c = std::exp(-0.5 * std::norm(alpha));
    for (int n = 0; n < levels; ++n) {
        psi(n) = c;
        c *= alpha / std::sqrt(n + 1.0);
    }
    return pure(psi);
}

}  // namespace doubled
}  // namespace decohist
