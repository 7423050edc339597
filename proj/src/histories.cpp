#include "decohist/histories.hpp"

#include "decohist/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace decohist {

OperatorMatrix::OperatorMatrix(Eigen::MatrixXcd entries, bool hermitian)
    : m_(std::move(entries)), hermitian_(hermitian) {
    if (m_.rows() != m_.cols() || m_.rows() == 0)
        throw std::invalid_argument("OperatorMatrix: must be square and non-empty");
    if (!m_.allFinite()) throw std::invalid_argument("OperatorMatrix: non-finite entries");
    if (hermitian_) {
        const double scale = m_.cwiseAbs().maxCoeff();
        if (hermiticity_defect() > 1e-12 * std::max(scale, 1e-300))
            throw std::invalid_argument("OperatorMatrix: flagged Hermitian but A != A^dag");
    }
}

OperatorMatrix OperatorMatrix::identity(Eigen::Index dim) {
    return OperatorMatrix(Eigen::MatrixXcd::Identity(dim, dim), true);
}

double OperatorMatrix::hermiticity_defect() const {
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
}

double OperatorMatrix::idempotency_defect() const {
    return (m_ * m_ - m_).cwiseAbs().maxCoeff();
}

void ProjectorFamily::validate() const {
    if (members.empty()) throw std::invalid_argument("ProjectorFamily: no members");
    if (labels.size() != members.size())
        throw std::invalid_argument("ProjectorFamily: one label per member required");
    const Eigen::Index n = members.front().dim();
    Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(n, n);
    for (std::size_t a = 0; a < members.size(); ++a) {
        const auto& P = members[a].matrix();
        if (P.rows() != n) throw std::invalid_argument("ProjectorFamily: dimension mismatch");
        if (members[a].hermiticity_defect() > 1e-10)
            throw std::invalid_argument("ProjectorFamily: member '" + labels[a] + "' not Hermitian");
        if (members[a].idempotency_defect() > 1e-10)
            throw std::invalid_argument("ProjectorFamily: member '" + labels[a] + "' not idempotent");
        for (std::size_t b = a + 1; b < members.size(); ++b) {
            if ((P * members[b].matrix()).cwiseAbs().maxCoeff() > 1e-10)
                throw std::invalid_argument("ProjectorFamily: members '" + labels[a] + "' and '" +
                                            labels[b] + "' not orthogonal");
        }
        sum += P;
    }
    if ((sum - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("ProjectorFamily: members do not sum to the identity");
}

ProjectorFamily ProjectorFamily::eigenprojectors(const OperatorMatrix& A, double tol) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(A.matrix());
    if (es.info() != Eigen::Success) throw std::runtime_error("eigenprojectors: eigensolver failed");
    ProjectorFamily fam;
    const auto& ev = es.eigenvalues();
    const auto& V = es.eigenvectors();
    Eigen::Index start = 0;
    while (start < ev.size()) {
        Eigen::Index end = start + 1;
        while (end < ev.size() && ev(end) - ev(end - 1) < tol) ++end;
        const auto block = V.middleCols(start, end - start);
        fam.members.emplace_back(block * block.adjoint(), true);
        fam.labels.push_back("E" + std::to_string(fam.labels.size()));
        start = end;
    }
    return fam;
}

ProjectorFamily ProjectorFamily::basis(Eigen::Index dim) {
    ProjectorFamily fam;
    for (Eigen::Index i = 0; i < dim; ++i) {
        Eigen::MatrixXcd P = Eigen::MatrixXcd::Zero(dim, dim);
        P(i, i) = 1.0;
        fam.members.emplace_back(std::move(P), true);
        fam.labels.push_back(std::to_string(i));
    }
    return fam;
}

namespace histories {

namespace {

void require_hermitian(const OperatorMatrix& H, const char* what) {
    const double scale = std::max(H.matrix().cwiseAbs().maxCoeff(), 1e-300);
    if (H.hermiticity_defect() > 1e-12 * scale)
        throw std::invalid_argument(std::string(what) + ": matrix is not Hermitian");
}

}  // namespace

Eigen::MatrixXcd propagator(const OperatorMatrix& H, double t, double hbar) {
    require_hermitian(H, "propagator");
    const Eigen::MatrixXcd Hs = 0.5 * (H.matrix() + H.matrix().adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Hs);
    if (es.info() != Eigen::Success) throw std::runtime_error("propagator: eigensolver failed");
    Eigen::VectorXcd phases(es.eigenvalues().size());
    for (Eigen::Index i = 0; i < phases.size(); ++i)
        phases(i) = std::exp(cplx(0.0, -es.eigenvalues()(i) * t / hbar));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

OperatorMatrix heisenberg_projector(const OperatorMatrix& P, const OperatorMatrix& H, double t,
                                    double hbar) {
    if (P.dim() != H.dim()) throw std::invalid_argument("heisenberg_projector: dimension mismatch");
    require_hermitian(H, "heisenberg_projector(H)");
    if (P.idempotency_defect() > 1e-8 || P.hermiticity_defect() > 1e-8)
        throw std::invalid_argument("heisenberg_projector: P is not a Hermitian projector");
    if (t == 0.0) return P;
    const Eigen::MatrixXcd U = propagator(H, t, hbar);
    Eigen::MatrixXcd Pt = U.adjoint() * P.matrix() * U;
    Pt = 0.5 * (Pt + Pt.adjoint()).eval();
    return OperatorMatrix(std::move(Pt), true);
}

void validate_density_matrix(const OperatorMatrix& rho, double tol) {
    if (rho.hermiticity_defect() > tol)
        throw std::invalid_argument("density matrix: not Hermitian");
    const cplx tr = rho.matrix().trace();
    if (std::abs(tr - 1.0) > tol)
        throw std::invalid_argument("density matrix: trace differs from 1");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho.matrix() + rho.matrix().adjoint()),
                                                       Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol)
        throw std::invalid_argument("density matrix: not positive semidefinite");
}

DecoherenceMatrix decoherence_functional(const OperatorMatrix& H, const OperatorMatrix& rho,
                                         const std::vector<double>& times,
                                         const std::vector<ProjectorFamily>& families, double hbar,
                                         unsigned threads) {
    if (times.size() != families.size())
        throw std::invalid_argument("decoherence_functional: need one projector family per time");
    if (times.empty()) throw std::invalid_argument("decoherence_functional: no projection times");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1]))
            throw std::invalid_argument("decoherence_functional: times must be strictly increasing");
    if (rho.dim() != H.dim()) throw std::invalid_argument("decoherence_functional: dimension mismatch");
    require_hermitian(H, "decoherence_functional(H)");
    validate_density_matrix(rho);
    for (const auto& f : families) f.validate();

    // Heisenberg-picture projectors, one list per time
    std::vector<std::vector<Eigen::MatrixXcd>> heis(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        const Eigen::MatrixXcd U = propagator(H, times[k], hbar);
        for (const auto& P : families[k].members) heis[k].push_back(U.adjoint() * P.matrix() * U);
    }

    std::size_t count = 1;
    for (const auto& f : families) count *= f.members.size();

    DecoherenceMatrix D;
    D.times = times;
    D.history_index.resize(count);
    // Class operators C = P_n(t_n) ... P_1(t_1); first time is the slowest digit.
    std::vector<Eigen::MatrixXcd> chains(count);
    std::vector<Eigen::MatrixXcd> chains_rho(count);
    for (std::size_t h = 0; h < count; ++h) {
        std::size_t rem = h;
        std::vector<std::size_t> idx(times.size());
        for (std::size_t k = times.size(); k-- > 0;) {
            idx[k] = rem % families[k].members.size();
            rem /= families[k].members.size();
        }
        Eigen::MatrixXcd C = heis[0][idx[0]];
        std::string label = families[0].labels[idx[0]];
        for (std::size_t k = 1; k < times.size(); ++k) {
            C = (heis[k][idx[k]] * C).eval();
            label += "," + families[k].labels[idx[k]];
        }
        chains_rho[h] = C * rho.matrix();
        chains[h] = std::move(C);
        D.history_index[h] = std::move(label);
    }

    D.entries.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(count));
    parallel_for(count, threads, [&](std::size_t a) {
        for (std::size_t b = 0; b < count; ++b) {
            // Tr(C_a rho C_b^dag) = sum_ij (C_a rho)_ij conj(C_b)_ij
            const auto& L = chains_rho[a];
            const auto& R = chains[b];
            cplx acc = 0.0;
            for (Eigen::Index j = 0; j < L.cols(); ++j)
                for (Eigen::Index i = 0; i < L.rows(); ++i) acc += L(i, j) * std::conj(R(i, j));
            D.entries(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = acc;
        }
    });
    return D;
}

ConsistencyReport analyze_decoherence(const DecoherenceMatrix& D, double tol) {
    ConsistencyReport r;
    const auto& E = D.entries;
    const Eigen::Index n = E.rows();
    r.normalization = E.sum().real();
    const double maxabs = n > 0 ? E.cwiseAbs().maxCoeff() : 0.0;
    r.max_imag_ratio = maxabs > 0.0 ? E.imag().cwiseAbs().maxCoeff() / maxabs : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::string label =
            static_cast<std::size_t>(i) < D.history_index.size() ? D.history_index[i] : std::to_string(i);
        r.probabilities.emplace_back(label, E(i, i).real());
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            // p(i u j) - p(i) - p(j) = 2 Re D(i, j)
            r.additivity_defect = std::max(r.additivity_defect, std::abs(2.0 * E(i, j).real()));
            const double di = E(i, i).real();
            const double dj = E(j, j).real();
            if (di < 1e-14 || dj < 1e-14) continue;
            const double ratio = std::max(std::abs(E(i, j)), std::abs(E(j, i))) / std::sqrt(di * dj);
            r.epsilon_max = std::max(r.epsilon_max, ratio);
        }
    }
    r.decoherent = r.epsilon_max <= tol;
    return r;
}

}  // namespace histories
}  // namespace decohist
