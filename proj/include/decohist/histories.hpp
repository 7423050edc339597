// histories.hpp - exact decoherence functional for finite-dimensional closed systems

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <utility>
#include <vector>

namespace decohist {

using cplx = std::complex<double>;

// Dense complex square matrix. The hermitian flag is a checked hint:
// constructing with it set validates max|A - A^dag| <= 1e-12 max|A|.
class OperatorMatrix {
public:
    OperatorMatrix() = default;
    explicit OperatorMatrix(Eigen::MatrixXcd entries, bool hermitian = false);

    static OperatorMatrix hermitian(Eigen::MatrixXcd entries) {
        return OperatorMatrix(std::move(entries), true);
    }
    static OperatorMatrix identity(Eigen::Index dim);

    Eigen::Index dim() const noexcept { return m_.rows(); }
    const Eigen::MatrixXcd& matrix() const noexcept { return m_; }
    bool hermitian_flag() const noexcept { return hermitian_; }

    double hermiticity_defect() const;
    double idempotency_defect() const;

private:
    Eigen::MatrixXcd m_;
    bool hermitian_{false};
};

// Exhaustive family of orthogonal projectors used at one projection time.
struct ProjectorFamily {
    std::vector<OperatorMatrix> members;
    std::vector<std::string> labels;

    // Throws std::invalid_argument when the members are not Hermitian,
    // idempotent, mutually orthogonal and complete (all to 1e-10).
    void validate() const;

    // Spectral projectors of a Hermitian matrix, grouping eigenvalues closer than tol.
    static ProjectorFamily eigenprojectors(const OperatorMatrix& A, double tol = 1e-9);
    // Projectors onto computational basis vectors |0>, |1>, ...
    static ProjectorFamily basis(Eigen::Index dim);
};

struct DecoherenceMatrix {
    std::vector<std::string> history_index;
    Eigen::MatrixXcd entries;
    std::vector<double> times;
    // Factor already applied to the entries (1 for exact functionals;
    // the empirical normalisation for Gaussian path integrals).
    cplx scale{1.0, 0.0};

    Eigen::Index size() const noexcept { return entries.rows(); }
};

struct ConsistencyReport {
    double normalization{0.0};
    double epsilon_max{0.0};
    double additivity_defect{0.0};
    double max_imag_ratio{0.0};  // max|Im D| / max|D|
    bool decoherent{false};
    std::vector<std::pair<std::string, double>> probabilities;
};

namespace histories {

// e^{iHt/hbar} P e^{-iHt/hbar}
OperatorMatrix heisenberg_projector(const OperatorMatrix& P, const OperatorMatrix& H, double t,
                                    double hbar = 1.0);

DecoherenceMatrix decoherence_functional(const OperatorMatrix& H, const OperatorMatrix& rho,
                                         const std::vector<double>& times,
                                         const std::vector<ProjectorFamily>& families,
                                         double hbar = 1.0, unsigned threads = 1);

ConsistencyReport analyze_decoherence(const DecoherenceMatrix& D, double tol = 1e-2);

// Unitary e^{-iHt/hbar} for Hermitian H by diagonalisation.
Eigen::MatrixXcd propagator(const OperatorMatrix& H, double t, double hbar = 1.0);

void validate_density_matrix(const OperatorMatrix& rho, double tol = 1e-10);

}  // namespace histories
}  // namespace decohist
