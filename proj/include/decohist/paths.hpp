// paths.hpp - discretized Gaussian path integrals for the decoherence functional of
// linear open systems, standard (one environment) and doubled (two environments)

#pragma once

#include "decohist/histories.hpp"
#include "decohist/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace decohist {

struct PathQuadrature {
    int slices{64};
};

// Exponent -1/2 z^T A z + z^T (b0 + B c) - 1/2 c^T C c over the discretized path
// variables z, where c stacks the gate centres (first branch, then second branch).
struct QuadraticForm {
    Eigen::MatrixXcd A;
    Eigen::VectorXcd b0;
    Eigen::MatrixXcd B;
    Eigen::MatrixXd C;

    std::string kind;                // "sqt" or "dqt"
    int slices{0};
    double dt{0.0};
    std::vector<int> gate_slices;    // slice index of each projection time
    std::vector<double> snapped_times;
    std::vector<std::string> variable_names;

    Eigen::Index dim() const noexcept { return A.rows(); }
    int gates() const noexcept { return static_cast<int>(gate_slices.size()); }
};

namespace paths {

// Sparse linear functional over the path variables.
using Linear = std::vector<std::pair<int, double>>;

// Accumulates quadratic, linear and gate-coupling terms into a QuadraticForm.
class FormBuilder {
public:
    FormBuilder(int variables, int gates);

    // exponent += coeff * (L1 . z) (L2 . z)
    void add_product(const Linear& L1, const Linear& L2, cplx coeff);
    // exponent += coeff * (L . z)
    void add_linear(const Linear& L, cplx coeff);
    // Gaussian window exp(-(L.z - c_col)^2 / 2 delta^2)
    void add_gate(const Linear& L, int col, double delta);

    QuadraticForm finish() &&;

private:
    QuadraticForm f_;
};

// Default auxiliary-system state: oscillator ground state of frequency omega_ref.
GaussianState default_rho_B(const ModelParams& model, double omega_ref);

QuadraticForm assemble_sqt_form(const ModelParams& model, const FPBath& bath, const HistorySpec& hist,
                                const PathQuadrature& quad, const GaussianState& rho_A);

QuadraticForm assemble_dqt_form(const ModelParams& model, const FPBath& bathA, const FPBath& bathB,
                                const HistorySpec& hist, const PathQuadrature& quad,
                                const GaussianState& rho_A, const GaussianState& rho_B);

// Reduces a form to the log-weight E(c) = e0 + g.c + 1/2 c^T (G - C) c of a gate configuration.
class GaussianEvaluator {
public:
    explicit GaussianEvaluator(const QuadraticForm& form);

    cplx log_weight(const Eigen::VectorXd& centers) const;
    double rcond() const noexcept { return rcond_; }

private:
    cplx e0_{0.0};
    Eigen::VectorXcd g_;
    Eigen::MatrixXcd H_;  // G - C
    double rcond_{0.0};
};

// D over all centre-string pairs, normalized so the diagonal sums to 1. The
// factor applied is stored in DecoherenceMatrix::scale.
DecoherenceMatrix evaluate_gaussian_dfun(const QuadraticForm& form, const HistorySpec& hist,
                                         unsigned threads = 1);

// Entrywise error estimate from a run at M slices and one at M/2 slices,
// assuming first-order convergence. Floors at 1e-13.
Eigen::MatrixXd richardson_error(const DecoherenceMatrix& fine, const DecoherenceMatrix& coarse);

}  // namespace paths
}  // namespace decohist
