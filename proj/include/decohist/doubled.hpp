// doubled.hpp - truncated Fock-space construction of the doubled commuting variables

#pragma once

#include "decohist/histories.hpp"
#include "decohist/types.hpp"

#include <utility>

namespace decohist {

struct FockTruncation {
    int levels{16};
    double mass{1.0};
    double omega_ref{1.0};
    double hbar{1.0};

    // min_levels is 4 for the doubled construction (a safe subspace must exist).
    void validate(int min_levels = 4) const;
};

// All operators act on the levels^2 dimensional space A (x) B. The A-factor
// pair is (x, p), the auxiliary B-factor pair is (y, k).
struct DoubledOperators {
    FockTruncation trunc;
    OperatorMatrix X, Q, K, P;
    OperatorMatrix x, p, y, k;  // x (x) 1, p (x) 1, 1 (x) y, 1 (x) k
    OperatorMatrix safe_projector;
    int safe_levels{0};
};

struct ComplexPair {
    OperatorMatrix Xc, Pc, Hc;
};

namespace doubled {

Eigen::MatrixXcd lowering(int levels);

// x = sqrt(hbar/2 m w)(a + a^dag), p = i sqrt(m w hbar/2)(a^dag - a)
std::pair<OperatorMatrix, OperatorMatrix> build_canonical_pair(const FockTruncation& trunc);

// safe_levels = 0 keeps every level but the top one of each factor.
DoubledOperators build_doubled_operators(const FockTruncation& trunc, int safe_levels = 0);

ComplexPair build_complex_pair(const FockTruncation& trunc);

// Projector onto the lowest `keep` levels of each factor.
Eigen::MatrixXcd safe_projector(int levels, int keep);

Eigen::MatrixXcd commutator(const Eigen::MatrixXcd& A, const Eigen::MatrixXcd& B);
// S C S for the diagonal safe projector, by masking.
Eigen::MatrixXcd restrict_to_safe(const Eigen::MatrixXcd& C, int levels, int keep);

// <(X - x)^2> and <(P - p)^2> on rho_A (x) rho_B. rho_A defaults to the vacuum.
std::pair<double, double> closeness_terms(const DoubledOperators& ops, const OperatorMatrix& rho_B,
                                          const OperatorMatrix* rho_A = nullptr);
double closeness_product(const DoubledOperators& ops, const OperatorMatrix& rho_B,
                         const OperatorMatrix* rho_A = nullptr);

double expectation(const Eigen::MatrixXcd& op, const Eigen::MatrixXcd& rho);

// Single-factor density matrices in the Fock basis.
OperatorMatrix vacuum_state(int levels);
OperatorMatrix thermal_state(int levels, double nbar);
OperatorMatrix squeezed_vacuum(int levels, double r);
OperatorMatrix coherent_state(int levels, std::complex<double> alpha);

}  // namespace doubled
}  // namespace decohist
