// bath.hpp - exact Gaussian dynamics of a particle linearly coupled to N
// harmonic oscillators, used to validate the Fokker-Planck limit

#pragma once

#include "decohist/types.hpp"

#include <vector>

namespace decohist {

enum class FrequencyGrid { Linear, GaussLegendre };

struct BathSpec {
    std::size_t N{0};
    std::vector<double> masses;
    std::vector<double> frequencies;
    std::vector<double> couplings;
    double cutoff{0.0};
    double gamma{0.0};        // target drag: J(w) = 2 m gamma w
    double counterterm{0.0};  // delta omega^2 = sum c_n^2 / (m m_n w_n^2)
    double system_mass{1.0};
    FrequencyGrid grid{FrequencyGrid::Linear};

    void validate() const;
    // First return of the discrete bath for a uniform grid, 2 pi N / cutoff.
    double recurrence_time() const;
};

// Mean and covariance over z = (x, p, q_1, p_1, ..., q_N, p_N), or over the
// system pair (x, p) alone when the series was propagated in reduced mode.
struct CovarianceSystem {
    double t{0.0};
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct CovarianceSeries {
    std::vector<CovarianceSystem> samples;
    bool full{true};
    bool recurrence_warning{false};
};

struct ClosedSystemOptions {
    bool full{false};         // keep the whole 2(1+N) covariance per sample
    bool counterterm{true};   // include m delta_omega^2 x^2 / 2
};

namespace bath {

BathSpec discretize_ohmic_bath(double gamma, double cutoff, std::size_t N, double system_mass,
                               FrequencyGrid grid = FrequencyGrid::Linear, double oscillator_mass = 1.0);

// Linear generator A with dz/dt = A z.
Eigen::MatrixXd generator(const ModelParams& model, const BathSpec& bath, bool counterterm = true);
// Quadratic Hamiltonian matrix, H = z^T Hm z / 2.
Eigen::MatrixXd hamiltonian_matrix(const ModelParams& model, const BathSpec& bath, bool counterterm = true);
// exp(A t) by normal modes.
Eigen::MatrixXd transfer_matrix(const ModelParams& model, const BathSpec& bath, double t, bool counterterm = true);

// Factorized initial state: system Gaussian times a classical thermal bath.
CovarianceSystem initial_state(const GaussianState& state, const BathSpec& bath, double kT_A);

CovarianceSeries evolve_gaussian_closed_system(const ModelParams& model, const BathSpec& bath, double kT_A,
                                               const GaussianState& state, double tau, std::size_t samples,
                                               const ClosedSystemOptions& opt = {});

std::vector<GaussianState> reduced_moments(const CovarianceSeries& series);

double quadratic_energy(const Eigen::MatrixXd& Hm, const CovarianceSystem& s);

// Fokker-Planck-limit momentum variance of a free particle.
double ou_momentum_variance(double sigma_pp0, double mass, double gamma, double kT, double t);

}  // namespace bath
}  // namespace decohist
