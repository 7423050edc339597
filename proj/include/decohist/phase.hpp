// phase.hpp - phase-space grids and solvers: Liouville, Fokker-Planck with Moyal
// corrections, the traced doubled equation, Husimi smearing, momentum histories,
// and general first-order flows evolved along characteristics

#pragma once

#include "decohist/expr.hpp"
#include "decohist/histories.hpp"
#include "decohist/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace decohist {

// Real field on a periodic grid x_i = x_min + i dx, dx = (x_max - x_min)/nx
// (x_max itself excluded), likewise for p. values is row-major: index i*np + j.
struct WignerField {
    std::size_t nx{0}, np{0};
    double x_min{0.0}, x_max{0.0}, p_min{0.0}, p_max{0.0};
    std::vector<double> values;

    static WignerField zeros(std::size_t nx, std::size_t np, double x_min, double x_max, double p_min,
                             double p_max);
    WignerField like() const;  // same grid, zero values

    double dx() const noexcept { return (x_max - x_min) / static_cast<double>(nx); }
    double dp() const noexcept { return (p_max - p_min) / static_cast<double>(np); }
    double x(std::size_t i) const noexcept { return x_min + static_cast<double>(i) * dx(); }
    double p(std::size_t j) const noexcept { return p_min + static_cast<double>(j) * dp(); }
    double& at(std::size_t i, std::size_t j) { return values[i * np + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * np + j]; }

    double mass() const;
    double min() const;
    double max() const;
    std::vector<double> marginal_x() const;  // integral over p
    std::vector<double> marginal_p() const;  // integral over x
    // First and second moments of the field read as a density.
    GaussianState moments() const;
    bool same_grid(const WignerField& o) const noexcept;
    void validate() const;
};

struct EvolutionSpec {
    ModelParams model;
    double drag{0.0};             // Liouville drag gamma_L: adds 2 gamma_L d/dp (p W)
    std::optional<FPBath> bath;   // set for Fokker-Planck runs
    int moyal_order{1};           // 0, 1 or 2 Moyal terms kept (Fokker-Planck only)
    double duration{1.0};
    int steps{0};                 // 0 picks the smallest stable count
    double boundary_mass_tol{1e-4};
    bool periodic_x{false};       // skip the x-edge mass monitor
};

struct EvolutionStats {
    double initial_mass{0.0};
    double final_mass{0.0};
    double max_edge_mass{0.0};
    int steps{0};
    double dt{0.0};
};

// First-order flow dz/dt = f(z) in d <= 3 dimensions.
class Flow {
public:
    using Fn = std::function<void(const double* z, double* dz)>;

    Flow() = default;
    Flow(int dim, Fn f, std::vector<std::string> labels = {});

    int dim() const noexcept { return dim_; }
    void operator()(const double* z, double* dz) const { f_(z, dz); }
    double divergence(const double* z) const;
    const std::vector<std::string>& labels() const noexcept { return labels_; }

private:
    int dim_{0};
    Fn f_;
    std::vector<std::string> labels_;
};

struct VectorFieldSpec {
    std::vector<std::string> variables;   // configuration variable names, size d
    std::vector<std::string> components;  // expression for each f_k
    std::vector<std::string> labels;
};

enum class DistanceMetric { L1, L2 };

namespace phase {

WignerField gaussian_field(const WignerField& grid, const GaussianState& s);
// Wigner function of the even superposition of coherent states at +-x0 with
// position width sigma (momentum zero).
WignerField cat_state_field(const WignerField& grid, double x0, double sigma, double hbar);
WignerField sample_function(const WignerField& grid, const std::function<double(double, double)>& fn);

int min_stable_steps(const WignerField& grid, const EvolutionSpec& spec);

WignerField evolve_liouville(const WignerField& W0, const EvolutionSpec& spec, EvolutionStats* stats = nullptr);
WignerField evolve_fokker_planck(const WignerField& W0, const EvolutionSpec& spec,
                                 EvolutionStats* stats = nullptr);
// Traced doubled equation: Fokker-Planck without Moyal terms at kT_A + kT_B.
WignerField evolve_dqt_reduced(const WignerField& W0, const EvolutionSpec& spec, const FPBath& bathA,
                               const FPBath& bathB, EvolutionStats* stats = nullptr);
// Heisenberg-picture evolution of a phase-space symbol under the adjoint
// Fokker-Planck generator (no normalization or edge checks).
WignerField evolve_adjoint(const WignerField& A0, const EvolutionSpec& spec);

WignerField husimi_smear(const WignerField& W, double sigma_x, double sigma_p);
double wigner_distance(const WignerField& a, const WignerField& b, DistanceMetric metric);
// Relative norm of the nonzero x-Fourier modes; 0 iff W does not depend on x.
double momentum_coherence_norm(const WignerField& W);

struct MomentumWindows {
    std::vector<double> centers;
    double delta{1.0};
    WindowShape shape{WindowShape::Sharp};
};

// Two-time momentum histories (t1 = 0, t2 = t) for a linear model with a
// Fokker-Planck environment. The x direction is treated as periodic.
DecoherenceMatrix momentum_history_dfun(const WignerField& W0, const ModelParams& model, const FPBath& bath,
                                        double t, const MomentumWindows& windows, int steps = 0);

Flow hamiltonian_flow(const ModelParams& model, double drag = 0.0);
Flow build_general_dqt_flow(const VectorFieldSpec& field);

std::vector<double> integrate_flow(const Flow& flow, std::vector<double> z0, double t, double rtol = 1e-11,
                                   double atol = 1e-13);

// W(z, t) = W0(Phi_{-t} z) exp(-int div f) per grid node, for a 2-d flow.
WignerField evolve_characteristics(const std::function<double(double, double)>& W0, const WignerField& grid,
                                   const Flow& flow, double t);

// Classical history weights of weighted sample points pushed through the flow;
// gates act on coordinate 0. Off-diagonals are window overlaps only.
DecoherenceMatrix flow_history_dfun(const Flow& flow, const std::vector<std::vector<double>>& points,
                                    const std::vector<double>& weights, const HistorySpec& hist);

void write_csv(const WignerField& W, const std::string& path);
void write_binary(const WignerField& W, const std::string& path);
WignerField read_binary(const std::string& path);

std::string fft_library_version();

}  // namespace phase
}  // namespace decohist
