// langevin.hpp - Monte Carlo history probabilities from Langevin trajectories
// with Wigner or Husimi initial weights

#pragma once

#include "decohist/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace decohist {

enum class InitialKind { WignerGaussian, Husimi };

struct InitialWeight {
    InitialKind kind{InitialKind::WignerGaussian};
    double sigma_x{0.0};  // Husimi smearing widths
    double sigma_p{0.0};

    static InitialWeight wigner() { return {}; }
    // Minimum-uncertainty smearing, sigma_p = hbar / (2 sigma_x).
    static InitialWeight husimi(double sigma_x, double hbar);
};

struct TrajectoryEnsemble {
    std::size_t count{0};
    std::uint64_t seed{0};
    std::vector<Eigen::Vector2d> initial;  // (x0, p0)
    std::vector<std::uint64_t> sub_seeds;  // noise stream per trajectory
    std::vector<double> weights;           // all 1
};

struct LangevinParams {
    ModelParams model;
    double gamma{0.0};
    double kT{0.0};
    double tau{1.0};
    double dt{1e-3};
};

// Positions and momenta at the recorded times, row k = trajectory k.
struct TrajectorySet {
    std::vector<double> times;
    Eigen::MatrixXd x;
    Eigen::MatrixXd p;
    std::size_t count() const noexcept { return static_cast<std::size_t>(x.rows()); }
};

struct HistoryProbabilities {
    std::vector<std::string> labels;
    std::vector<double> estimates;
    std::vector<double> std_errors;
    std::size_t K{0};

    double total() const;
};

struct ComparisonSetup {
    ModelParams model;
    double gamma{0.5};
    double kT_A{1.0};
    double kT_B{0.01};
    GaussianState state;
    double husimi_sigma_x{0.0};  // 0 picks sqrt(hbar / 2 m omega) for harmonic, sqrt(state Sigma_xx) otherwise
    HistorySpec hist;
    std::size_t K{10000};
    std::uint64_t seed{1};
    double dt{1e-3};
    unsigned threads{1};
};

struct ComparisonReport {
    HistoryProbabilities sqt;
    HistoryProbabilities dqt;
    double tv_distance{0.0};
    double max_z{0.0};  // largest |p_sqt - p_dqt| / combined standard error
};

namespace langevin {

// splitmix64 finalizer, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// White-noise force samples with variance 4 m gamma kT / dt per step.
class NoiseStream {
public:
    NoiseStream(std::uint64_t seed, double variance);
    double next();

private:
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    double scale_;
};

double noise_variance(const ModelParams& model, double gamma, double kT, double dt);

TrajectoryEnsemble sample_initial(const GaussianState& state, const InitialWeight& weight, std::size_t K,
                                  std::uint64_t seed, double hbar);

// Largest admissible step: min(1/(20 gamma), period/50) for harmonic models.
double max_stable_dt(const ModelParams& model, double gamma);

// Integrates m X'' + 2 m gamma X' + V'(X) = eta and records (X, P) at
// record_times (ascending, within (0, tau]; t = 0 is always recorded first).
TrajectorySet simulate_langevin(const TrajectoryEnsemble& ens, const LangevinParams& params,
                                const std::vector<double>& record_times, unsigned threads = 1);

HistoryProbabilities history_probabilities_mc(const TrajectorySet& trajs, const HistorySpec& hist);

ComparisonReport compare_sqt_dqt(const ComparisonSetup& setup);

void write_trajectories_csv(const TrajectorySet& set, const std::string& path, std::size_t max_trajectories);

}  // namespace langevin
}  // namespace decohist
