// types.hpp - shared domain types: model, bath, Gaussian states, history specs

#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace decohist {

// Raised when a computation cannot produce a trustworthy number (escaped mass,
// singular forms, stability violations). The cli maps it to exit status 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class PotentialKind { Free, Harmonic, Quartic, HarmonicPlusQuartic };

struct ModelParams {
    double mass{1.0};
    double hbar{1.0};
    PotentialKind potential{PotentialKind::Free};
    double omega{0.0};   // harmonic frequency (renormalized)
    double lambda{0.0};  // quartic coefficient, V = lambda x^4

    static ModelParams free(double m = 1.0, double hbar = 1.0);
    static ModelParams harmonic(double omega, double m = 1.0, double hbar = 1.0);
    static ModelParams quartic(double lambda, double m = 1.0, double hbar = 1.0);

    void validate() const;
    bool is_linear() const noexcept;

    double V(double x) const noexcept;
    double dV(double x) const noexcept;
    double d3V(double x) const noexcept;
    double d5V(double x) const noexcept;
};

std::string to_string(PotentialKind k);
PotentialKind potential_from_string(const std::string& s);

// Fokker-Planck limit of an ohmic bath: drag 2*gamma, diffusion 2 m gamma kT.
struct FPBath {
    double gamma{0.0};
    double kT{0.0};
    void validate() const;
};

// Phase-space mean and covariance of a Gaussian state (Wigner function).
struct GaussianState {
    Eigen::Vector2d mean{Eigen::Vector2d::Zero()};
    Eigen::Matrix2d cov{Eigen::Matrix2d::Identity()};

    static GaussianState coherent(double x0, double p0, double sigma_x, double hbar);
    // Minimum-uncertainty ground state of an oscillator of frequency omega_ref.
    static GaussianState ground(double mass, double omega_ref, double hbar);

    void validate(double hbar) const;
};

enum class WindowShape { Gaussian, Sharp };

// A coarse-grained set of position histories: gates of width delta centred on
// a grid at each projection time.
struct HistorySpec {
    double tau{1.0};
    std::vector<double> times;
    std::vector<std::vector<double>> centers;  // one grid per time
    double delta{1.0};
    WindowShape window{WindowShape::Gaussian};

    // Same centre grid at every time.
    static HistorySpec uniform(double tau, std::vector<double> times,
                               std::vector<double> grid, double delta,
                               WindowShape window = WindowShape::Gaussian);

    void validate() const;
    std::size_t history_count() const;
    // Mixed-radix decoding of a flat history index into per-time centre indices.
    std::vector<std::size_t> decode(std::size_t flat) const;
    std::string label(std::size_t flat) const;
};

// Gaussian window w(x) = exp(-x^2 / 2 delta^2); sharp window is |x| <= delta/2.
double window_weight(WindowShape shape, double offset, double delta) noexcept;

}  // namespace decohist
