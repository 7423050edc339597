#include "decohist/types.hpp"

#include <cmath>
#include <sstream>

namespace decohist {

ModelParams ModelParams::free(double m, double hbar) {
    return ModelParams{m, hbar, PotentialKind::Free, 0.0, 0.0};
}

ModelParams ModelParams::harmonic(double omega, double m, double hbar) {
    return ModelParams{m, hbar, PotentialKind::Harmonic, omega, 0.0};
}

ModelParams ModelParams::quartic(double lambda, double m, double hbar) {
    return ModelParams{m, hbar, PotentialKind::Quartic, 0.0, lambda};
}

void ModelParams::validate() const {
    if (!(mass > 0.0)) throw std::invalid_argument("model: mass must be > 0");
    if (!(hbar > 0.0)) throw std::invalid_argument("model: hbar must be > 0");
    if (!(omega >= 0.0)) throw std::invalid_argument("model: omega must be >= 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("model: lambda must be >= 0");
}

bool ModelParams::is_linear() const noexcept {
    return potential == PotentialKind::Free || potential == PotentialKind::Harmonic;
}

double ModelParams::V(double x) const noexcept {
    switch (potential) {
        case PotentialKind::Free: return 0.0;
        case PotentialKind::Harmonic: return 0.5 * mass * omega * omega * x * x;
        case PotentialKind::Quartic: return lambda * x * x * x * x;
        case PotentialKind::HarmonicPlusQuartic:
            return 0.5 * mass * omega * omega * x * x + lambda * x * x * x * x;
    }
    return 0.0;
}

double ModelParams::dV(double x) const noexcept {
    switch (potential) {
        case PotentialKind::Free: return 0.0;
        case PotentialKind::Harmonic: return mass * omega * omega * x;
        case PotentialKind::Quartic: return 4.0 * lambda * x * x * x;
        case PotentialKind::HarmonicPlusQuartic:
            return mass * omega * omega * x + 4.0 * lambda * x * x * x;
    }
    return 0.0;
}

double ModelParams::d3V(double x) const noexcept {
    switch (potential) {
        case PotentialKind::Quartic:
        case PotentialKind::HarmonicPlusQuartic: return 24.0 * lambda * x;
        default: return 0.0;
    }
}

double ModelParams::d5V(double) const noexcept { return 0.0; }

std::string to_string(PotentialKind k) {
    switch (k) {
        case PotentialKind::Free: return "free";
        case PotentialKind::Harmonic: return "harmonic";
        case PotentialKind::Quartic: return "quartic";
        case PotentialKind::HarmonicPlusQuartic: return "harmonic_quartic";
    }
    return "free";
}

PotentialKind potential_from_string(const std::string& s) {
    if (s == "free") return PotentialKind::Free;
    if (s == "harmonic") return PotentialKind::Harmonic;
    if (s == "quartic") return PotentialKind::Quartic;
    if (s == "harmonic_quartic") return PotentialKind::HarmonicPlusQuartic;
    throw std::invalid_argument("unknown potential '" + s + "'");
}

void FPBath::validate() const {
    if (!(gamma >= 0.0)) throw std::invalid_argument("bath: gamma must be >= 0");
    if (!(kT >= 0.0)) throw std::invalid_argument("bath: kT must be >= 0");
}

GaussianState GaussianState::coherent(double x0, double p0, double sigma_x, double hbar) {
    GaussianState s;
    s.mean << x0, p0;
    const double sp = hbar / (2.0 * sigma_x);
    s.cov << sigma_x * sigma_x, 0.0, 0.0, sp * sp;
    return s;
}

GaussianState GaussianState::ground(double mass, double omega_ref, double hbar) {
    return coherent(0.0, 0.0, std::sqrt(hbar / (2.0 * mass * omega_ref)), hbar);
}

void GaussianState::validate(double hbar) const {
    if (!mean.allFinite() || !cov.allFinite())
        throw std::invalid_argument("gaussian state: non-finite entries");
    if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * cov.cwiseAbs().maxCoeff())
        throw std::invalid_argument("gaussian state: covariance not symmetric");
    if (!(cov(0, 0) > 0.0) || !(cov.determinant() > 0.0))
        throw std::invalid_argument("gaussian state: covariance not positive definite");
    if (cov.determinant() < hbar * hbar / 4.0 - 1e-12)
        throw std::invalid_argument("gaussian state: covariance violates the uncertainty bound");
}

HistorySpec HistorySpec::uniform(double tau, std::vector<double> times, std::vector<double> grid,
                                 double delta, WindowShape window) {
    HistorySpec h;
    h.tau = tau;
    h.centers.assign(times.size(), grid);
    h.times = std::move(times);
    h.delta = delta;
    h.window = window;
    return h;
}

void HistorySpec::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("history: tau must be > 0");
    if (!(delta > 0.0)) throw std::invalid_argument("history: gate width must be > 0");
    if (centers.size() != times.size())
        throw std::invalid_argument("history: need one centre grid per projection time");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!(times[k] > 0.0) || times[k] > tau * (1.0 + 1e-12))
            throw std::invalid_argument("history: projection times must lie in (0, tau]");
        if (k > 0 && !(times[k] > times[k - 1]))
            throw std::invalid_argument("history: projection times must be strictly increasing");
        if (centers[k].empty()) throw std::invalid_argument("history: empty centre grid");
        for (std::size_t j = 0; j < centers[k].size(); ++j) {
            if (!std::isfinite(centers[k][j]))
                throw std::invalid_argument("history: non-finite gate centre");
            if (j > 0 && !(centers[k][j] > centers[k][j - 1]))
                throw std::invalid_argument("history: centre grid must be strictly increasing");
        }
    }
}

std::size_t HistorySpec::history_count() const {
    std::size_t n = 1;
    for (const auto& c : centers) n *= c.size();
    return n;
}

std::vector<std::size_t> HistorySpec::decode(std::size_t flat) const {
    // first time is the slowest-varying digit
    std::vector<std::size_t> idx(centers.size());
    for (std::size_t k = centers.size(); k-- > 0;) {
        idx[k] = flat % centers[k].size();
        flat /= centers[k].size();
    }
    return idx;
}

std::string HistorySpec::label(std::size_t flat) const {
    const auto idx = decode(flat);
    std::ostringstream os;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (k) os << ',';
        os << centers[k][idx[k]];
    }
    return os.str();
}

double window_weight(WindowShape shape, double offset, double delta) noexcept {
    if (shape == WindowShape::Sharp) return std::abs(offset) <= 0.5 * delta ? 1.0 : 0.0;
    return std::exp(-offset * offset / (2.0 * delta * delta));
}

}  // namespace decohist
