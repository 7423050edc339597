#include "decohist/paths.hpp"

#include "decohist/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace decohist::paths {

namespace {

const cplx I{0.0, 1.0};

Linear combine(std::initializer_list<std::pair<const Linear*, double>> terms) {
    std::map<int, double> acc;
    for (const auto& [L, w] : terms)
        for (const auto& [idx, c] : *L) acc[idx] += w * c;
    Linear out;
    for (const auto& [idx, c] : acc)
        if (c != 0.0) out.emplace_back(idx, c);
    return out;
}

// Per-slice coefficients of the exact classical action
// S = sum_j 1/2 [k0 x_j^2 + 2 k1 x_j x_{j+1} + k0 x_{j+1}^2].
struct SliceAction {
    double k0, k1;
};

SliceAction slice_action(const ModelParams& model, double dt) {
    const double m = model.mass;
    if (model.potential == PotentialKind::Free || model.omega == 0.0) return {m / dt, -m / dt};
    const double w = model.omega;
    return {m * w * std::cos(w * dt) / std::sin(w * dt), -m * w / std::sin(w * dt)};
}

void check_inputs(const ModelParams& model, const HistorySpec& hist, const PathQuadrature& quad) {
    model.validate();
    hist.validate();
    if (!model.is_linear())
        throw std::invalid_argument("gaussian paths: potential '" + to_string(model.potential) +
                                    "' is not quadratic; use the phase-space or Langevin modules");
    if (hist.window != WindowShape::Gaussian)
        throw std::invalid_argument("gaussian paths: sharp windows are not Gaussian-integrable");
    if (quad.slices < 2) throw std::invalid_argument("gaussian paths: need at least 2 slices");
    const double dt = hist.tau / quad.slices;
    if (model.potential == PotentialKind::Harmonic && model.omega * dt >= 0.5 * std::acos(-1.0)) {
        const int suggest = static_cast<int>(std::ceil(4.0 * model.omega * hist.tau / std::acos(-1.0))) + 1;
        throw NumericalError("gaussian paths: omega*dt too large for the slice action; use slices >= " +
                             std::to_string(suggest));
    }
}

std::vector<int> snap_times(const HistorySpec& hist, int M, std::vector<double>& snapped) {
    const double dt = hist.tau / M;
    std::vector<int> out;
    for (double t : hist.times) {
        const int j = static_cast<int>(std::lround(t / dt));
        if (j < 1 || j > M || (!out.empty() && j <= out.back()))
            throw std::invalid_argument("gaussian paths: projection times collide after snapping to " +
                                        std::to_string(M) + " slices; increase slices");
        out.push_back(j);
        snapped.push_back(j * dt);
    }
    return out;
}

void add_action(FormBuilder& fb, const std::vector<Linear>& path, double sign, const SliceAction& s,
                double hbar) {
    const cplx c = sign * I / hbar;
    for (std::size_t j = 0; j + 1 < path.size(); ++j) {
        fb.add_product(path[j], path[j], 0.5 * s.k0 * c);
        fb.add_product(path[j], path[j + 1], s.k1 * c);
        fb.add_product(path[j + 1], path[j + 1], 0.5 * s.k0 * c);
    }
}

// Fokker-Planck influence: phase sign*(i/hbar)(-m gamma) int (a-a') d(a+a')/dt,
// damping -(2 m gamma kT/hbar^2) int (a-a')^2
void add_influence(FormBuilder& fb, const std::vector<Linear>& a, const std::vector<Linear>& ap, double sign,
                   const ModelParams& model, const FPBath& bath, double dt) {
    const double m = model.mass;
    const double hbar = model.hbar;
    const std::size_t n = a.size();
    std::vector<Linear> diff(n), sum(n);
    for (std::size_t j = 0; j < n; ++j) {
        diff[j] = combine({{&a[j], 1.0}, {&ap[j], -1.0}});
        sum[j] = combine({{&a[j], 1.0}, {&ap[j], 1.0}});
    }
    if (bath.gamma > 0.0) {
        const cplx c = sign * (I / hbar) * (-m * bath.gamma);
        for (std::size_t j = 0; j + 1 < n; ++j) {
            const Linear mid = combine({{&diff[j], 0.5}, {&diff[j + 1], 0.5}});
            const Linear step = combine({{&sum[j + 1], 1.0}, {&sum[j], -1.0}});
            fb.add_product(mid, step, c);
        }
    }
    const double noise = 2.0 * m * bath.gamma * bath.kT / (hbar * hbar);
    if (noise > 0.0) {
        for (std::size_t j = 0; j < n; ++j) {
            const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
            fb.add_product(diff[j], diff[j], -noise * w * dt);
        }
    }
}

// log rho(a, a') for a Gaussian state, written in u = (a+a')/2, xi = a - a'.
void add_density(FormBuilder& fb, const Linear& a, const Linear& ap, const GaussianState& s, double hbar) {
    const Linear u = combine({{&a, 0.5}, {&ap, 0.5}});
    const Linear xi = combine({{&a, 1.0}, {&ap, -1.0}});
    const double va = s.cov(0, 0), vb = s.cov(1, 1), vc = s.cov(0, 1);
    const double mx = s.mean(0), mp = s.mean(1);
    fb.add_product(u, u, -0.5 / va);
    fb.add_linear(u, mx / va);
    fb.add_linear(xi, I * (mp - vc * mx / va) / hbar);
    fb.add_product(xi, u, I * vc / (va * hbar));
    fb.add_product(xi, xi, -(vb - vc * vc / va) / (2.0 * hbar * hbar));
}

}  // namespace

FormBuilder::FormBuilder(int variables, int gates) {
    f_.A = Eigen::MatrixXcd::Zero(variables, variables);
    f_.b0 = Eigen::VectorXcd::Zero(variables);
    f_.B = Eigen::MatrixXcd::Zero(variables, 2 * gates);
    f_.C = Eigen::MatrixXd::Zero(2 * gates, 2 * gates);
}

void FormBuilder::add_product(const Linear& L1, const Linear& L2, cplx coeff) {
    for (const auto& [i, a] : L1)
        for (const auto& [j, b] : L2) {
            f_.A(i, j) -= coeff * a * b;
            f_.A(j, i) -= coeff * a * b;
        }
}

void FormBuilder::add_linear(const Linear& L, cplx coeff) {
    for (const auto& [i, a] : L) f_.b0(i) += coeff * a;
}

void FormBuilder::add_gate(const Linear& L, int col, double delta) {
    const double w = 1.0 / (delta * delta);
    add_product(L, L, -0.5 * w);
    for (const auto& [i, a] : L) f_.B(i, col) += w * a;
    f_.C(col, col) += w;
}

QuadraticForm FormBuilder::finish() && { return std::move(f_); }

GaussianState default_rho_B(const ModelParams& model, double omega_ref) {
    if (!(omega_ref > 0.0)) throw std::invalid_argument("default_rho_B: omega_ref must be > 0");
    return GaussianState::ground(model.mass, omega_ref, model.hbar);
}

QuadraticForm assemble_sqt_form(const ModelParams& model, const FPBath& bath, const HistorySpec& hist,
                                const PathQuadrature& quad, const GaussianState& rho_A) {
    check_inputs(model, hist, quad);
    bath.validate();
    rho_A.validate(model.hbar);
    const int M = quad.slices;
    const double dt = hist.tau / M;
    std::vector<double> snapped;
    const auto gate_slices = snap_times(hist, M, snapped);
    const int g = static_cast<int>(gate_slices.size());

    // z = (u_0..u_M, xi_0..xi_{M-1}); xi_M = 0 closes the trace
    const int n = 2 * M + 1;
    std::vector<Linear> x(M + 1), xp(M + 1);
    std::vector<std::string> names;
    for (int j = 0; j <= M; ++j) names.push_back("u" + std::to_string(j));
    for (int j = 0; j < M; ++j) names.push_back("xi" + std::to_string(j));
    for (int j = 0; j <= M; ++j) {
        if (j < M) {
            x[j] = {{j, 1.0}, {M + 1 + j, 0.5}};
            xp[j] = {{j, 1.0}, {M + 1 + j, -0.5}};
        } else {
            x[j] = xp[j] = {{j, 1.0}};
        }
    }

    FormBuilder fb(n, g);
    const SliceAction s = slice_action(model, dt);
    add_action(fb, x, +1.0, s, model.hbar);
    add_action(fb, xp, -1.0, s, model.hbar);
    add_influence(fb, x, xp, +1.0, model, bath, dt);
    add_density(fb, x[0], xp[0], rho_A, model.hbar);
    for (int k = 0; k < g; ++k) {
        fb.add_gate(x[gate_slices[k]], k, hist.delta);
        fb.add_gate(xp[gate_slices[k]], g + k, hist.delta);
    }
    QuadraticForm f = std::move(fb).finish();
    f.kind = "sqt";
    f.slices = M;
    f.dt = dt;
    f.gate_slices = gate_slices;
    f.snapped_times = snapped;
    f.variable_names = std::move(names);
    return f;
}

QuadraticForm assemble_dqt_form(const ModelParams& model, const FPBath& bathA, const FPBath& bathB,
                                const HistorySpec& hist, const PathQuadrature& quad,
                                const GaussianState& rho_A, const GaussianState& rho_B) {
    check_inputs(model, hist, quad);
    bathA.validate();
    bathB.validate();
    rho_A.validate(model.hbar);
    rho_B.validate(model.hbar);
    const int M = quad.slices;
    const double dt = hist.tau / M;
    std::vector<double> snapped;
    const auto gate_slices = snap_times(hist, M, snapped);
    const int g = static_cast<int>(gate_slices.size());

    // z = (X_0..X_M, X'_0..X'_{M-1}, Y_0..Y_M, v_0..v_{M-1}) with X'_M = X_M, v_M = 0.
    // x = X - y, x' = X' - y', y = Y + v/2, y' = Y - v/2.
    const int oXp = M + 1, oY = 2 * M + 1, oV = 3 * M + 2;
    const int n = 4 * M + 2;
    std::vector<std::string> names;
    for (int j = 0; j <= M; ++j) names.push_back("X" + std::to_string(j));
    for (int j = 0; j < M; ++j) names.push_back("Xp" + std::to_string(j));
    for (int j = 0; j <= M; ++j) names.push_back("Y" + std::to_string(j));
    for (int j = 0; j < M; ++j) names.push_back("v" + std::to_string(j));

    std::vector<Linear> X(M + 1), Xp(M + 1), x(M + 1), xp(M + 1), y(M + 1), yp(M + 1);
    for (int j = 0; j <= M; ++j) {
        X[j] = {{j, 1.0}};
        Xp[j] = j < M ? Linear{{oXp + j, 1.0}} : Linear{{j, 1.0}};
        if (j < M) {
            y[j] = {{oY + j, 1.0}, {oV + j, 0.5}};
            yp[j] = {{oY + j, 1.0}, {oV + j, -0.5}};
        } else {
            y[j] = yp[j] = {{oY + j, 1.0}};
        }
        x[j] = combine({{&X[j], 1.0}, {&y[j], -1.0}});
        xp[j] = combine({{&Xp[j], 1.0}, {&yp[j], -1.0}});
    }

    FormBuilder fb(n, g);
    const SliceAction s = slice_action(model, dt);
    add_action(fb, x, +1.0, s, model.hbar);
    add_action(fb, xp, -1.0, s, model.hbar);
    add_action(fb, y, -1.0, s, model.hbar);
    add_action(fb, yp, +1.0, s, model.hbar);
    add_influence(fb, x, xp, +1.0, model, bathA, dt);
    // the auxiliary system carries the wrong-sign action, hence the conjugate influence functional
    add_influence(fb, y, yp, -1.0, model, bathB, dt);
    add_density(fb, x[0], xp[0], rho_A, model.hbar);
    add_density(fb, y[0], yp[0], rho_B, model.hbar);
    for (int k = 0; k < g; ++k) {
        fb.add_gate(X[gate_slices[k]], k, hist.delta);
        fb.add_gate(Xp[gate_slices[k]], g + k, hist.delta);
    }
    QuadraticForm f = std::move(fb).finish();
    f.kind = "dqt";
    f.slices = M;
    f.dt = dt;
    f.gate_slices = gate_slices;
    f.snapped_times = snapped;
    f.variable_names = std::move(names);
    return f;
}

GaussianEvaluator::GaussianEvaluator(const QuadraticForm& form) {
    const Eigen::Index n = form.dim();
    if (n == 0) throw std::invalid_argument("GaussianEvaluator: empty form");
    if (!form.A.allFinite() || !form.b0.allFinite() || !form.B.allFinite())
        throw NumericalError("gaussian paths: non-finite quadratic form");

    // Convergence of the Gaussian integral needs Re A >= 0.
    const Eigen::MatrixXd re = form.A.real();
    const double scale = std::max(re.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(re);
    if (ldlt.vectorD().minCoeff() < -1e-10 * scale)
        throw NumericalError("gaussian paths: real part of the quadratic form is indefinite "
                             "(discretization too coarse; try more slices)");

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(form.A);
    rcond_ = lu.rcond();
    if (!(rcond_ > 1e3 * std::numeric_limits<double>::epsilon()))
        throw NumericalError("gaussian paths: quadratic form is near-singular (rcond " + std::to_string(rcond_) +
                             "); try more slices or wider gates");
    const Eigen::VectorXcd Ab = lu.solve(form.b0);
    const Eigen::MatrixXcd AB = lu.solve(form.B);
    e0_ = 0.5 * form.b0.transpose() * Ab;
    g_ = form.B.transpose() * Ab;
    H_ = form.B.transpose() * AB - form.C.cast<cplx>();
}

cplx GaussianEvaluator::log_weight(const Eigen::VectorXd& centers) const {
    if (centers.size() != g_.size()) throw std::invalid_argument("log_weight: wrong number of gate centres");
    const Eigen::VectorXcd c = centers.cast<cplx>();
    return e0_ + g_.cwiseProduct(c).sum() + 0.5 * cplx(c.transpose() * H_ * c);
}

DecoherenceMatrix evaluate_gaussian_dfun(const QuadraticForm& form, const HistorySpec& hist, unsigned threads) {
    hist.validate();
    const int g = form.gates();
    if (static_cast<std::size_t>(g) != hist.times.size())
        throw std::invalid_argument("evaluate_gaussian_dfun: history does not match the form");
    const GaussianEvaluator ev(form);
    const std::size_t count = hist.history_count();
    std::vector<std::vector<std::size_t>> idx(count);
    for (std::size_t h = 0; h < count; ++h) idx[h] = hist.decode(h);

    Eigen::MatrixXcd L(count, count);
    parallel_for(count, threads, [&](std::size_t a) {
        Eigen::VectorXd c(2 * g);
        for (std::size_t b = 0; b < count; ++b) {
            for (int k = 0; k < g; ++k) {
                c(k) = hist.centers[k][idx[a][k]];
                c(g + k) = hist.centers[k][idx[b][k]];
            }
            L(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = ev.log_weight(c);
        }
    });
    const double shift = L.real().maxCoeff();
    Eigen::MatrixXcd D = (L.array() - shift).exp().matrix();
    const cplx total = D.diagonal().sum();
    if (!std::isfinite(total.real()) || !(total.real() > 0.0))
        throw NumericalError("evaluate_gaussian_dfun: diagonal weights vanish on the centre grid; "
                             "the grid does not cover the state");
    D /= total.real();

    DecoherenceMatrix out;
    out.entries = std::move(D);
    out.times = form.snapped_times;
    out.scale = std::exp(cplx(-shift, 0.0)) / total.real();
    out.history_index.resize(count);
    for (std::size_t h = 0; h < count; ++h) out.history_index[h] = hist.label(h);
    return out;
}

Eigen::MatrixXd richardson_error(const DecoherenceMatrix& fine, const DecoherenceMatrix& coarse) {
    if (fine.size() != coarse.size()) throw std::invalid_argument("richardson_error: size mismatch");
    return (fine.entries - coarse.entries).cwiseAbs().cwiseMax(1e-13);
}

}  // namespace decohist::paths
