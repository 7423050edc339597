#include "decohist/phase.hpp"

#include "decohist/ode.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

namespace decohist {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

// The FFTW planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

// Batched 1-d real transforms along p (each row) and along x (each column).
class Spectral {
public:
    Spectral(std::size_t nx, std::size_t np) : nx_(nx), np_(np) {
        std::vector<double> r(nx * np);
        std::vector<cplx> c(std::max(nx * (np / 2 + 1), (nx / 2 + 1) * np));
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        const int n_p = static_cast<int>(np), n_x = static_cast<int>(nx);
        const int hp = static_cast<int>(np / 2 + 1);
        std::lock_guard<std::mutex> lock(planner_mutex());
        fp_ = fftw_plan_many_dft_r2c(1, &n_p, n_x, r.data(), nullptr, 1, n_p, as_fftw(c.data()), nullptr, 1, hp,
                                     flags);
        ip_ = fftw_plan_many_dft_c2r(1, &n_p, n_x, as_fftw(c.data()), nullptr, 1, hp, r.data(), nullptr, 1, n_p,
                                     flags);
        fx_ = fftw_plan_many_dft_r2c(1, &n_x, n_p, r.data(), nullptr, n_p, 1, as_fftw(c.data()), nullptr, n_p, 1,
                                     flags);
        ix_ = fftw_plan_many_dft_c2r(1, &n_x, n_p, as_fftw(c.data()), nullptr, n_p, 1, r.data(), nullptr, n_p, 1,
                                     flags);
        if (!fp_ || !ip_ || !fx_ || !ix_) throw NumericalError("fftw: plan creation failed");
    }
    ~Spectral() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(fp_);
        fftw_destroy_plan(ip_);
        fftw_destroy_plan(fx_);
        fftw_destroy_plan(ix_);
    }
    Spectral(const Spectral&) = delete;
    Spectral& operator=(const Spectral&) = delete;

    std::size_t p_modes() const { return np_ / 2 + 1; }
    std::size_t x_modes() const { return nx_ / 2 + 1; }

    // row i, mode q at i*p_modes() + q
    void forward_p(const double* in, cplx* out) const {
        fftw_execute_dft_r2c(fp_, const_cast<double*>(in), as_fftw(out));
    }
    // destroys `in`; unnormalized
    void inverse_p(cplx* in, double* out) const { fftw_execute_dft_c2r(ip_, as_fftw(in), out); }
    // mode k, column j at k*np + j
    void forward_x(const double* in, cplx* out) const {
        fftw_execute_dft_r2c(fx_, const_cast<double*>(in), as_fftw(out));
    }
    void inverse_x(cplx* in, double* out) const { fftw_execute_dft_c2r(ix_, as_fftw(in), out); }

private:
    std::size_t nx_, np_;
    fftw_plan fp_{}, ip_{}, fx_{}, ix_{};
};

// Angular wavenumbers of the r2c half spectrum; the Nyquist mode is zeroed
// so odd derivatives stay real.
std::vector<double> half_wavenumbers(std::size_t n, double length) {
    std::vector<double> k(n / 2 + 1);
    for (std::size_t q = 0; q < k.size(); ++q) k[q] = 2.0 * kPi * static_cast<double>(q) / length;
    k.back() = 0.0;
    return k;
}

struct Coefficients {
    double drag{0.0};       // total gamma: term 2 gamma d/dp (p W)
    double diffusion{0.0};  // 2 m gamma kT
    double moyal3{0.0};     // multiplies V''' d^3/dp^3
    double moyal5{0.0};     // multiplies V^(5) d^5/dp^5
};

Coefficients coefficients(const EvolutionSpec& spec) {
    Coefficients c;
    c.drag = spec.drag;
    if (spec.bath) {
        c.drag += spec.bath->gamma;
        c.diffusion = 2.0 * spec.model.mass * spec.bath->gamma * spec.bath->kT;
        const double h2 = spec.model.hbar * spec.model.hbar;
        if (spec.moyal_order >= 1) c.moyal3 = -h2 / 24.0;
        if (spec.moyal_order >= 2) c.moyal5 = h2 * h2 / 1920.0;
    }
    return c;
}

// Method-of-lines generator of the (adjoint) Fokker-Planck-Moyal equation.
class Generator {
public:
    Generator(const WignerField& grid, const EvolutionSpec& spec, bool adjoint)
        : nx_(grid.nx), np_(grid.np), fft_(grid.nx, grid.np), adjoint_(adjoint), c_(coefficients(spec)) {
        const double sign = adjoint ? -1.0 : 1.0;
        kx_ = half_wavenumbers(nx_, grid.x_max - grid.x_min);
        kp_ = half_wavenumbers(np_, grid.p_max - grid.p_min);
        adv_x_.resize(np_);
        p_.resize(np_);
        for (std::size_t j = 0; j < np_; ++j) {
            p_[j] = grid.p(j);
            adv_x_[j] = -sign * p_[j] / spec.model.mass;
        }
        dV_.resize(nx_);
        d3V_.resize(nx_);
        d5V_.resize(nx_);
        for (std::size_t i = 0; i < nx_; ++i) {
            const double x = grid.x(i);
            dV_[i] = sign * spec.model.dV(x);
            d3V_[i] = sign * c_.moyal3 * spec.model.d3V(x);
            d5V_[i] = sign * c_.moyal5 * spec.model.d5V(x);
            if (dV_[i] != 0.0 || d3V_[i] != 0.0 || d5V_[i] != 0.0) has_force_ = true;
        }
        xs_.resize(x_size());
        ps_.resize(nx_ * fft_.p_modes());
        qs_.resize(nx_ * fft_.p_modes());
        tmp_.resize(nx_ * np_);
    }

    void apply(const double* w, double* out) {
        const std::size_t n = nx_ * np_;
        const double inv_nx = 1.0 / static_cast<double>(nx_);
        const double inv_np = 1.0 / static_cast<double>(np_);

        fft_.forward_x(w, xs_.data());
        for (std::size_t k = 0; k < fft_.x_modes(); ++k) {
            const cplx ik(0.0, kx_[k] * inv_nx);
            cplx* row = xs_.data() + k * np_;
            for (std::size_t j = 0; j < np_; ++j) row[j] *= ik * adv_x_[j];
        }
        fft_.inverse_x(xs_.data(), out);

        const bool drag = c_.drag != 0.0;
        if (!has_force_ && !drag && c_.diffusion == 0.0) return;
        fft_.forward_p(w, ps_.data());
        if (drag) {
            for (std::size_t i = 0; i < nx_; ++i)
                for (std::size_t j = 0; j < np_; ++j) tmp_[i * np_ + j] = p_[j] * w[i * np_ + j];
            fft_.forward_p(tmp_.data(), qs_.data());
        }
        const double drag_coef = (adjoint_ ? -2.0 : 2.0) * c_.drag;
        const std::size_t hp = fft_.p_modes();
        for (std::size_t i = 0; i < nx_; ++i) {
            cplx* row = ps_.data() + i * hp;
            const cplx* qrow = qs_.data() + i * hp;
            for (std::size_t q = 0; q < hp; ++q) {
                const double k = kp_[q];
                const cplx ik(0.0, k);
                const cplx ik3(0.0, -k * k * k);
                const cplx ik5(0.0, k * k * k * k * k);
                cplx mult = -c_.diffusion * k * k;
                if (has_force_) mult += dV_[i] * ik + d3V_[i] * ik3 + d5V_[i] * ik5;
                cplx v = mult * row[q];
                if (drag) v += drag_coef * ik * qrow[q];
                row[q] = v * inv_np;
            }
        }
        fft_.inverse_p(ps_.data(), tmp_.data());
        for (std::size_t idx = 0; idx < n; ++idx) out[idx] += tmp_[idx];
        if (adjoint_ && drag)
            for (std::size_t idx = 0; idx < n; ++idx) out[idx] += 2.0 * c_.drag * w[idx];
    }

private:
    std::size_t x_size() const { return fft_.x_modes() * np_; }

    std::size_t nx_, np_;
    Spectral fft_;
    bool adjoint_;
    Coefficients c_;
    bool has_force_{false};
    std::vector<double> kx_, kp_, adv_x_, p_, dV_, d3V_, d5V_, tmp_;
    std::vector<cplx> xs_, ps_, qs_;
};

void check_grid(const WignerField& g) {
    if (g.nx < 8 || g.np < 8 || g.nx % 2 || g.np % 2)
        throw std::invalid_argument("wigner field: grid sizes must be even and >= 8");
    if (!(g.x_max > g.x_min) || !(g.p_max > g.p_min))
        throw std::invalid_argument("wigner field: empty extents");
}

void validate_spec(const EvolutionSpec& spec) {
    spec.model.validate();
    if (!(spec.drag >= 0.0)) throw std::invalid_argument("evolution: drag must be >= 0");
    if (spec.bath) spec.bath->validate();
    if (spec.moyal_order < 0 || spec.moyal_order > 2)
        throw std::invalid_argument("evolution: moyal_order must be 0, 1 or 2");
    if (!(spec.duration >= 0.0) || !std::isfinite(spec.duration))
        throw std::invalid_argument("evolution: duration must be finite and >= 0");
    if (spec.steps < 0) throw std::invalid_argument("evolution: steps must be >= 0");
    if (!(spec.boundary_mass_tol > 0.0)) throw std::invalid_argument("evolution: boundary_mass_tol must be > 0");
}

double stiffness(const WignerField& g, const EvolutionSpec& spec) {
    const Coefficients c = coefficients(spec);
    const double kx = kPi / g.dx(), kp = kPi / g.dp();
    const double pmax = std::max(std::abs(g.p_min), std::abs(g.p_max));
    double f1 = 0.0, f3 = 0.0, f5 = 0.0;
    for (std::size_t i = 0; i < g.nx; ++i) {
        const double x = g.x(i);
        f1 = std::max(f1, std::abs(spec.model.dV(x)));
        f3 = std::max(f3, std::abs(spec.model.d3V(x)));
        f5 = std::max(f5, std::abs(spec.model.d5V(x)));
    }
    const double adv = pmax / spec.model.mass * kx + f1 * kp + 2.0 * c.drag * pmax * kp +
                       std::abs(c.moyal3) * f3 * kp * kp * kp + std::abs(c.moyal5) * f5 * std::pow(kp, 5);
    const double diff = c.diffusion * kp * kp + 2.0 * c.drag;
    return adv + diff;
}

constexpr double kStabilityLimit = 2.5;

double edge_mass(const WignerField& W, bool periodic_x) {
    const std::size_t bx = std::max<std::size_t>(2, W.nx / 16);
    const std::size_t bp = std::max<std::size_t>(2, W.np / 16);
    double s = 0.0;
    for (std::size_t i = 0; i < W.nx; ++i) {
        const bool xedge = !periodic_x && (i < bx || i >= W.nx - bx);
        for (std::size_t j = 0; j < W.np; ++j)
            if (xedge || j < bp || j >= W.np - bp) s += std::abs(W.at(i, j));
    }
    return s * W.dx() * W.dp();
}


WignerField run(const WignerField& W0, const EvolutionSpec& spec, bool adjoint, bool monitor,
                EvolutionStats* stats) {
    check_grid(W0);
    validate_spec(spec);
    W0.validate();
    const double initial_mass = W0.mass();
    if (monitor && std::abs(initial_mass - 1.0) > 1e-6)
        throw std::invalid_argument("evolution: initial field is not normalized (mass " +
                                    std::to_string(initial_mass) + ")");

    const double lambda = stiffness(W0, spec);
    const int need = std::max(1, static_cast<int>(std::ceil(spec.duration * lambda / kStabilityLimit)));
    const int steps = spec.steps > 0 ? spec.steps : need;
    if (spec.duration > 0.0 && steps < need)
        throw NumericalError("evolution: " + std::to_string(steps) + " steps violate the stability bound; need >= " +
                             std::to_string(need));

    auto check_edges = [&](const WignerField& W) {
        const double e = edge_mass(W, spec.periodic_x);
        if (stats) stats->max_edge_mass = std::max(stats->max_edge_mass, e);
        if (monitor && e > spec.boundary_mass_tol)
        {
            char buf[160];
            std::snprintf(buf, sizeof buf, "evolution: mass near the grid boundary (%.3g) exceeds %.3g; enlarge the domain",
                          e, spec.boundary_mass_tol);
            throw NumericalError(buf);
        }
    };
    if (stats) *stats = EvolutionStats{initial_mass, initial_mass, 0.0, steps, 0.0};
    check_edges(W0);

    WignerField W = W0;
    if (spec.duration == 0.0) return W;
    const double dt = spec.duration / steps;
    if (stats) stats->dt = dt;

    Generator L(W0, spec, adjoint);
    const std::size_t n = W.values.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), y(n);
    double* w = W.values.data();
    for (int s = 0; s < steps; ++s) {
        L.apply(w, k1.data());
        for (std::size_t i = 0; i < n; ++i) y[i] = w[i] + 0.5 * dt * k1[i];
        L.apply(y.data(), k2.data());
        for (std::size_t i = 0; i < n; ++i) y[i] = w[i] + 0.5 * dt * k2[i];
        L.apply(y.data(), k3.data());
        for (std::size_t i = 0; i < n; ++i) y[i] = w[i] + dt * k3[i];
        L.apply(y.data(), k4.data());
        for (std::size_t i = 0; i < n; ++i) w[i] += dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
        check_edges(W);
    }
    for (double v : W.values)
        if (!std::isfinite(v)) throw NumericalError("evolution: field became non-finite");
    if (stats) stats->final_mass = W.mass();
    return W;
}

double flow_divergence_fd(const Flow::Fn& f, int dim, const double* z) {
    double div = 0.0;
    double zp[3], zm[3], fp[3], fm[3];
    for (int k = 0; k < dim; ++k) {
        std::copy(z, z + dim, zp);
        std::copy(z, z + dim, zm);
        const double h = 1e-6 * std::max(1.0, std::abs(z[k]));
        zp[k] += h;
        zm[k] -= h;
        f(zp, fp);
        f(zm, fm);
        div += (fp[k] - fm[k]) / (2.0 * h);
    }
    return div;
}

}  // namespace

// ---- WignerField ----------------------------------------------------------

WignerField WignerField::zeros(std::size_t nx, std::size_t np, double x_min, double x_max, double p_min,
                               double p_max) {
    WignerField w;
    w.nx = nx;
    w.np = np;
    w.x_min = x_min;
    w.x_max = x_max;
    w.p_min = p_min;
    w.p_max = p_max;
    check_grid(w);
    w.values.assign(nx * np, 0.0);
    return w;
}

WignerField WignerField::like() const { return zeros(nx, np, x_min, x_max, p_min, p_max); }

double WignerField::mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * dx() * dp();
}

double WignerField::min() const { return *std::min_element(values.begin(), values.end()); }
double WignerField::max() const { return *std::max_element(values.begin(), values.end()); }

std::vector<double> WignerField::marginal_x() const {
    std::vector<double> m(nx, 0.0);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < np; ++j) m[i] += at(i, j);
        m[i] *= dp();
    }
    return m;
}

std::vector<double> WignerField::marginal_p() const {
    std::vector<double> m(np, 0.0);
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < np; ++j) m[j] += at(i, j);
    for (double& v : m) v *= dx();
    return m;
}

GaussianState WignerField::moments() const {
    double s = 0.0, sx = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < np; ++j) {
            const double w = at(i, j);
            s += w;
            sx += w * x(i);
            sp += w * p(j);
        }
    if (s == 0.0) throw NumericalError("wigner field: zero mass, moments undefined");
    const double mx = sx / s, mp = sp / s;
    double cxx = 0.0, cxp = 0.0, cpp = 0.0;
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < np; ++j) {
            const double w = at(i, j);
            const double ddx = x(i) - mx, ddp = p(j) - mp;
            cxx += w * ddx * ddx;
            cxp += w * ddx * ddp;
            cpp += w * ddp * ddp;
        }
    GaussianState g;
    g.mean << mx, mp;
    g.cov << cxx / s, cxp / s, cxp / s, cpp / s;
    return g;
}

bool WignerField::same_grid(const WignerField& o) const noexcept {
    return nx == o.nx && np == o.np && x_min == o.x_min && x_max == o.x_max && p_min == o.p_min &&
           p_max == o.p_max;
}

void WignerField::validate() const {
    check_grid(*this);
    if (values.size() != nx * np) throw std::invalid_argument("wigner field: value count does not match grid");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("wigner field: non-finite value");
}

// ---- Flow -------------------------------------------------------------------

Flow::Flow(int dim, Fn f, std::vector<std::string> labels) : dim_(dim), f_(std::move(f)), labels_(std::move(labels)) {
    if (dim < 1 || dim > 3) throw std::invalid_argument("flow: dimension must be 1, 2 or 3");
    if (!f_) throw std::invalid_argument("flow: empty vector field");
    if (labels_.empty())
        for (int k = 0; k < dim; ++k) labels_.push_back("z" + std::to_string(k));
    if (static_cast<int>(labels_.size()) != dim) throw std::invalid_argument("flow: one label per dimension");
}

double Flow::divergence(const double* z) const { return flow_divergence_fd(f_, dim_, z); }

namespace phase {

WignerField sample_function(const WignerField& grid, const std::function<double(double, double)>& fn) {
    WignerField w = grid.like();
    for (std::size_t i = 0; i < w.nx; ++i)
        for (std::size_t j = 0; j < w.np; ++j) w.at(i, j) = fn(w.x(i), w.p(j));
    return w;
}

WignerField gaussian_field(const WignerField& grid, const GaussianState& s) {
    if (!(s.cov(0, 0) > 0.0) || !(s.cov.determinant() > 0.0))
        throw std::invalid_argument("gaussian_field: covariance not positive definite");
    const Eigen::Matrix2d inv = s.cov.inverse();
    const double norm = 1.0 / (2.0 * kPi * std::sqrt(s.cov.determinant()));
    return sample_function(grid, [&](double x, double p) {
        const Eigen::Vector2d d(x - s.mean(0), p - s.mean(1));
        return norm * std::exp(-0.5 * d.dot(inv * d));
    });
}

WignerField cat_state_field(const WignerField& grid, double x0, double sigma, double hbar) {
    if (!(sigma > 0.0) || !(hbar > 0.0)) throw std::invalid_argument("cat_state_field: sigma, hbar must be > 0");
    const double n2 = 1.0 / (2.0 * (1.0 + std::exp(-x0 * x0 / (2.0 * sigma * sigma))));
    const double s2 = sigma * sigma;
    return sample_function(grid, [&](double x, double p) {
        const double pp = 2.0 * s2 * p * p / (hbar * hbar);
        const double a = std::exp(-(x - x0) * (x - x0) / (2.0 * s2) - pp);
        const double b = std::exp(-(x + x0) * (x + x0) / (2.0 * s2) - pp);
        const double c = 2.0 * std::exp(-x * x / (2.0 * s2) - pp) * std::cos(2.0 * p * x0 / hbar);
        return n2 * (a + b + c) / (kPi * hbar);
    });
}

int min_stable_steps(const WignerField& grid, const EvolutionSpec& spec) {
    check_grid(grid);
    validate_spec(spec);
    return std::max(1, static_cast<int>(std::ceil(spec.duration * stiffness(grid, spec) / kStabilityLimit)));
}

WignerField evolve_liouville(const WignerField& W0, const EvolutionSpec& spec, EvolutionStats* stats) {
    if (spec.bath) throw std::invalid_argument("evolve_liouville: spec carries a bath; use evolve_fokker_planck");
    return run(W0, spec, false, true, stats);
}

WignerField evolve_fokker_planck(const WignerField& W0, const EvolutionSpec& spec, EvolutionStats* stats) {
    if (!spec.bath) throw std::invalid_argument("evolve_fokker_planck: spec has no bath");
    return run(W0, spec, false, true, stats);
}

WignerField evolve_dqt_reduced(const WignerField& W0, const EvolutionSpec& spec, const FPBath& bathA,
                               const FPBath& bathB, EvolutionStats* stats) {
    bathA.validate();
    bathB.validate();
    EvolutionSpec s = spec;
    s.moyal_order = 0;
    s.bath = FPBath{bathA.gamma, bathA.kT + bathB.kT};
    return evolve_fokker_planck(W0, s, stats);
}

WignerField evolve_adjoint(const WignerField& A0, const EvolutionSpec& spec) {
    return run(A0, spec, true, false, nullptr);
}

WignerField husimi_smear(const WignerField& W, double sigma_x, double sigma_p) {
    W.validate();
    if (!(sigma_x >= 0.0) || !(sigma_p >= 0.0)) throw std::invalid_argument("husimi_smear: widths must be >= 0");
    if (sigma_x > W.x_max - W.x_min || sigma_p > W.p_max - W.p_min)
        throw std::invalid_argument("husimi_smear: smearing width exceeds the grid extent");
    if (sigma_x == 0.0 && sigma_p == 0.0) return W;

    Spectral fft(W.nx, W.np);
    WignerField out = W.like();
    const double Lx = W.x_max - W.x_min, Lp = W.p_max - W.p_min;
    std::vector<cplx> buf(std::max(W.nx * fft.p_modes(), fft.x_modes() * W.np));
    std::vector<double> tmp(W.values.size());

    fft.forward_x(W.values.data(), buf.data());
    for (std::size_t k = 0; k < fft.x_modes(); ++k) {
        const double kk = 2.0 * kPi * static_cast<double>(k) / Lx;
        const double g = std::exp(-0.5 * sigma_x * sigma_x * kk * kk) / static_cast<double>(W.nx);
        for (std::size_t j = 0; j < W.np; ++j) buf[k * W.np + j] *= g;
    }
    fft.inverse_x(buf.data(), tmp.data());

    fft.forward_p(tmp.data(), buf.data());
    for (std::size_t i = 0; i < W.nx; ++i)
        for (std::size_t q = 0; q < fft.p_modes(); ++q) {
            const double kk = 2.0 * kPi * static_cast<double>(q) / Lp;
            buf[i * fft.p_modes() + q] *= std::exp(-0.5 * sigma_p * sigma_p * kk * kk) / static_cast<double>(W.np);
        }
    fft.inverse_p(buf.data(), out.values.data());
    return out;
}

double wigner_distance(const WignerField& a, const WignerField& b, DistanceMetric metric) {
    if (!a.same_grid(b) || a.values.size() != b.values.size())
        throw std::invalid_argument("wigner_distance: grids differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += metric == DistanceMetric::L1 ? std::abs(d) : d * d;
    }
    s *= a.dx() * a.dp();
    return metric == DistanceMetric::L1 ? s : std::sqrt(s);
}

double momentum_coherence_norm(const WignerField& W) {
    W.validate();
    Spectral fft(W.nx, W.np);
    std::vector<cplx> buf(fft.x_modes() * W.np);
    fft.forward_x(W.values.data(), buf.data());
    double total = 0.0, nonzero = 0.0;
    for (std::size_t k = 0; k < fft.x_modes(); ++k) {
        const double weight = (k == 0 || 2 * k == W.nx) ? 1.0 : 2.0;
        double s = 0.0;
        for (std::size_t j = 0; j < W.np; ++j) s += std::norm(buf[k * W.np + j]);
        total += weight * s;
        if (k > 0) nonzero += weight * s;
    }
    return total > 0.0 ? std::sqrt(nonzero / total) : 0.0;
}

namespace {

// Sharp windows are half-open here so adjacent windows never share a grid point.
double momentum_window(const MomentumWindows& w, std::size_t a, double p) {
    const double off = p - w.centers[a];
    if (w.shape == WindowShape::Sharp) return (off >= -0.5 * w.delta && off < 0.5 * w.delta) ? 1.0 : 0.0;
    return std::exp(-off * off / (2.0 * w.delta * w.delta));
}

}  // namespace

DecoherenceMatrix momentum_history_dfun(const WignerField& W0, const ModelParams& model, const FPBath& bath,
                                        double t, const MomentumWindows& windows, int steps) {
    W0.validate();
    model.validate();
    bath.validate();
    if (!model.is_linear())
        throw std::invalid_argument("momentum_history_dfun: only free or harmonic models are supported");
    if (!(t >= 0.0)) throw std::invalid_argument("momentum_history_dfun: t must be >= 0");
    if (windows.centers.empty() || !(windows.delta > 0.0))
        throw std::invalid_argument("momentum_history_dfun: need momentum windows with delta > 0");
    for (std::size_t a = 1; a < windows.centers.size(); ++a)
        if (!(windows.centers[a] > windows.centers[a - 1]))
            throw std::invalid_argument("momentum_history_dfun: window centres must increase");
    if (std::abs(W0.mass() - 1.0) > 1e-6) throw std::invalid_argument("momentum_history_dfun: W0 not normalized");

    const std::size_t nw = windows.centers.size();
    const std::size_t nx = W0.nx, np = W0.np;

    EvolutionSpec spec;
    spec.model = model;
    spec.bath = bath;
    spec.moyal_order = 0;
    spec.duration = t;
    spec.steps = steps;
    spec.periodic_x = true;

    // Heisenberg symbols of the second-time window pairs (symmetric in the pair).
    // Without a force the symbols stay x-independent, so a thin grid suffices.
    const bool thin = model.potential == PotentialKind::Free || model.omega == 0.0;
    const WignerField sgrid = thin ? WignerField::zeros(8, np, W0.x_min, W0.x_max, W0.p_min, W0.p_max) : W0.like();
    std::vector<WignerField> symbol(nw * nw);
    for (std::size_t a = 0; a < nw; ++a)
        for (std::size_t b = a; b < nw; ++b) {
            WignerField f = sgrid;
            bool any = false;
            for (std::size_t i = 0; i < f.nx; ++i)
                for (std::size_t j = 0; j < np; ++j) {
                    const double v = momentum_window(windows, a, W0.p(j)) * momentum_window(windows, b, W0.p(j));
                    f.at(i, j) = v;
                    any = any || v != 0.0;
                }
            if (any) f = evolve_adjoint(f, spec);
            if (thin) {
                WignerField full = W0.like();
                for (std::size_t i = 0; i < nx; ++i)
                    std::copy(f.values.begin(), f.values.begin() + static_cast<std::ptrdiff_t>(np),
                              full.values.begin() + static_cast<std::ptrdiff_t>(i * np));
                f = std::move(full);
            }
            symbol[a * nw + b] = f;
            symbol[b * nw + a] = std::move(f);
        }

    // First-time projections act as f1(p + hbar k/2) W(k, p) f1'(p - hbar k/2)
    // on the x-Fourier transform of W0.
    std::vector<cplx> hat(nx * np);
    {
        std::vector<cplx> in(nx * np);
        for (std::size_t i = 0; i < nx * np; ++i) in[i] = W0.values[i];
        const int n_x = static_cast<int>(nx), n_p = static_cast<int>(np);
        fftw_plan plan;
        {
            std::lock_guard<std::mutex> lock(planner_mutex());
            plan = fftw_plan_many_dft(1, &n_x, n_p, as_fftw(in.data()), nullptr, n_p, 1, as_fftw(hat.data()), nullptr,
                                      n_p, 1, FFTW_FORWARD, FFTW_ESTIMATE);
        }
        fftw_execute(plan);
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    const double Lx = W0.x_max - W0.x_min;
    std::vector<double> kx(nx);
    for (std::size_t k = 0; k < nx; ++k) {
        const long s = k <= nx / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(nx);
        kx[k] = 2.0 * kPi * static_cast<double>(s) / Lx;
    }

    const double hbar = model.hbar, cell = W0.dx() * W0.dp();
    const std::size_t H = nw * nw;
    DecoherenceMatrix D;
    D.times = {0.0, t};
    D.entries = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(H));
    for (std::size_t a = 0; a < nw; ++a)
        for (std::size_t b = 0; b < nw; ++b) {
            std::ostringstream os;
            os << windows.centers[a] << ',' << windows.centers[b];
            D.history_index.push_back(os.str());
        }

    std::vector<cplx> proj(nx * np), back(nx * np);
    for (std::size_t a1 = 0; a1 < nw; ++a1)
        for (std::size_t b1 = a1; b1 < nw; ++b1) {
            bool any = false;
            for (std::size_t k = 0; k < nx; ++k) {
                const double shift = 0.5 * hbar * (2 * k == nx ? 0.0 : kx[k]);
                for (std::size_t j = 0; j < np; ++j) {
                    const double p = W0.p(j);
                    const double f = 2 * k == nx ? 0.0
                                                 : momentum_window(windows, a1, p + shift) *
                                                       momentum_window(windows, b1, p - shift);
                    proj[k * np + j] = f * hat[k * np + j] / static_cast<double>(nx);
                    any = any || f != 0.0;
                }
            }
            if (!any) continue;
            {
                const int n_x = static_cast<int>(nx), n_p = static_cast<int>(np);
                fftw_plan plan;
                {
                    std::lock_guard<std::mutex> lock(planner_mutex());
                    plan = fftw_plan_many_dft(1, &n_x, n_p, as_fftw(proj.data()), nullptr, n_p, 1,
                                              as_fftw(back.data()), nullptr, n_p, 1, FFTW_BACKWARD, FFTW_ESTIMATE);
                }
                fftw_execute(plan);
                std::lock_guard<std::mutex> lock(planner_mutex());
                fftw_destroy_plan(plan);
            }
            for (std::size_t a2 = 0; a2 < nw; ++a2)
                for (std::size_t b2 = 0; b2 < nw; ++b2) {
                    const auto& A = symbol[a2 * nw + b2].values;
                    cplx s = 0.0;
                    for (std::size_t idx = 0; idx < nx * np; ++idx) s += A[idx] * back[idx];
                    s *= cell;
                    const auto r = static_cast<Eigen::Index>(a1 * nw + a2);
                    const auto c = static_cast<Eigen::Index>(b1 * nw + b2);
                    D.entries(r, c) = s;
                    D.entries(c, r) = std::conj(s);
                }
        }
    return D;
}

Flow hamiltonian_flow(const ModelParams& model, double drag) {
    model.validate();
    if (!(drag >= 0.0)) throw std::invalid_argument("hamiltonian_flow: drag must be >= 0");
    return Flow(
        2,
        [model, drag](const double* z, double* dz) {
            dz[0] = z[1] / model.mass;
            dz[1] = -model.dV(z[0]) - 2.0 * drag * z[1];
        },
        {"x", "p"});
}

Flow build_general_dqt_flow(const VectorFieldSpec& field) {
    const std::size_t d = field.variables.size();
    if (d < 1 || d > 3) throw std::invalid_argument("general flow: dimension must be 1, 2 or 3");
    if (field.components.size() != d)
        throw std::invalid_argument("general flow: need one component expression per variable");
    std::vector<Expression> comps;
    for (const auto& text : field.components) comps.push_back(Expression::parse(text, field.variables));
    auto labels = field.labels.empty() ? field.variables : field.labels;
    return Flow(
        static_cast<int>(d),
        [comps](const double* z, double* dz) {
            for (std::size_t k = 0; k < comps.size(); ++k) dz[k] = comps[k].eval(z);
        },
        std::move(labels));
}

std::vector<double> integrate_flow(const Flow& flow, std::vector<double> z0, double t, double rtol, double atol) {
    if (static_cast<int>(z0.size()) != flow.dim()) throw std::invalid_argument("integrate_flow: dimension mismatch");
    OdeOptions opt;
    opt.rtol = rtol;
    opt.atol = atol;
    auto y = integrate_ode([&](const std::vector<double>& z, std::vector<double>& dz) { flow(z.data(), dz.data()); },
                           std::move(z0), 0.0, t, opt);
    for (double v : y)
        if (!std::isfinite(v)) throw NumericalError("integrate_flow: trajectory left the finite domain");
    return y;
}

WignerField evolve_characteristics(const std::function<double(double, double)>& W0, const WignerField& grid,
                                   const Flow& flow, double t) {
    if (flow.dim() != 2) throw std::invalid_argument("evolve_characteristics: need a 2-d flow");
    check_grid(grid);
    OdeOptions opt;
    opt.rtol = 1e-11;
    opt.atol = 1e-13;
    const OdeRhs rhs = [&](const std::vector<double>& y, std::vector<double>& dy) {
        flow(y.data(), dy.data());
        dy[2] = flow.divergence(y.data());
    };
    WignerField out = grid.like();
    for (std::size_t i = 0; i < grid.nx; ++i)
        for (std::size_t j = 0; j < grid.np; ++j) {
            const auto y = integrate_ode(rhs, {grid.x(i), grid.p(j), 0.0}, 0.0, -t, opt);
            out.at(i, j) = W0(y[0], y[1]) * std::exp(y[2]);
        }
    return out;
}

DecoherenceMatrix flow_history_dfun(const Flow& flow, const std::vector<std::vector<double>>& points,
                                    const std::vector<double>& weights, const HistorySpec& hist) {
    hist.validate();
    if (points.size() != weights.size()) throw std::invalid_argument("flow_history_dfun: one weight per point");
    const std::size_t H = hist.history_count(), nt = hist.times.size();
    DecoherenceMatrix D;
    D.times = hist.times;
    D.entries = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(H));
    for (std::size_t h = 0; h < H; ++h) D.history_index.push_back(hist.label(h));

    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(H));
    Eigen::VectorXd v(static_cast<Eigen::Index>(H));
    std::vector<double> xk(nt);
    for (std::size_t s = 0; s < points.size(); ++s) {
        std::vector<double> z = points[s];
        double t = 0.0;
        for (std::size_t k = 0; k < nt; ++k) {
            z = integrate_flow(flow, std::move(z), hist.times[k] - t);
            t = hist.times[k];
            xk[k] = z[0];
        }
        for (std::size_t h = 0; h < H; ++h) {
            const auto idx = hist.decode(h);
            double w = 1.0;
            for (std::size_t k = 0; k < nt && w != 0.0; ++k)
                w *= window_weight(hist.window, xk[k] - hist.centers[k][idx[k]], hist.delta);
            v(static_cast<Eigen::Index>(h)) = w;
        }
        acc.noalias() += weights[s] * v * v.transpose();
    }
    D.entries = acc.cast<cplx>();
    return D;
}

void write_csv(const WignerField& W, const std::string& path) {
    W.validate();
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "x,p,W\n");
    for (std::size_t i = 0; i < W.nx; ++i)
        for (std::size_t j = 0; j < W.np; ++j) std::fprintf(f, "%.17g,%.17g,%.17g\n", W.x(i), W.p(j), W.at(i, j));
    if (std::fclose(f) != 0) throw std::runtime_error("error writing " + path);
}

// Layout: "WGNF", u32 version, u64 nx, u64 np, f64 x_min x_max p_min p_max,
// then nx*np f64 values row-major. Little-endian throughout.
namespace {
constexpr char kMagic[4] = {'W', 'G', 'N', 'F'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::invalid_argument("wigner binary: truncated file");
    return v;
}
}  // namespace

void write_binary(const WignerField& W, const std::string& path) {
    static_assert(sizeof(double) == 8);
    W.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint64_t>(os, W.nx);
    put<std::uint64_t>(os, W.np);
    for (double v : {W.x_min, W.x_max, W.p_min, W.p_max}) put<double>(os, v);
    os.write(reinterpret_cast<const char*>(W.values.data()),
             static_cast<std::streamsize>(W.values.size() * sizeof(double)));
    if (!os) throw std::runtime_error("error writing " + path);
}

WignerField read_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::invalid_argument("wigner binary: bad magic");
    if (get<std::uint32_t>(is) != kVersion) throw std::invalid_argument("wigner binary: unsupported version");
    const auto nx = get<std::uint64_t>(is);
    const auto np = get<std::uint64_t>(is);
    const double x0 = get<double>(is), x1 = get<double>(is), p0 = get<double>(is), p1 = get<double>(is);
    WignerField W = WignerField::zeros(nx, np, x0, x1, p0, p1);
    is.read(reinterpret_cast<char*>(W.values.data()), static_cast<std::streamsize>(W.values.size() * sizeof(double)));
    if (!is) throw std::invalid_argument("wigner binary: truncated values");
    W.validate();
    return W;
}

std::string fft_library_version() { return fftw_version; }

}  // namespace phase
}  // namespace decohist
