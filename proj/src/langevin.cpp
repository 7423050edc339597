#include "decohist/langevin.hpp"

#include "decohist/parallel.hpp"

#include <cmath>
#include <cstdio>

namespace decohist {

InitialWeight InitialWeight::husimi(double sigma_x, double hbar) {
    if (!(sigma_x > 0.0)) throw std::invalid_argument("husimi weight: sigma_x must be > 0");
    return {InitialKind::Husimi, sigma_x, hbar / (2.0 * sigma_x)};
}

double HistoryProbabilities::total() const {
    double s = 0.0;
    for (double v : estimates) s += v;
    return s;
}

namespace langevin {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

NoiseStream::NoiseStream(std::uint64_t seed, double variance) : rng_(seed), scale_(std::sqrt(variance)) {
    if (!(variance >= 0.0)) throw std::invalid_argument("noise: variance must be >= 0");
}

double NoiseStream::next() { return scale_ * normal_(rng_); }

double noise_variance(const ModelParams& model, double gamma, double kT, double dt) {
    return 4.0 * model.mass * gamma * kT / dt;
}

TrajectoryEnsemble sample_initial(const GaussianState& state, const InitialWeight& weight, std::size_t K,
                                  std::uint64_t seed, double hbar) {
    if (K < 1) throw std::invalid_argument("sample_initial: K must be >= 1");
    state.validate(hbar);
    Eigen::Matrix2d cov = state.cov;
    if (weight.kind == InitialKind::Husimi) {
        if (!(weight.sigma_x > 0.0) || !(weight.sigma_p > 0.0) ||
            weight.sigma_x * weight.sigma_p < hbar / 2.0 - 1e-12)
            throw std::invalid_argument("sample_initial: Husimi widths must satisfy sigma_x sigma_p >= hbar/2");
        cov(0, 0) += weight.sigma_x * weight.sigma_x;
        cov(1, 1) += weight.sigma_p * weight.sigma_p;
    }
    const Eigen::LLT<Eigen::Matrix2d> llt(cov);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("sample_initial: covariance not positive definite");
    const Eigen::Matrix2d L = llt.matrixL();

    TrajectoryEnsemble ens;
    ens.count = K;
    ens.seed = seed;
    ens.initial.resize(K);
    ens.sub_seeds.resize(K);
    ens.weights.assign(K, 1.0);
    for (std::size_t k = 0; k < K; ++k) {
        std::mt19937_64 rng(mix_seed(seed, 2 * k));
        std::normal_distribution<double> normal(0.0, 1.0);
        const double a = normal(rng);
        const double b = normal(rng);
        ens.initial[k] = state.mean + L * Eigen::Vector2d(a, b);
        ens.sub_seeds[k] = mix_seed(seed, 2 * k + 1);
    }
    return ens;
}

double max_stable_dt(const ModelParams& model, double gamma) {
    double dt = std::numeric_limits<double>::infinity();
    if (gamma > 0.0) dt = 1.0 / (20.0 * gamma);
    if ((model.potential == PotentialKind::Harmonic || model.potential == PotentialKind::HarmonicPlusQuartic) &&
        model.omega > 0.0)
        dt = std::min(dt, 2.0 * std::acos(-1.0) / model.omega / 50.0);
    return dt;
}

TrajectorySet simulate_langevin(const TrajectoryEnsemble& ens, const LangevinParams& params,
                                const std::vector<double>& record_times, unsigned threads) {
    params.model.validate();
    if (ens.count < 1 || ens.initial.size() != ens.count || ens.sub_seeds.size() != ens.count)
        throw std::invalid_argument("simulate_langevin: empty or inconsistent ensemble");
    if (!(params.gamma >= 0.0) || !(params.kT >= 0.0))
        throw std::invalid_argument("simulate_langevin: gamma and kT must be >= 0");
    if (!(params.tau > 0.0)) throw std::invalid_argument("simulate_langevin: tau must be > 0");
    if (!(params.dt > 0.0) || params.dt > max_stable_dt(params.model, params.gamma) * (1.0 + 1e-12))
        throw std::invalid_argument("simulate_langevin: dt violates the step bound dt <= " +
                                    std::to_string(max_stable_dt(params.model, params.gamma)));
    for (std::size_t k = 0; k < record_times.size(); ++k) {
        if (!(record_times[k] > 0.0) || record_times[k] > params.tau * (1.0 + 1e-12))
            throw std::invalid_argument("simulate_langevin: record times must lie in (0, tau]");
        if (k > 0 && !(record_times[k] > record_times[k - 1]))
            throw std::invalid_argument("simulate_langevin: record times must increase");
    }

    TrajectorySet out;
    out.times.push_back(0.0);
    out.times.insert(out.times.end(), record_times.begin(), record_times.end());
    const auto K = static_cast<Eigen::Index>(ens.count);
    const auto T = static_cast<Eigen::Index>(out.times.size());
    out.x.resize(K, T);
    out.p.resize(K, T);

    // segment step counts so every record time is hit exactly
    std::vector<int> seg_steps;
    std::vector<double> seg_dt;
    for (std::size_t s = 1; s < out.times.size(); ++s) {
        const double span = out.times[s] - out.times[s - 1];
        const int n = std::max(1, static_cast<int>(std::ceil(span / params.dt - 1e-9)));
        seg_steps.push_back(n);
        seg_dt.push_back(span / n);
    }

    const double m = params.model.mass, g = params.gamma;
    const bool noisy = g > 0.0 && params.kT > 0.0;
    parallel_for(ens.count, threads, [&](std::size_t k) {
        NoiseStream noise(ens.sub_seeds[k], 1.0);
        double x = ens.initial[k](0), p = ens.initial[k](1);
        const auto row = static_cast<Eigen::Index>(k);
        out.x(row, 0) = x;
        out.p(row, 0) = p;
        for (std::size_t s = 0; s < seg_steps.size(); ++s) {
            const double dt = seg_dt[s];
            const double sd = noisy ? std::sqrt(noise_variance(params.model, g, params.kT, dt)) : 0.0;
            double f = -params.model.dV(x);
            for (int n = 0; n < seg_steps[s]; ++n) {
                // BBK splitting: the same noise sample enters both half kicks
                const double eta = noisy ? sd * noise.next() : 0.0;
                const double ph = p + 0.5 * dt * (f - 2.0 * g * p + eta);
                x += dt * ph / m;
                f = -params.model.dV(x);
                p = (ph + 0.5 * dt * (f + eta)) / (1.0 + g * dt);
            }
            out.x(row, static_cast<Eigen::Index>(s + 1)) = x;
            out.p(row, static_cast<Eigen::Index>(s + 1)) = p;
        }
        if (!std::isfinite(x) || !std::isfinite(p))
            throw NumericalError("simulate_langevin: trajectory diverged; reduce dt");
    });
    return out;
}

HistoryProbabilities history_probabilities_mc(const TrajectorySet& trajs, const HistorySpec& hist) {
    hist.validate();
    const std::size_t K = trajs.count();
    if (K == 0) throw std::invalid_argument("history_probabilities_mc: empty ensemble");
    std::vector<Eigen::Index> cols;
    for (double t : hist.times) {
        Eigen::Index c = -1;
        for (std::size_t j = 0; j < trajs.times.size(); ++j)
            if (std::abs(trajs.times[j] - t) <= 1e-12 * std::max(1.0, std::abs(t))) c = static_cast<Eigen::Index>(j);
        if (c < 0) throw std::invalid_argument("history_probabilities_mc: projection time not recorded");
        cols.push_back(c);
    }

    const std::size_t H = hist.history_count(), nt = hist.times.size();
    HistoryProbabilities out;
    out.K = K;
    out.estimates.assign(H, 0.0);
    out.std_errors.assign(H, 0.0);
    std::vector<double> sq(H, 0.0);
    // per-time window weights, squared: the diagonal of the decoherence functional
    std::vector<std::vector<double>> w(nt);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t t = 0; t < nt; ++t) {
            const double xk = trajs.x(static_cast<Eigen::Index>(k), cols[t]);
            w[t].resize(hist.centers[t].size());
            for (std::size_t c = 0; c < hist.centers[t].size(); ++c) {
                const double v = window_weight(hist.window, xk - hist.centers[t][c], hist.delta);
                w[t][c] = v * v;
            }
        }
        for (std::size_t h = 0; h < H; ++h) {
            const auto idx = hist.decode(h);
            double v = 1.0;
            for (std::size_t t = 0; t < nt && v != 0.0; ++t) v *= w[t][idx[t]];
            out.estimates[h] += v;
            sq[h] += v * v;
        }
    }
    const double Kd = static_cast<double>(K);
    for (std::size_t h = 0; h < H; ++h) {
        out.labels.push_back(hist.label(h));
        const double mean = out.estimates[h] / Kd;
        const double var = std::max(0.0, sq[h] / Kd - mean * mean);
        out.estimates[h] = mean;
        out.std_errors[h] = K > 1 ? std::sqrt(var / (Kd - 1.0)) : 0.0;
    }
    return out;
}

ComparisonReport compare_sqt_dqt(const ComparisonSetup& s) {
    s.model.validate();
    s.hist.validate();
    if (!(s.kT_A >= 0.0) || !(s.kT_B >= 0.0)) throw std::invalid_argument("compare: temperatures must be >= 0");
    double sx = s.husimi_sigma_x;
    if (sx == 0.0) {
        sx = s.model.potential == PotentialKind::Harmonic && s.model.omega > 0.0
                 ? std::sqrt(s.model.hbar / (2.0 * s.model.mass * s.model.omega))
                 : std::sqrt(s.state.cov(0, 0));
    }
    // common random numbers: both runs share the master seed
    const auto sqt_ens = sample_initial(s.state, InitialWeight::wigner(), s.K, s.seed, s.model.hbar);
    const auto dqt_ens = sample_initial(s.state, InitialWeight::husimi(sx, s.model.hbar), s.K, s.seed, s.model.hbar);
    LangevinParams lp{s.model, s.gamma, s.kT_A, s.hist.tau, s.dt};
    const auto sqt_run = simulate_langevin(sqt_ens, lp, s.hist.times, s.threads);
    lp.kT = s.kT_A + s.kT_B;
    const auto dqt_run = simulate_langevin(dqt_ens, lp, s.hist.times, s.threads);

    ComparisonReport r;
    r.sqt = history_probabilities_mc(sqt_run, s.hist);
    r.dqt = history_probabilities_mc(dqt_run, s.hist);
    for (std::size_t h = 0; h < r.sqt.estimates.size(); ++h) {
        const double d = std::abs(r.sqt.estimates[h] - r.dqt.estimates[h]);
        r.tv_distance += 0.5 * d;
        const double se = std::hypot(r.sqt.std_errors[h], r.dqt.std_errors[h]);
        if (se > 0.0) r.max_z = std::max(r.max_z, d / se);
        else if (d > 0.0) r.max_z = std::numeric_limits<double>::infinity();
    }
    return r;
}

void write_trajectories_csv(const TrajectorySet& set, const std::string& path, std::size_t max_trajectories) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "trajectory,t,X,P\n");
    const std::size_t n = std::min(max_trajectories, set.count());
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < set.times.size(); ++j)
            std::fprintf(f, "%zu,%.17g,%.17g,%.17g\n", k, set.times[j], set.x(static_cast<Eigen::Index>(k), j),
                         set.p(static_cast<Eigen::Index>(k), j));
    if (std::fclose(f) != 0) throw std::runtime_error("error writing " + path);
}

}  // namespace langevin
}  // namespace decohist
