#include "noisyrl/meanfield.hpp"

#include <algorithm>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nrl {

namespace {

int sign_of(double x) { return (x > 0.0) - (x < 0.0); }

double logit_of(double p) { return std::log(p) - std::log1p(-p); }

double sigmoid(double L) { return L >= 0.0 ? 1.0 / (1.0 + std::exp(-L)) : std::exp(L) / (1.0 + std::exp(L)); }

void shape_flow(const Vec &x, double rate, Vec &out) {
    const double m = collision_mass(x);
    out.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = rate * x[i] * (x[i] - m);
}

void pack(const BlockState &s, Vec &x) {
    x.clear();
    x.insert(x.end(), s.y.begin(), s.y.end());
    x.insert(x.end(), s.z.begin(), s.z.end());
}

void renormalize_range(Vec &x, std::size_t lo, std::size_t n) {
    Vec part(x.begin() + lo, x.begin() + lo + n);
    renormalize(part);
    std::copy(part.begin(), part.end(), x.begin() + lo);
}

TrajectorySample make_sample(double t, const Vec &x, std::size_t K, std::size_t M, double p) {
    TrajectorySample s;
    s.t = t;
    s.p = p;
    s.logit = logit_of(p);
    s.y.assign(x.begin(), x.begin() + K);
    s.z.assign(x.begin() + K, x.begin() + K + M);
    s.s2 = collision_mass(s.y);
    s.t2 = collision_mass(s.z);
    s.c_geo = s.s2 + s.t2;
    return s;
}

void finish(Trajectory &tr, const NoiseSpec &spec, double eta) {
    const Vec tau = spec.J() == 0.0 ? Vec(tr.samples.size(), 0.0) : internal_time(tr, spec, eta);
    for (std::size_t i = 0; i < tr.samples.size(); ++i) {
        auto &s = tr.samples[i];
        s.tau = tau[i];
        s.lyapunov = spec.J() == 0.0 ? 0.0 : lyapunov_value(tr.state(i), spec);
    }
}

Trajectory run(const BlockState &initial, const NoiseSpec &spec, const OdeConfig &cfg, bool scalar) {
    cfg.validate();
    const std::size_t K = initial.K(), M = initial.M();
    Trajectory tr;
    tr.K = K;
    tr.M = M;
    Vec x;
    pack(initial, x);
    x.push_back(std::clamp(initial.p, kClampBand, 1.0 - kClampBand));
    const std::size_t ip = K + M;

    auto rhs = [&](double, const Vec &v, Vec &dv) {
        dv.assign(v.size(), 0.0);
        const double p = std::clamp(v[ip], kClampBand, 1.0 - kClampBand);
        const double kappa = cfg.eta * signal_gain(spec, p);
        if (kappa == 0.0) return;
        if (scalar) {
            dv[ip] = -kappa * p * (1.0 - p);
            return;
        }
        Vec y(v.begin(), v.begin() + K), z(v.begin() + K, v.begin() + ip), dy, dz;
        shape_flow(y, kappa, dy);
        shape_flow(z, -kappa, dz);
        std::copy(dy.begin(), dy.end(), dv.begin());
        std::copy(dz.begin(), dz.end(), dv.begin() + K);
        dv[ip] = -kappa * p * (1.0 - p) * (collision_mass(y) + collision_mass(z));
    };
    auto project = [&](Vec &v) {
        renormalize_range(v, 0, K);
        renormalize_range(v, K, M);
        v[ip] = std::clamp(v[ip], kClampBand, 1.0 - kClampBand);
    };
    auto observe = [&](double t, const Vec &v) {
        tr.samples.push_back(make_sample(t, v, K, M, v[ip]));
        if (v[ip] < kAbsorbBand || v[ip] > 1.0 - kAbsorbBand) {
            tr.absorbed = true;
            return true;
        }
        return false;
    };
    const OdeResult res = solve_ode(rhs, x, 0.0, cfg, observe, project);
    if (res.reason == StopReason::step_underflow) throw std::runtime_error("integrate: " + res.message);
    tr.reason = res.reason;
    finish(tr, spec, cfg.eta);
    return tr;
}

}  // namespace

BlockDrift coupled_drift(const BlockState &s, const NoiseSpec &spec, double eta) {
    BlockDrift d;
    const double kappa = eta * signal_gain(spec, s.p);
    shape_flow(s.y.values(), kappa, d.dy);
    shape_flow(s.z.values(), -kappa, d.dz);
    d.dp = -kappa * s.p * (1.0 - s.p) * s.c_geo();
    return d;
}

double binary_drift(double p, const NoiseSpec &spec, double eta) {
    return -eta * signal_gain(spec, p) * p * (1.0 - p);
}

Vec advantage_vector(const NoiseSpec &spec, double p, std::size_t K, std::size_t M) {
    const RewardStats r = reward_stats(spec, p);
    if (r.degenerate) return Vec(K + M, 0.0);
    Vec A(K + M, r.a_bad);
    std::fill(A.begin(), A.begin() + K, r.a_good);
    return A;
}

Vec Trajectory::times() const {
    Vec t;
    t.reserve(samples.size());
    for (const auto &s : samples) t.push_back(s.t);
    return t;
}

Vec Trajectory::bad_mass() const {
    Vec p;
    p.reserve(samples.size());
    for (const auto &s : samples) p.push_back(s.p);
    return p;
}

BlockState Trajectory::state(std::size_t i) const {
    const auto &s = samples.at(i);
    return BlockState{s.p, ProbVector::normalized(s.y), ProbVector::normalized(s.z)};
}

Trajectory integrate(const BlockState &initial, const NoiseSpec &spec, const OdeConfig &cfg) {
    return run(initial, spec, cfg, false);
}

Trajectory integrate_flow(const BlockState &initial, const BlockFlow &flow, const NoiseSpec &spec,
                          const OdeConfig &cfg) {
    cfg.validate();
    const std::size_t K = initial.K(), M = initial.M(), ip = K + M;
    Trajectory tr;
    tr.K = K;
    tr.M = M;
    Vec x;
    pack(initial, x);
    x.push_back(std::clamp(initial.p, kClampBand, 1.0 - kClampBand));
    auto rhs = [&](double, const Vec &v, Vec &dv) {
        BlockState s{std::clamp(v[ip], kClampBand, 1.0 - kClampBand),
                     ProbVector::normalized(Vec(v.begin(), v.begin() + K)),
                     ProbVector::normalized(Vec(v.begin() + K, v.begin() + ip))};
        const BlockDrift d = flow(s);
        dv.resize(v.size());
        std::copy(d.dy.begin(), d.dy.end(), dv.begin());
        std::copy(d.dz.begin(), d.dz.end(), dv.begin() + K);
        dv[ip] = d.dp;
    };
    auto project = [&](Vec &v) {
        renormalize_range(v, 0, K);
        renormalize_range(v, K, M);
        v[ip] = std::clamp(v[ip], kClampBand, 1.0 - kClampBand);
    };
    auto observe = [&](double t, const Vec &v) {
        tr.samples.push_back(make_sample(t, v, K, M, v[ip]));
        if (v[ip] < kAbsorbBand || v[ip] > 1.0 - kAbsorbBand) {
            tr.absorbed = true;
            return true;
        }
        return false;
    };
    const OdeResult res = solve_ode(rhs, x, 0.0, cfg, observe, project);
    if (res.reason == StopReason::step_underflow) throw std::runtime_error("integrate: " + res.message);
    tr.reason = res.reason;
    finish(tr, spec, cfg.eta);
    return tr;
}

Trajectory integrate_binary(double p0, const NoiseSpec &spec, const OdeConfig &cfg) {
    return run(make_block(p0, 1, 1), spec, cfg, true);
}

double closed_form_p(double p0, double eta, double t) {
    if (!(p0 >= 0.0 && p0 <= 1.0)) throw std::invalid_argument("closed_form_p: p0 outside [0,1]");
    if (p0 == 0.0 || p0 == 1.0) return p0;
    const double w = (2.0 * p0 - 1.0) / std::sqrt(p0 * (1.0 - p0)) - 0.5 * eta * t;
    // 1/2 + w / (2 sqrt(4 + w^2)), rewritten to keep precision for large |w|
    const double r = std::sqrt(4.0 + w * w);
    return w >= 0.0 ? 0.5 + 0.5 * w / r : 2.0 / (r * (r - w));
}

Vec internal_time(const Trajectory &traj, const NoiseSpec &spec, double eta) {
    if (spec.J() == 0.0) throw std::domain_error("internal_time: undefined for J = 0");
    Vec tau(traj.samples.size(), 0.0);
    double prev = 0.0;
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
        const double rate = eta * std::abs(signal_gain(spec, traj.samples[i].p));
        if (i > 0) tau[i] = tau[i - 1] + 0.5 * (rate + prev) * (traj.samples[i].t - traj.samples[i - 1].t);
        prev = rate;
    }
    return tau;
}

double InternalSample::p() const { return sigmoid(L); }

double InternalTrajectory::hitting_tau(double p_star) const {
    const double Ls = logit_of(p_star);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].L <= Ls) {
            if (i == 0) return samples[0].tau;
            const auto &a = samples[i - 1], &b = samples[i];
            return a.tau + (b.tau - a.tau) * (a.L - Ls) / (a.L - b.L);
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

InternalTrajectory integrate_internal(const BlockState &initial, int j_sign, double tau_max, const OdeConfig &cfg) {
    if (j_sign == 0) throw std::domain_error("integrate_internal: J = 0 has no internal clock");
    const double sg = j_sign > 0 ? 1.0 : -1.0;
    const std::size_t K = initial.K(), M = initial.M();
    Vec x;
    pack(initial, x);
    x.push_back(logit_of(initial.p));
    OdeConfig c = cfg;
    c.horizon = tau_max;
    InternalTrajectory out;
    auto rhs = [&](double, const Vec &v, Vec &dv) {
        dv.resize(v.size());
        Vec y(v.begin(), v.begin() + K), z(v.begin() + K, v.begin() + K + M), dy, dz;
        shape_flow(y, sg, dy);
        shape_flow(z, -sg, dz);
        std::copy(dy.begin(), dy.end(), dv.begin());
        std::copy(dz.begin(), dz.end(), dv.begin() + K);
        dv[K + M] = -sg * (collision_mass(y) + collision_mass(z));
    };
    auto project = [&](Vec &v) {
        renormalize_range(v, 0, K);
        renormalize_range(v, K, M);
    };
    auto observe = [&](double t, const Vec &v) {
        InternalSample s;
        s.tau = t;
        s.L = v[K + M];
        s.y.assign(v.begin(), v.begin() + K);
        s.z.assign(v.begin() + K, v.begin() + K + M);
        out.samples.push_back(std::move(s));
        return false;
    };
    const OdeResult res = solve_ode(rhs, x, 0.0, c, observe, project);
    if (res.reason == StopReason::step_underflow) throw std::runtime_error("integrate_internal: " + res.message);
    return out;
}

ExpansionValue heterogeneity_expansion(const BlockState &initial, std::size_t K, std::size_t M, double tau,
                                       const NoiseSpec &spec) {
    if (initial.K() != K || initial.M() != M) throw std::invalid_argument("heterogeneity_expansion: block sizes");
    const double sg = sign_of(spec.J());
    const double zeta = initial.s2() - 1.0 / double(K);
    const double xi = initial.t2() - 1.0 / double(M);
    ExpansionValue v;
    v.L = initial.logit() - sg * (1.0 / double(K) + 1.0 / double(M)) * tau -
          sg * (double(K) / 2.0) * zeta * std::expm1(2.0 * tau / double(K)) -
          sg * (double(M) / 2.0) * xi * (-std::expm1(-2.0 * tau / double(M)));
    v.advisory = std::sqrt(std::max(zeta, 0.0)) * std::exp(tau / double(K)) > 0.5 ||
                 std::sqrt(std::max(xi, 0.0)) > 0.5;
    return v;
}

std::pair<double, double> logit_envelopes(double p0, std::size_t K, std::size_t M, double tau) {
    if (!(p0 > 0.0 && p0 < 1.0)) throw std::invalid_argument("logit_envelopes: p0 must be interior");
    const double odds = (1.0 - p0) / p0;
    const double rate = 1.0 / double(K) + 1.0 / double(M);
    return {1.0 / (1.0 + odds * std::exp(2.0 * tau)), 1.0 / (1.0 + odds * std::exp(rate * tau))};
}

std::pair<double, double> hitting_time_bracket(double p0, double p_star, std::size_t K, std::size_t M) {
    if (!(p_star > 0.0 && p_star < p0 && p0 < 1.0))
        throw std::invalid_argument("hitting_time_bracket: requires 0 < p_star < p0 < 1");
    const double lambda = std::log(p0 * (1.0 - p_star) / ((1.0 - p0) * p_star));
    return {lambda / 2.0, lambda / (1.0 / double(K) + 1.0 / double(M))};
}

ProbVector inner_good_closed_form(const ProbVector &q, double I) {
    const double qmax = *std::max_element(q.begin(), q.end());
    if (!(I >= 0.0) || I * qmax >= 1.0) throw std::domain_error("inner_good_closed_form: I at or beyond 1/max q");
    Vec w(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) w[j] = q[j] / (1.0 - I * q[j]);
    return ProbVector::normalized(std::move(w));
}

ProbVector inner_bad_closed_form(const ProbVector &q, double I) {
    if (!(I >= 0.0) || !std::isfinite(I)) throw std::domain_error("inner_bad_closed_form: I must be finite and >= 0");
    Vec w(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) w[j] = q[j] / (1.0 + I * q[j]);
    return ProbVector::normalized(std::move(w));
}

double inner_good_tau(const ProbVector &q, double I) {
    double s = 0.0;
    for (double v : q) s -= std::log1p(-I * v);
    return s;
}

double inner_bad_tau(const ProbVector &q, double I) {
    double s = 0.0;
    for (double v : q) s += std::log1p(I * v);
    return s;
}

double lyapunov_value(const BlockState &s, const NoiseSpec &spec) {
    const double J = spec.J();
    if (J == 0.0) return 0.0;
    const double good = 1.0 - s.p;
    if (good <= 0.0) return 0.0;
    auto delta = [&](double u) {
        const double sig = reward_sigma(spec, 1.0 - u);
        return sig > 0.0 ? J / sig : 0.0;
    };
    static thread_local boost::math::quadrature::tanh_sinh<double> integrator;
    return integrator.integrate(delta, 0.0, good, 1e-13);
}

Stability classify_equilibrium(Block block, EquilibriumKind kind, int j_sign) {
    if (j_sign == 0) throw std::domain_error("classify_equilibrium: J = 0 is neutral");
    const bool ascending = (block == Block::good) == (j_sign > 0);
    const bool vertex_stable = ascending;
    return (kind == EquilibriumKind::vertex) == vertex_stable ? Stability::stable : Stability::unstable;
}

double tail_exponent(const Trajectory &traj, double t_lo, double t_hi, bool good_mass) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (const auto &s : traj.samples) {
        if (s.t < t_lo || s.t > t_hi) continue;
        const double v = good_mass ? 1.0 - s.p : s.p;
        if (!(v < 0.05) || !(v > 0.0)) throw std::runtime_error("tail_exponent: insufficient decay in window");
        const double x = std::log(s.t), y = std::log(v);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 3) throw std::runtime_error("tail_exponent: fewer than 3 samples in window");
    return (double(n) * sxy - sx * sy) / (double(n) * sxx - sx * sx);
}

}  // namespace nrl
