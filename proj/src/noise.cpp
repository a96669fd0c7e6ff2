#include "noisyrl/noise.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nrl {

NoiseSpec::NoiseSpec(double fn, double fp) : delta_fn(fn), delta_fp(fp) {
    if (!(fn >= 0.0 && fn <= 1.0) || !(fp >= 0.0 && fp <= 1.0))
        throw std::invalid_argument("noise rates must lie in [0,1]");
}

NoiseSpec NoiseSpec::from_rates(double tpr, double fpr) { return NoiseSpec(1.0 - tpr, fpr); }

double youden(const NoiseSpec &spec) { return spec.J(); }

double mean_reward(const NoiseSpec &s, double p) {
    const double J = s.J();
    return J >= 0.0 ? s.delta_fp + J * (1.0 - p) : (1.0 - s.delta_fn) - J * p;
}

double mean_reward_complement(const NoiseSpec &s, double p) {
    const double J = s.J();
    return J >= 0.0 ? s.delta_fn + J * p : (1.0 - s.delta_fp) - J * (1.0 - p);
}

double reward_sigma(const NoiseSpec &s, double p) {
    return std::sqrt(std::max(0.0, mean_reward(s, p) * mean_reward_complement(s, p)));
}

RewardStats reward_stats(const NoiseSpec &s, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("reward_stats: p must lie in [0,1]");
    RewardStats r;
    r.q = mean_reward(s, p);
    r.sigma = reward_sigma(s, p);
    if (r.sigma == 0.0) {
        r.degenerate = true;
        r.a_good = r.a_bad = r.gap = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    const double J = s.J();
    r.a_good = J * p / r.sigma;
    r.a_bad = -J * (1.0 - p) / r.sigma;
    r.gap = J / r.sigma;
    return r;
}

double signal_gain(const NoiseSpec &s, double p) {
    const double J = s.J();
    const double w = p * (1.0 - p);
    if (J == 0.0 || w == 0.0) return 0.0;
    const double sigma = reward_sigma(s, p);
    if (sigma == 0.0) return 0.0;
    return J * w / sigma;
}

double variance_argmax(const NoiseSpec &s) {
    const double J = s.J();
    if (J == 0.0) throw std::domain_error("variance_argmax: undefined for J = 0");
    return std::clamp((1.0 - 2.0 * s.delta_fn) / (2.0 * J), 0.0, 1.0);
}

double learnability_speed(const NoiseSpec &s, double p) {
    if (!(s.J() > 0.0)) throw std::domain_error("learnability_speed: requires J > 0");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("learnability_speed: p outside [0,1]");
    return signal_gain(s, p) * p * (1.0 - p);
}

namespace {

// Polynomial helpers, coefficients lowest degree first.
using Poly = std::vector<double>;

Poly mul(const Poly &a, const Poly &b) {
    Poly c(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
    return c;
}

Poly add(Poly a, const Poly &b) {
    if (a.size() < b.size()) a.resize(b.size(), 0.0);
    for (std::size_t i = 0; i < b.size(); ++i) a[i] += b[i];
    return a;
}

double eval(const Poly &c, double x) {
    double v = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) v = v * x + c[i];
    return v;
}

}  // namespace

std::vector<double> learnability_critical_points(const NoiseSpec &s) {
    const double J = s.J();
    if (!(J > 0.0)) throw std::domain_error("learnability_argmax: requires J > 0");
    // 4(1-2p) q(1-q) + J (1-2q) p(1-p) = 0, written in x = p - 1/2 with q = c - J x
    const double c = 0.5 * (1.0 + (s.delta_fp - s.delta_fn));
    const Poly q{c, -J};
    const Poly qc{1.0 - c, J};
    const Poly w{0.25, 0.0, -1.0};
    const Poly one_m_2p{0.0, -2.0};
    const Poly one_m_2q{s.delta_fn - s.delta_fp, 2.0 * J};
    Poly f = add(mul(Poly{4.0}, mul(one_m_2p, mul(q, qc))), mul(Poly{J}, mul(one_m_2q, w)));
    while (f.size() > 1 && std::abs(f.back()) < 1e-300) f.pop_back();

    std::vector<double> candidates;
    const int deg = int(f.size()) - 1;
    if (deg == 1) {
        candidates.push_back(-f[0] / f[1]);
    } else if (deg >= 2) {
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(deg, deg);
        for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
        for (int i = 0; i < deg; ++i) C(i, deg - 1) = -f[i] / f[deg];
        Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
        for (int i = 0; i < deg; ++i) {
            auto z = es.eigenvalues()[i];
            if (std::abs(z.imag()) > 1e-7 * std::max(1.0, std::abs(z.real()))) continue;
            candidates.push_back(z.real());
        }
    }
    Poly df(f.size() > 1 ? f.size() - 1 : 1, 0.0);
    for (std::size_t i = 1; i < f.size(); ++i) df[i - 1] = double(i) * f[i];

    std::vector<double> roots;
    for (double r : candidates) {
        for (int it = 0; it < 50; ++it) {
            const double d = eval(df, r);
            if (d == 0.0) break;
            const double step = eval(f, r) / d;
            r -= step;
            if (std::abs(step) < 1e-17) break;
        }
        const double p = 0.5 + r;
        if (p > 0.0 && p < 1.0) roots.push_back(p);
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

double learnability_argmax(const NoiseSpec &s) {
    const auto roots = learnability_critical_points(s);
    double best = 0.0, best_val = -1.0;
    for (double r : roots) {
        const double v = learnability_speed(s, r);
        if (v > best_val) {
            best_val = v;
            best = r;
        }
    }
    if (best_val < 0.0) {
        // No interior critical point: take the better endpoint.
        best = learnability_speed(s, 0.0) >= learnability_speed(s, 1.0) ? 0.0 : 1.0;
    }
    return best;
}

bool noisy_check(bool truth, const NoiseSpec &spec, Rng &rng) {
    return rng.bernoulli(truth ? spec.tpr() : spec.fpr());
}

NoiseSchedule::NoiseSchedule(const NoiseSpec &constant) { add(0, constant); }

void NoiseSchedule::add(std::uint64_t from_step, const NoiseSpec &spec) {
    if (!steps_.empty() && from_step <= steps_.back())
        throw std::invalid_argument("NoiseSchedule: steps must be increasing");
    if (steps_.empty() && from_step != 0)
        throw std::invalid_argument("NoiseSchedule: first entry must start at step 0");
    steps_.push_back(from_step);
    specs_.push_back(spec);
}

const NoiseSpec &NoiseSchedule::at(std::uint64_t step) const {
    if (specs_.empty()) throw std::logic_error("NoiseSchedule is empty");
    auto it = std::upper_bound(steps_.begin(), steps_.end(), step);
    return specs_[std::size_t(it - steps_.begin()) - 1];
}

}  // namespace nrl
