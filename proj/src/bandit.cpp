#include "noisyrl/bandit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "noisyrl/meanfield.hpp"

namespace nrl {

void SimConfig::validate() const {
    if (K == 0 || M == 0) throw std::invalid_argument("SimConfig: K and M must be >= 1");
    if (G < 2) throw std::invalid_argument("SimConfig: G must be >= 2");
    if (!(eta > 0.0)) throw std::invalid_argument("SimConfig: eta must be > 0");
    if (!(clip_low >= 0.0 && clip_low < 1.0 && clip_high >= 0.0 && clip_high < 1.0))
        throw std::invalid_argument("SimConfig: clip thresholds must lie in [0,1)");
    if (!(beta >= 0.0)) throw std::invalid_argument("SimConfig: beta must be >= 0");
    if (!(zscore_epsilon > 0.0)) throw std::invalid_argument("SimConfig: zscore_epsilon must be > 0");
    if (!(nu >= 0.0)) throw std::invalid_argument("SimConfig: nu must be >= 0");
    if (record_every == 0) throw std::invalid_argument("SimConfig: record_every must be >= 1");
    if (beta > 0.0) kl().validate(K, M);
}

std::vector<char> SimConfig::truth_labels() const {
    std::vector<char> t(K + M, 0);
    std::fill(t.begin(), t.begin() + long(K), 1);
    return t;
}

KlConfig SimConfig::kl() const {
    KlConfig k;
    k.beta = beta;
    k.p_ref = p_ref;
    k.mode = kl_mode;
    k.y_ref = y_ref.empty() ? Vec(K, 1.0 / double(K)) : y_ref;
    k.z_ref = z_ref.empty() ? Vec(M, 1.0 / double(M)) : z_ref;
    return k;
}

namespace {

std::size_t draw_arm(const Vec &p, Rng &rng) {
    const double u = rng.uniform();
    double c = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        c += p[i];
        last = i;
        if (u < c) return i;
    }
    return last;
}

void sample_into(const Vec &p, const std::vector<char> &truth, const NoiseSpec &spec, std::size_t G, Rng &rng,
                 std::vector<std::size_t> &arms, std::vector<std::uint8_t> &rewards) {
    arms.resize(G);
    rewards.resize(G);
    for (std::size_t g = 0; g < G; ++g) {
        arms[g] = draw_arm(p, rng);
        rewards[g] = noisy_check(truth[arms[g]] != 0, spec, rng) ? 1 : 0;
    }
}

void group_normalize_into(const std::vector<std::uint8_t> &r, double eps, Vec &adv) {
    const std::size_t G = r.size();
    adv.resize(G);
    double mean = 0.0;
    for (auto v : r) mean += v;
    mean /= double(G);
    double var = 0.0;
    for (auto v : r) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / double(G));
    if (sd == 0.0) {
        std::fill(adv.begin(), adv.end(), 0.0);
        return;
    }
    for (std::size_t g = 0; g < G; ++g) adv[g] = (r[g] - mean) / (sd + eps);
}

void population_normalize_into(const std::vector<std::uint8_t> &r, const NoiseSpec &spec, double p_bad, Vec &adv) {
    adv.resize(r.size());
    const double q = mean_reward(spec, p_bad);
    const double sig = reward_sigma(spec, p_bad);
    for (std::size_t g = 0; g < r.size(); ++g) adv[g] = sig > 0.0 ? (r[g] - q) / sig : 0.0;
}

void reinforce_into(const Vec &p, const std::vector<std::size_t> &arms, const Vec &adv, double eta, Vec &dtheta) {
    const std::size_t d = p.size();
    dtheta.assign(d, 0.0);
    double asum = 0.0;
    for (std::size_t g = 0; g < arms.size(); ++g) {
        dtheta[arms[g]] += adv[g];
        asum += adv[g];
    }
    const double scale = eta / double(arms.size());
    for (std::size_t i = 0; i < d; ++i) dtheta[i] = scale * (dtheta[i] - asum * p[i]);
}

double clip_ratio(double rho, double lo, double hi, bool &clipped) {
    clipped = false;
    if (lo > 0.0 && rho < 1.0 - lo) {
        clipped = true;
        return 1.0 - lo;
    }
    if (hi > 0.0 && rho > 1.0 + hi) {
        clipped = true;
        return 1.0 + hi;
    }
    return rho;
}

void softmax_into(const Vec &theta, const std::vector<char> &active, Vec &p) {
    p.resize(theta.size());
    double mx = -INFINITY;
    for (std::size_t i = 0; i < theta.size(); ++i)
        if (active[i]) mx = std::max(mx, theta[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) s += (p[i] = active[i] ? std::exp(theta[i] - mx) : 0.0);
    for (double &v : p) v /= s;
}

double bad_mass(const Vec &p, std::size_t K) {
    double s = 0.0;
    for (std::size_t i = K; i < p.size(); ++i) s += p[i];
    return s;
}

Vec flat_kl_gradient(const Vec &p, const SimConfig &cfg) {
    const std::size_t K = cfg.K, d = p.size();
    Vec g(d, 0.0);
    if (cfg.kl_mode == KlMode::two_class) {
        const double pb = bad_mass(p, K);
        const double lg = std::log(std::max(1.0 - pb, 1e-300) / (1.0 - cfg.p_ref));
        const double lb = std::log(std::max(pb, 1e-300) / cfg.p_ref);
        for (std::size_t i = 0; i < d; ++i) g[i] = i < K ? lg : lb;
    } else {
        const KlConfig k = cfg.kl();
        for (std::size_t i = 0; i < d; ++i) {
            const double ref = i < K ? (1.0 - cfg.p_ref) * k.y_ref[i] : cfg.p_ref * k.z_ref[i - K];
            g[i] = p[i] > 0.0 ? std::log(p[i] / ref) : 0.0;
        }
    }
    return g;
}

// Mutable per-replica state for the logit-space samplers.
struct Worker {
    const SimConfig &cfg;
    std::vector<char> truth;
    std::vector<char> active;
    Vec theta, p, p_new, dtheta, dclip, adv;
    std::vector<std::size_t> arms;
    std::vector<std::uint8_t> rewards;

    Worker(const SimConfig &c, const Vec &initial) : cfg(c), truth(c.truth_labels()) {
        const std::size_t d = initial.size();
        active.resize(d);
        theta.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            active[i] = initial[i] > 0.0;
            theta[i] = active[i] ? std::log(initial[i]) : 0.0;
        }
        p = initial;
    }

    void advantages(const NoiseSpec &spec) {
        if (cfg.norm == AdvantageNorm::group)
            group_normalize_into(rewards, cfg.zscore_epsilon, adv);
        else
            population_normalize_into(rewards, spec, bad_mass(p, cfg.K), adv);
    }

    void add_kl(Vec &dt) const {
        if (cfg.beta <= 0.0) return;
        const Vec k = kl_logit_update(p, cfg);
        for (std::size_t i = 0; i < dt.size(); ++i) dt[i] += k[i];
    }

    // One policy-gradient step; returns clipped fraction.
    double step(const NoiseSpec &spec, Rng &rng) {
        sample_into(p, truth, spec, cfg.G, rng, arms, rewards);
        advantages(spec);
        reinforce_into(p, arms, adv, cfg.eta, dtheta);
        add_kl(dtheta);
        double frac = 0.0;
        if (cfg.mode == SimMode::grpo_clipped) {
            Vec th = theta;
            for (std::size_t i = 0; i < th.size(); ++i) th[i] += dtheta[i];
            softmax_into(th, active, p_new);
            dclip = clipped_update(p, p_new, arms, adv, cfg.eta, cfg.clip_low, cfg.clip_high, &frac);
            add_kl(dclip);
            std::swap(dtheta, dclip);
        }
        for (std::size_t i = 0; i < theta.size(); ++i)
            if (active[i]) theta[i] += dtheta[i];
        softmax_into(theta, active, p);
        return frac;
    }
};

Eigen::MatrixXd sqrt_fisher(const Vec &p) {
    const auto d = Eigen::Index(p.size());
    Eigen::MatrixXd S(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) S(i, j) = (i == j ? p[i] : 0.0) - p[i] * p[j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

void wright_fisher_into(Vec &x, const NoiseSpec &spec, const SimConfig &cfg, Rng &rng, double nu) {
    const std::size_t d = x.size();
    const double pb = bad_mass(x, cfg.K);
    const ProbVector pv = ProbVector::normalized(x);
    Vec drift = grpo_field(pv, advantage_vector(spec, pb, cfg.K, cfg.M));
    for (double &v : drift) v *= cfg.eta;
    if (cfg.beta > 0.0) {
        const Vec k = kl_logit_update(x, cfg);
        const Vec kp = jacobian_apply(pv, k);
        for (std::size_t i = 0; i < d; ++i) drift[i] += kp[i];
    }
    Vec noise(d, 0.0);
    if (nu > 0.0) {
        const Eigen::MatrixXd R = sqrt_fisher(x);
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd xi(static_cast<Eigen::Index>(d));
        for (std::size_t i = 0; i < d; ++i) xi[Eigen::Index(i)] = normal(rng);
        const Eigen::VectorXd n = R * xi;
        const double scale = cfg.eta * std::sqrt(nu / double(cfg.G));
        for (std::size_t i = 0; i < d; ++i) noise[i] = scale * n[Eigen::Index(i)];
    }
    for (std::size_t i = 0; i < d; ++i) {
        if (x[i] <= 0.0) {
            x[i] = 0.0;
            continue;
        }
        const double v = x[i] + drift[i] + noise[i];
        x[i] = v < kClampBand ? std::max(std::abs(v), kClampBand) : v;
    }
    double s = 0.0;
    for (double v : x) s += v;
    for (double &v : x) v /= s;
}

SimSample make_sample(std::uint64_t step, double tau, const Vec &x, const SimConfig &cfg, const NoiseSpec &spec) {
    SimSample s;
    s.step = step;
    s.tau = tau;
    const BlockState b = decompose(ProbVector::normalized(x), cfg.K, cfg.M);
    s.p = b.p;
    s.logit = std::log(b.p) - std::log1p(-b.p);
    s.y = b.y.values();
    s.z = b.z.values();
    s.s2 = b.s2();
    s.t2 = b.t2();
    s.c_geo = s.s2 + s.t2;
    s.lyapunov = lyapunov_value(b, spec);
    return s;
}

}  // namespace

GroupSample sample_group(const ProbVector &policy, const std::vector<char> &truth, const NoiseSpec &spec,
                         std::size_t G, Rng &rng) {
    if (truth.size() != policy.size()) throw std::invalid_argument("sample_group: truth label size");
    GroupSample gs;
    sample_into(policy.values(), truth, spec, G, rng, gs.arms, gs.rewards);
    return gs;
}

Vec group_normalize(const std::vector<std::uint8_t> &rewards, double epsilon) {
    if (rewards.size() < 2) throw std::invalid_argument("group_normalize: need at least 2 rewards");
    Vec adv;
    group_normalize_into(rewards, epsilon, adv);
    return adv;
}

Vec population_normalize(const std::vector<std::uint8_t> &rewards, const NoiseSpec &spec, double p_bad) {
    Vec adv;
    population_normalize_into(rewards, spec, p_bad, adv);
    return adv;
}

Vec reinforce_update(const Vec &p, const std::vector<std::size_t> &arms, const Vec &adv, double eta) {
    Vec d;
    reinforce_into(p, arms, adv, eta, d);
    return d;
}

Vec clipped_update(const Vec &p_old, const Vec &p_new, const std::vector<std::size_t> &arms, const Vec &adv,
                   double eta, double clip_low, double clip_high, double *clipped_fraction) {
    const std::size_t d = p_old.size();
    Vec dt(d, 0.0);
    double wsum = 0.0;
    std::size_t nclip = 0;
    for (std::size_t g = 0; g < arms.size(); ++g) {
        const std::size_t i = arms[g];
        bool c = false;
        const double w = adv[g] * clip_ratio(p_new[i] / p_old[i], clip_low, clip_high, c);
        nclip += c;
        dt[i] += w;
        wsum += w;
    }
    const double scale = eta / double(arms.size());
    for (std::size_t i = 0; i < d; ++i) dt[i] = scale * (dt[i] - wsum * p_new[i]);
    if (clipped_fraction) *clipped_fraction = double(nclip) / double(arms.size());
    return dt;
}

Vec kl_logit_update(const Vec &p, const SimConfig &cfg) {
    Vec g = flat_kl_gradient(p, cfg);
    double m = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) m += p[i] * g[i];
    for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] > 0.0 ? -cfg.beta * (g[i] - m) : 0.0;
    return g;
}

namespace {

StepResult policy_step(const ProbVector &policy, const std::vector<char> &truth, const NoiseSpec &spec,
                       const SimConfig &cfg, Rng &rng, SimMode mode) {
    cfg.validate();
    if (truth.size() != policy.size()) throw std::invalid_argument("step: truth label size");
    SimConfig c = cfg;
    c.mode = mode;
    Worker w(c, policy.values());
    w.truth = truth;
    StepResult r{policy, {}};
    r.record.pre = policy.values();
    r.record.clipped_fraction = w.step(spec, rng);
    r.record.post = w.p;
    r.record.rewards = w.rewards;
    r.record.advantages = w.adv;
    r.record.arm_counts.assign(policy.size(), 0);
    for (auto a : w.arms) ++r.record.arm_counts[a];
    r.policy = ProbVector(w.p);
    return r;
}

}  // namespace

StepResult reinforce_step(const ProbVector &policy, const std::vector<char> &truth, const NoiseSpec &spec,
                          const SimConfig &cfg, Rng &rng) {
    return policy_step(policy, truth, spec, cfg, rng, SimMode::reinforce);
}

StepResult grpo_clipped_step(const ProbVector &policy, const std::vector<char> &truth, const NoiseSpec &spec,
                             const SimConfig &cfg, Rng &rng) {
    return policy_step(policy, truth, spec, cfg, rng, SimMode::grpo_clipped);
}

ProbVector wright_fisher_step(const ProbVector &state, const NoiseSpec &spec, const SimConfig &cfg, Rng &rng,
                              double nu) {
    cfg.validate();
    if (state.size() != cfg.K + cfg.M) throw std::invalid_argument("wright_fisher_step: dimension");
    Vec x = state.values();
    wright_fisher_into(x, spec, cfg, rng, nu);
    return ProbVector(std::move(x));
}

SimTrajectory run(const SimConfig &cfg, const NoiseSchedule &noise, const ProbVector &initial) {
    cfg.validate();
    if (initial.size() != cfg.K + cfg.M) throw std::invalid_argument("run: initial policy dimension");
    Rng rng(cfg.seed);
    SimTrajectory tr;
    tr.seed = cfg.seed;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    Worker w(cfg, initial.values());
    Vec x = initial.values();
    double tau = 0.0;
    double clip_acc = 0.0, reward_acc = 0.0;
    std::uint64_t window = 0;
    {
        SimSample s = make_sample(0, 0.0, x, cfg, noise.at(0));
        s.clipped_fraction = nan;
        s.reward_mean = nan;
        tr.samples.push_back(std::move(s));
    }
    for (std::uint64_t k = 0; k < cfg.steps; ++k) {
        const NoiseSpec &spec = noise.at(k);
        const Vec &cur = cfg.mode == SimMode::wright_fisher ? x : w.p;
        tau += cfg.eta * std::abs(signal_gain(spec, bad_mass(cur, cfg.K)));
        if (cfg.mode == SimMode::wright_fisher) {
            wright_fisher_into(x, spec, cfg, rng, cfg.nu);
        } else {
            clip_acc += w.step(spec, rng);
            double r = 0.0;
            for (auto v : w.rewards) r += v;
            reward_acc += r / double(w.rewards.size());
        }
        ++window;
        const std::uint64_t step = k + 1;
        if (step % cfg.record_every == 0 || step == cfg.steps) {
            const Vec &now = cfg.mode == SimMode::wright_fisher ? x : w.p;
            SimSample s = make_sample(step, tau, now, cfg, spec);
            s.clipped_fraction = clip_acc / double(window);
            s.reward_mean = cfg.mode == SimMode::wright_fisher ? nan : reward_acc / double(window);
            tr.samples.push_back(std::move(s));
            clip_acc = reward_acc = 0.0;
            window = 0;
        }
    }
    tr.final_policy = cfg.mode == SimMode::wright_fisher ? x : w.p;
    return tr;
}

SimTrajectory run(const SimConfig &cfg, const NoiseSpec &spec, const ProbVector &initial) {
    return run(cfg, NoiseSchedule(spec), initial);
}

std::uint64_t replica_seed(std::uint64_t base, std::size_t replica) { return derive_seed(base, replica); }

std::vector<SimTrajectory> run_replicas(const SimConfig &cfg, const NoiseSchedule &noise, const ProbVector &initial,
                                        std::size_t replicas, Execution exec) {
    cfg.validate();
    std::vector<SimTrajectory> out(replicas);
    const auto n = static_cast<long long>(replicas);
    auto one = [&](long long r) {
        SimConfig c = cfg;
        c.seed = replica_seed(cfg.seed, std::size_t(r));
        out[std::size_t(r)] = run(c, noise, initial);
        out[std::size_t(r)].replica = std::size_t(r);
    };
    if (exec == Execution::parallel) {
        std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 1)
        for (long long r = 0; r < n; ++r) {
            try {
                one(r);
            } catch (...) {
#pragma omp critical
                err = std::current_exception();
            }
        }
        if (err) std::rethrow_exception(err);
    } else {
        for (long long r = 0; r < n; ++r) one(r);
    }
    return out;
}

namespace {

// Runs f(replica, rng, out_row) for each replica into a row-major table, then
// reduces mean and standard error in replica order.
template <class F>
MomentEstimate moments(std::size_t replicas, std::size_t width, std::uint64_t seed, Execution exec, F &&f) {
    if (replicas < 2) throw std::invalid_argument("moment estimate needs >= 2 replicas");
    std::vector<double> table(replicas * width);
    const auto n = static_cast<long long>(replicas);
    auto one = [&](long long r) {
        Rng rng(seed, std::uint64_t(r));
        f(rng, table.data() + std::size_t(r) * width);
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (long long r = 0; r < n; ++r) one(r);
    } else {
        for (long long r = 0; r < n; ++r) one(r);
    }
    MomentEstimate m;
    m.mean.assign(width, 0.0);
    m.se.assign(width, 0.0);
    for (std::size_t r = 0; r < replicas; ++r)
        for (std::size_t j = 0; j < width; ++j) m.mean[j] += table[r * width + j];
    for (double &v : m.mean) v /= double(replicas);
    for (std::size_t r = 0; r < replicas; ++r)
        for (std::size_t j = 0; j < width; ++j) {
            const double e = table[r * width + j] - m.mean[j];
            m.se[j] += e * e;
        }
    for (double &v : m.se) v = std::sqrt(v / double(replicas - 1) / double(replicas));
    return m;
}

}  // namespace

MomentEstimate estimate_logit_drift(const ProbVector &policy, const NoiseSpec &spec, const SimConfig &cfg,
                                    std::size_t replicas, Execution exec) {
    cfg.validate();
    const std::size_t d = policy.size();
    const auto truth = cfg.truth_labels();
    return moments(replicas, d, cfg.seed, exec, [&](Rng &rng, double *row) {
        std::vector<std::size_t> arms;
        std::vector<std::uint8_t> rewards;
        Vec adv, dt;
        sample_into(policy.values(), truth, spec, cfg.G, rng, arms, rewards);
        if (cfg.norm == AdvantageNorm::group)
            group_normalize_into(rewards, cfg.zscore_epsilon, adv);
        else
            population_normalize_into(rewards, spec, bad_mass(policy.values(), cfg.K), adv);
        reinforce_into(policy.values(), arms, adv, cfg.eta, dt);
        std::copy(dt.begin(), dt.end(), row);
    });
}

MomentEstimate estimate_rollout_covariance(const ProbVector &policy, std::size_t G, std::uint64_t seed,
                                           std::size_t replicas, Execution exec) {
    const std::size_t d = policy.size();
    const Vec &p = policy.values();
    return moments(replicas, d * d, seed, exec, [&](Rng &rng, double *row) {
        Vec x(d, 0.0);
        for (std::size_t g = 0; g < G; ++g) x[draw_arm(p, rng)] += 1.0;
        for (std::size_t i = 0; i < d; ++i) x[i] = x[i] / double(G) - p[i];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) row[i * d + j] = x[i] * x[j];
    });
}

MomentEstimate estimate_clip_difference(const ProbVector &policy, const NoiseSpec &spec, const SimConfig &cfg,
                                        std::size_t replicas, Execution exec) {
    cfg.validate();
    const std::size_t d = policy.size();
    const auto truth = cfg.truth_labels();
    std::vector<char> active(d);
    for (std::size_t i = 0; i < d; ++i) active[i] = policy[i] > 0.0;
    return moments(replicas, d, cfg.seed, exec, [&](Rng &rng, double *row) {
        std::vector<std::size_t> arms;
        std::vector<std::uint8_t> rewards;
        Vec adv, dr, th(d), pn;
        sample_into(policy.values(), truth, spec, cfg.G, rng, arms, rewards);
        if (cfg.norm == AdvantageNorm::group)
            group_normalize_into(rewards, cfg.zscore_epsilon, adv);
        else
            population_normalize_into(rewards, spec, bad_mass(policy.values(), cfg.K), adv);
        reinforce_into(policy.values(), arms, adv, cfg.eta, dr);
        for (std::size_t i = 0; i < d; ++i) th[i] = (active[i] ? std::log(policy[i]) : 0.0) + dr[i];
        softmax_into(th, active, pn);
        const Vec dc = clipped_update(policy.values(), pn, arms, adv, cfg.eta, cfg.clip_low, cfg.clip_high);
        for (std::size_t i = 0; i < d; ++i) row[i] = dc[i] - dr[i];
    });
}

}  // namespace nrl
