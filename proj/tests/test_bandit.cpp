#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "doctest.h"
#include "noisyrl/bandit.hpp"

using namespace nrl;

namespace {

SimConfig base(std::size_t K, std::size_t M, std::size_t G, double eta) {
    SimConfig c;
    c.K = K;
    c.M = M;
    c.G = G;
    c.eta = eta;
    return c;
}

double mean_of(const Vec &v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

}  // namespace

TEST_CASE("group sampling") {
    const std::vector<char> truth{1, 1, 0};
    Rng rng(1);
    auto gs = sample_group(ProbVector::vertex(3, 0), truth, NoiseSpec(0, 0), 16, rng);
    for (auto r : gs.rewards) CHECK(r == 1);
    for (auto a : gs.arms) CHECK(a == 0);
    CHECK_THROWS(sample_group(ProbVector::uniform(2), truth, NoiseSpec(0, 0), 4, rng));

    const ProbVector pol({0.1, 0.3, 0.6});
    std::vector<double> cnt(3, 0.0);
    const int n = 1000000;
    auto big = sample_group(pol, truth, NoiseSpec(0.2, 0.1), n, rng);
    for (auto a : big.arms) cnt[a] += 1;
    for (std::size_t i = 0; i < 3; ++i) {
        const double se = std::sqrt(pol[i] * (1 - pol[i]) / n);
        CHECK(std::abs(cnt[i] / n - pol[i]) < 3 * se);
    }
    const NoiseSpec neutral(0.3, 0.7);
    for (const auto &p : {ProbVector::vertex(3, 0), ProbVector::vertex(3, 2), pol}) {
        auto s = sample_group(p, truth, neutral, 200000, rng);
        double m = 0;
        for (auto r : s.rewards) m += r;
        m /= 200000;
        CHECK(std::abs(m - 0.7) < 3 * std::sqrt(0.21 / 200000));
    }
}

TEST_CASE("group normalization") {
    for (auto r : {std::vector<std::uint8_t>{1, 1, 1}, std::vector<std::uint8_t>{0, 0}})
        for (double v : group_normalize(r, 1e-8)) CHECK(v == 0.0);
    auto a = group_normalize({1, 0}, 1e-15);
    CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(a[1] == doctest::Approx(-1.0).epsilon(1e-13));
    auto b = group_normalize({1, 0, 1, 0, 1, 1, 0, 0}, 1e-8);
    for (double v : b) CHECK(std::abs(std::abs(v) - 1.0) < 5e-8);
    CHECK_THROWS(group_normalize({1}, 1e-8));

    Rng rng(3);
    for (int k = 0; k < 500; ++k) {
        std::vector<std::uint8_t> r(2 + rng() % 30);
        for (auto &x : r) x = rng.bernoulli(0.4);
        auto adv = group_normalize(r, 1e-8);
        CHECK(std::abs(std::accumulate(adv.begin(), adv.end(), 0.0)) < 1e-12);
        const double m = mean_of(Vec(r.begin(), r.end()));
        double sr = 0, sa = 0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            sr += (r[i] - m) * (r[i] - m);
            sa += adv[i] * adv[i];
        }
        sr = std::sqrt(sr / double(r.size()));
        sa = std::sqrt(sa / double(r.size()));
        if (sr > 0) CHECK(sa == doctest::Approx(sr / (sr + 1e-8)).epsilon(1e-12));
    }
}

TEST_CASE("reinforce step records") {
    auto cfg = base(2, 1, 8, 0.1);
    const auto truth = cfg.truth_labels();
    Rng rng(4);
    const ProbVector good({0.4, 0.6, 0.0});
    auto r = reinforce_step(good, truth, NoiseSpec(0, 0), cfg, rng);
    for (double v : r.record.advantages) CHECK(v == 0.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.policy[i] == doctest::Approx(good[i]).epsilon(1e-15));

    ProbVector p({0.3, 0.3, 0.4});
    for (int k = 0; k < 200; ++k) {
        auto s = reinforce_step(p, truth, NoiseSpec(0.2, 0.1), cfg, rng);
        const double sum = std::accumulate(s.record.advantages.begin(), s.record.advantages.end(), 0.0);
        CHECK(std::abs(sum) < 1e-9);
        CHECK(std::accumulate(s.record.arm_counts.begin(), s.record.arm_counts.end(), 0u) == 8u);
        CHECK(s.record.pre == p.values());
        CHECK(s.record.post == s.policy.values());
        p = s.policy;
    }
}

TEST_CASE("expected logit drift matches the mean-field direction") {
    auto cfg = base(2, 1, 8, 0.01);
    cfg.norm = AdvantageNorm::population;
    cfg.seed = 77;
    const ProbVector p({0.25, 0.25, 0.5});
    const NoiseSpec spec(0, 0);
    const auto est = estimate_logit_drift(p, spec, cfg, 100000);
    const auto st = reward_stats(spec, 0.5);
    const Vec want = jacobian_apply(p, Vec{st.a_good, st.a_good, st.a_bad});
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(est.mean[i] - cfg.eta * want[i]) < 3 * est.se[i] + 1e-12 * cfg.eta);

    const auto cov = estimate_rollout_covariance(p, 8, 5, 100000);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const double want_ij = ((i == j ? p[i] : 0.0) - p[i] * p[j]) / 8.0;
            CHECK(std::abs(cov.mean[i * 3 + j] - want_ij) < 3 * cov.se[i * 3 + j]);
        }
}

TEST_CASE("clipped step") {
    const Vec p{0.2, 0.3, 0.5};
    const std::vector<std::size_t> arms{0, 2, 2, 1, 0};
    const Vec adv{1.0, -0.5, 0.3, 0.2, -1.0};
    const Vec a = reinforce_update(p, arms, adv, 0.1);
    for (double lo : {0.0, 0.2})
        for (double hi : {0.0, 0.2}) {
            double frac = 1.0;
            const Vec b = clipped_update(p, p, arms, adv, 0.1, lo, hi, &frac);
            CHECK(frac == 0.0);
            for (std::size_t i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
        }
    double frac = 0;
    const Vec pn{0.1, 0.3, 0.6};
    clipped_update(p, pn, arms, adv, 0.1, 0.2, 0.2, &frac);
    CHECK(frac == doctest::Approx(2.0 / 5));
    clipped_update(p, pn, arms, adv, 0.1, 0.0, 0.2, &frac);
    CHECK(frac == 0.0);

    auto cfg = base(3, 2, 8, 1e-4);
    cfg.mode = SimMode::grpo_clipped;
    cfg.steps = 10000;
    cfg.record_every = 1000;
    auto tr = run(cfg, NoiseSpec(0.1, 0.1), ProbVector::uniform(5));
    for (std::size_t i = 1; i < tr.samples.size(); ++i) CHECK(tr.samples[i].clipped_fraction == 0.0);

    Vec le, ld;
    for (double eta : {1e-2, 1e-3, 1e-4}) {
        auto c = base(2, 1, 8, eta);
        c.seed = 11;
        auto d = estimate_clip_difference(ProbVector({0.3, 0.2, 0.5}), NoiseSpec(0.1, 0.2), c, 20000);
        double n = 0;
        for (double v : d.mean) n += v * v;
        le.push_back(std::log(eta));
        ld.push_back(0.5 * std::log(n));
    }
    const double slope = (ld[0] - ld[2]) / (le[0] - le[2]);
    CHECK(slope >= 1.8);
}

TEST_CASE("wright fisher step") {
    auto cfg = base(2, 1, 8, 0.05);
    const ProbVector x({0.3, 0.2, 0.5});
    const NoiseSpec spec(0.1, 0.2);
    Rng rng(6);
    auto y = wright_fisher_step(x, spec, cfg, rng, 0.0);
    const Vec f = grpo_field(x, advantage_vector(spec, 0.5, 2, 1));
    for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(x[i] + 0.05 * f[i]).epsilon(1e-14));

    const int n = 100000;
    std::vector<Vec> d(n);
    for (int r = 0; r < n; ++r) {
        Rng rr(9, std::uint64_t(r));
        auto z = wright_fisher_step(x, spec, cfg, rr, 2.0);
        d[r].resize(3);
        for (std::size_t i = 0; i < 3; ++i) d[r][i] = z[i] - y[i];
    }
    const double scale = 0.05 * 0.05 * 2.0 / 8.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double m = 0, m2 = 0;
            for (const auto &v : d) {
                const double t = v[i] * v[j];
                m += t;
                m2 += t * t;
            }
            m /= n;
            const double se = std::sqrt((m2 / n - m * m) / (n - 1));
            const double want = scale * ((i == j ? x[i] : 0.0) - x[i] * x[j]);
            CHECK(std::abs(m - want) < 3 * se);
        }
}

TEST_CASE("wright fisher approaches the ode as G grows") {
    auto cfg = base(1, 1, 4, 1e-2);
    cfg.mode = SimMode::wright_fisher;
    cfg.steps = 400;
    cfg.record_every = 10;
    const ProbVector x0({0.5, 0.5});
    const NoiseSpec spec(0, 0);
    Vec gaps;
    for (std::size_t G : {4, 64, 1024}) {
        cfg.G = G;
        cfg.seed = 123;
        double worst = 0;
        for (int r = 0; r < 20; ++r) {
            cfg.seed = derive_seed(123, r);
            auto tr = run(cfg, spec, x0);
            for (const auto &s : tr.samples)
                worst = std::max(worst, std::abs(s.p - closed_form_p(0.5, 2 * cfg.eta, double(s.step))));
        }
        gaps.push_back(worst);
    }
    CHECK(gaps[1] < gaps[0]);
    CHECK(gaps[2] < gaps[1]);
    CHECK(gaps[2] < 0.01);
}

TEST_CASE("run determinism and execution equivalence") {
    auto cfg = base(3, 2, 8, 1e-2);
    cfg.steps = 300;
    cfg.record_every = 50;
    cfg.seed = 2024;
    for (SimMode mode : {SimMode::reinforce, SimMode::grpo_clipped, SimMode::wright_fisher}) {
        cfg.mode = mode;
        auto a = run(cfg, NoiseSpec(0.1, 0.2), ProbVector::uniform(5));
        auto b = run(cfg, NoiseSpec(0.1, 0.2), ProbVector::uniform(5));
        CHECK(a.final_policy == b.final_policy);
        REQUIRE(a.samples.size() == 7);
        CHECK(std::isnan(a.samples[0].reward_mean));
        CHECK(a.samples.back().step == 300);
        NoiseSchedule sched(NoiseSpec(0.1, 0.2));
        sched.add(150, NoiseSpec(0.5, 0.4));
        auto s = run_replicas(cfg, sched, ProbVector::uniform(5), 6, Execution::serial);
        auto p = run_replicas(cfg, sched, ProbVector::uniform(5), 6, Execution::parallel);
        for (std::size_t r = 0; r < 6; ++r) {
            CHECK(s[r].final_policy == p[r].final_policy);
            CHECK(s[r].seed == replica_seed(cfg.seed, r));
            CHECK(s[r].replica == r);
            for (std::size_t i = 0; i < s[r].samples.size(); ++i) {
                CHECK(s[r].samples[i].p == p[r].samples[i].p);
                CHECK(s[r].samples[i].tau == p[r].samples[i].tau);
            }
        }
    }
    auto c = base(2, 1, 8, 0.01);
    c.seed = 3;
    auto a = estimate_logit_drift(ProbVector({0.2, 0.3, 0.5}), NoiseSpec(0.1, 0.1), c, 3000, Execution::serial);
    auto b = estimate_logit_drift(ProbVector({0.2, 0.3, 0.5}), NoiseSpec(0.1, 0.1), c, 3000, Execution::parallel);
    CHECK(a.mean == b.mean);
    CHECK(a.se == b.se);
}

TEST_CASE("support preservation") {
    auto cfg = base(3, 2, 8, 0.05);
    cfg.steps = 500;
    cfg.beta = 0.1;
    const ProbVector init({0.5, 0.0, 0.2, 0.3, 0.0});
    for (SimMode mode : {SimMode::reinforce, SimMode::grpo_clipped, SimMode::wright_fisher}) {
        cfg.mode = mode;
        auto tr = run(cfg, NoiseSpec(0.2, 0.2), init);
        CHECK(tr.final_policy[1] == 0.0);
        CHECK(tr.final_policy[4] == 0.0);
    }
}

TEST_CASE("kl logit update matches the two-class drift") {
    auto cfg = base(2, 2, 8, 0.01);
    cfg.beta = 0.3;
    cfg.p_ref = 0.35;
    const ProbVector p({0.1, 0.3, 0.45, 0.15});
    const Vec k = kl_logit_update(p.values(), cfg);
    double m = 0;
    for (std::size_t i = 0; i < 4; ++i) m += p[i] * k[i];
    CHECK(std::abs(m) < 1e-16);
    const Vec jp = jacobian_apply(p, k);
    const BlockState b = decompose(p, 2, 2);
    CHECK(jp[2] + jp[3] == doctest::Approx(kl_drift(b, cfg.kl()).dp).epsilon(1e-13));

    cfg.kl_mode = KlMode::full_reverse;
    cfg.y_ref = {0.5, 0.5};
    cfg.z_ref = {0.2, 0.8};
    const Vec kf = kl_logit_update(p.values(), cfg);
    const Vec jf = jacobian_apply(p, kf);
    CHECK(jf[2] + jf[3] == doctest::Approx(kl_drift(b, cfg.kl()).dp).epsilon(1e-13));
}

TEST_CASE("simulator tracks the closed form and stays neutral at J = 0") {
    auto cfg = base(1, 1, 64, 1e-3);
    cfg.steps = 2000;
    cfg.record_every = 100;
    cfg.seed = 55;
    auto reps = run_replicas(cfg, NoiseSchedule(NoiseSpec(0, 0)), ProbVector::uniform(2), 200);
    double worst = 0;
    for (std::size_t i = 0; i < reps[0].samples.size(); ++i) {
        double m = 0;
        for (const auto &r : reps) m += r.samples[i].p;
        m /= double(reps.size());
        worst = std::max(worst, std::abs(m - closed_form_p(0.5, 2 * cfg.eta, double(reps[0].samples[i].step))));
    }
    CHECK(worst < 0.02);

    auto c0 = base(1, 1, 8, 1e-2);
    c0.steps = 200;
    c0.record_every = 50;
    c0.seed = 56;
    auto neutral = run_replicas(c0, NoiseSchedule(NoiseSpec(0.4, 0.6)), ProbVector::uniform(2), 10000);
    for (std::size_t i = 1; i < neutral[0].samples.size(); ++i) {
        double m = 0, m2 = 0;
        for (const auto &r : neutral) {
            const double d = r.samples[i].p - 0.5;
            m += d;
            m2 += d * d;
        }
        const double n = double(neutral.size());
        m /= n;
        const double se = std::sqrt((m2 / n - m * m) / (n - 1));
        CHECK(std::abs(m) < 3 * se);
    }
}

TEST_CASE("config validation") {
    SimConfig c;
    c.G = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = SimConfig{};
    c.clip_low = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = SimConfig{};
    c.beta = 0.1;
    c.kl_mode = KlMode::full_reverse;
    c.y_ref = {1.0, 0.0, 0.0};
    CHECK_THROWS(c.validate());
}

TEST_CASE("FP/FN asymmetry at fixed J") {
    // (fpr, fnr) = (0.7, 0) against (0, 0.7), J = 0.3 for both
    const NoiseSpec fp_heavy(0.0, 0.7), fn_heavy(0.7, 0.0);
    auto ode_hit = [](const NoiseSpec &s) {
        OdeConfig oc;
        oc.eta = 1e-2;
        oc.step = 1.0;
        oc.horizon = 20000;
        auto tr = integrate(make_block(0.4, 3, 2), s, oc);
        for (const auto &x : tr.samples)
            if (x.p <= 0.1) return x.t;
        return std::nan("");
    };
    CHECK(ode_hit(fp_heavy) < ode_hit(fn_heavy));

    auto median_hit = [](const NoiseSpec &s) {
        auto c = base(3, 2, 8, 1e-2);
        c.steps = 6000;
        c.record_every = 10;
        c.seed = 7;
        auto reps = run_replicas(c, NoiseSchedule(s), ProbVector::uniform(5), 41);
        Vec hits;
        for (const auto &r : reps) {
            double h = INFINITY;
            for (const auto &x : r.samples)
                if (x.p <= 0.1) {
                    h = double(x.step);
                    break;
                }
            hits.push_back(h);
        }
        std::nth_element(hits.begin(), hits.begin() + 20, hits.end());
        return hits[20];
    };
    const double a = median_hit(fp_heavy), b = median_hit(fn_heavy);
    CHECK(std::isfinite(a));
    CHECK(std::isfinite(b));
    CHECK(a < b);
}
