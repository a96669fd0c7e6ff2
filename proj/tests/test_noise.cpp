#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "noisyrl/noise.hpp"

using namespace nrl;

TEST_CASE("youden index") {
    CHECK(youden(NoiseSpec(0, 0)) == 1.0);
    CHECK(youden(NoiseSpec(0.5, 0.5)) == 0.0);
    CHECK(youden(NoiseSpec(0.5, 0.6)) == doctest::Approx(-0.1).epsilon(1e-14));
    CHECK(NoiseSpec::from_rates(0.9, 0.2).delta_fn == doctest::Approx(0.1));
    CHECK_THROWS(NoiseSpec(-0.1, 0.0));
    CHECK_THROWS(NoiseSpec(0.0, 1.5));
}

TEST_CASE("reward stats against a Monte-Carlo oracle") {
    const NoiseSpec s(0.1, 0.2);
    const double p = 0.5;
    auto r = reward_stats(s, p);
    CHECK(r.q == doctest::Approx(0.55).epsilon(1e-14));
    CHECK(r.sigma == doctest::Approx(0.497494).epsilon(1e-6));
    CHECK(r.gap == doctest::Approx(1.407052).epsilon(1e-6));

    std::mt19937_64 g(11);
    std::bernoulli_distribution arm(p);
    std::uniform_real_distribution<double> u;
    const int n = 10'000'000;
    double sum = 0, sum2 = 0;
    double good_sum = 0, bad_sum = 0;
    int n_good = 0, n_bad = 0;
    for (int i = 0; i < n; ++i) {
        const bool bad = arm(g);
        const int rew = u(g) < (bad ? s.delta_fp : 1.0 - s.delta_fn);
        sum += rew;
        sum2 += rew * rew;
        if (bad) {
            bad_sum += rew;
            ++n_bad;
        } else {
            good_sum += rew;
            ++n_good;
        }
    }
    const double mean = sum / n, var = sum2 / n - mean * mean, sd = std::sqrt(var);
    CHECK(std::abs(mean - r.q) < 3 * sd / std::sqrt(double(n)));
    CHECK(std::abs(sd - r.sigma) < 3 * std::sqrt(var / (2.0 * n)) + 1e-12);
    // conditional z-scores (E[r|arm] - q) / sigma
    const double zg = (good_sum / n_good - mean) / sd, zb = (bad_sum / n_bad - mean) / sd;
    const double se_g = std::sqrt((1 - s.delta_fn) * s.delta_fn / n_good) / sd;
    const double se_b = std::sqrt((1 - s.delta_fp) * s.delta_fp / n_bad) / sd;
    CHECK(std::abs(zg - r.a_good) < 3 * (se_g + 1.0 / std::sqrt(double(n))));
    CHECK(std::abs(zb - r.a_bad) < 3 * (se_b + 1.0 / std::sqrt(double(n))));

    CHECK(reward_stats(NoiseSpec(0, 0), 0.5).gap == doctest::Approx(2.0));
}

TEST_CASE("reward stats invariants over random specs") {
    std::mt19937_64 g(12);
    std::uniform_real_distribution<double> u;
    for (int k = 0; k < 1000; ++k) {
        const NoiseSpec s(u(g), u(g));
        const double p = u(g);
        auto r = reward_stats(s, p);
        const double J = s.J();
        const double mix = (1 - p) * (1 - s.delta_fn) * s.delta_fn + p * s.delta_fp * (1 - s.delta_fp) +
                           p * (1 - p) * J * J;
        CHECK(std::abs(r.sigma * r.sigma - mix) < 1e-12);
        CHECK(std::abs(r.sigma * r.sigma - r.q * (1 - r.q)) < 1e-12);
        CHECK(r.q >= std::min(s.delta_fp, 1 - s.delta_fn) - 1e-15);
        CHECK(r.q <= std::max(s.delta_fp, 1 - s.delta_fn) + 1e-15);
        if (s.J() > 0) {
            CHECK(r.q >= s.delta_fp - 1e-15);
            CHECK(r.q <= 1 - s.delta_fn + 1e-15);
        }
        REQUIRE_FALSE(r.degenerate);
        CHECK(std::abs((1 - p) * r.a_good + p * r.a_bad) < 1e-12);
        CHECK(std::abs(r.gap - (r.a_good - r.a_bad)) < 1e-9 * std::max(1.0, std::abs(r.gap)));
        if (p > 0 && p < 1 && J != 0) CHECK((r.gap > 0) == (J > 0));
    }
}

TEST_CASE("degenerate variance carries a marker") {
    auto r = reward_stats(NoiseSpec(0, 0.3), 0.0);
    CHECK(r.degenerate);
    CHECK(std::isnan(r.gap));
    CHECK(signal_gain(NoiseSpec(0, 0.3), 0.0) == 0.0);
    // guarded drift limit with dfn = 0: J [p(1-p)]^2 / sigma = sqrt(J) p^{3/2} (1-p)^2 / sqrt(1 - J p)
    const NoiseSpec s(0.0, 0.1);
    const double J = s.J();
    for (double p : {1e-12, 1e-8, 1e-4, 0.3}) {
        const double want = std::sqrt(J) * std::pow(p, 1.5) * (1 - p) * (1 - p) / std::sqrt(1 - J * p);
        CHECK(signal_gain(s, p) * p * (1 - p) == doctest::Approx(want).epsilon(1e-13));
    }
    CHECK_THROWS_AS(reward_stats(s, 1.5), std::invalid_argument);
}

TEST_CASE("variance argmax against a grid search") {
    auto grid_argmax = [](const NoiseSpec &s) {
        double best = 0, bv = -1;
        for (int i = 0; i <= 10000; ++i) {
            const double p = i * 1e-4;
            const double q = 1 - s.delta_fn - s.J() * p;
            if (q * (1 - q) > bv + 1e-15) {
                bv = q * (1 - q);
                best = p;
            }
        }
        return best;
    };
    CHECK(variance_argmax(NoiseSpec(0.2, 0.2)) == 0.5);
    CHECK(variance_argmax(NoiseSpec(0.1, 0.2)) == doctest::Approx(4.0 / 7));
    CHECK(std::abs(variance_argmax(NoiseSpec(0.1, 0.2)) - grid_argmax(NoiseSpec(0.1, 0.2))) <= 1e-4);
    CHECK(variance_argmax(NoiseSpec(0.6, 0.1)) == 0.0);
    CHECK(grid_argmax(NoiseSpec(0.6, 0.1)) == 0.0);
    CHECK_THROWS_AS(variance_argmax(NoiseSpec(0.5, 0.5)), std::domain_error);
}

TEST_CASE("learnability speed and argmax") {
    CHECK(learnability_speed(NoiseSpec(0, 0), 0.5) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(learnability_speed(NoiseSpec(0.1, 0.1), 0.5) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(learnability_speed(NoiseSpec(0.1, 0.1), 0.0) == 0.0);
    CHECK(learnability_speed(NoiseSpec(0.1, 0.1), 1.0) == 0.0);
    CHECK_THROWS_AS(learnability_speed(NoiseSpec(0.5, 0.5), 0.3), std::domain_error);
    CHECK_THROWS_AS(learnability_argmax(NoiseSpec(0.6, 0.5)), std::domain_error);
    CHECK(learnability_argmax(NoiseSpec(0.2, 0.2)) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(learnability_argmax(NoiseSpec(0, 0)) == doctest::Approx(0.5).epsilon(1e-14));

    const NoiseSpec s(0.1, 0.3);
    const double pd = learnability_argmax(s);
    CHECK(std::abs(pd - 0.5) > 1e-3);
    // long double golden-section oracle
    auto L = [&](long double p) {
        const long double J = s.J(), q = (1 - s.delta_fn) - J * p;
        return J * p * p * (1 - p) * (1 - p) / std::sqrt(q * (1 - q));
    };
    long double lo = 0, hi = 1;
    const long double gr = (std::sqrt(5.0L) - 1) / 2;
    for (int i = 0; i < 200; ++i) {
        const long double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
        if (L(c) > L(d))
            hi = d;
        else
            lo = c;
    }
    CHECK(std::abs(double((lo + hi) / 2) - pd) < 1e-10);
    for (int i = 0; i <= 10000; ++i) CHECK(learnability_speed(s, i * 1e-4) <= learnability_speed(s, pd) + 1e-15);
}

TEST_CASE("noisy check wrapper") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        CHECK(noisy_check(true, NoiseSpec(0, 0), rng));
        CHECK_FALSE(noisy_check(false, NoiseSpec(0, 0), rng));
    }
    const NoiseSpec s(0.5, 0.6);
    const int n = 1'000'000;
    int t1 = 0, f1 = 0;
    for (int i = 0; i < n; ++i) {
        t1 += noisy_check(true, s, rng);
        f1 += noisy_check(false, s, rng);
    }
    CHECK(std::abs(t1 / double(n) - 0.5) < 3 * std::sqrt(0.25 / n));
    CHECK(std::abs(f1 / double(n) - 0.6) < 3 * std::sqrt(0.24 / n));

    const NoiseSpec h(0.5, 0.5);
    int a = 0, b = 0;
    for (int i = 0; i < n; ++i) {
        a += noisy_check(true, h, rng);
        b += noisy_check(false, h, rng);
    }
    CHECK(std::abs((a - b) / double(n)) < 3 * std::sqrt(0.5 / n));
}

TEST_CASE("noise schedule") {
    NoiseSchedule s(NoiseSpec(0.1, 0.1));
    s.add(100, NoiseSpec(0.4, 0.2));
    CHECK(s.at(0).delta_fn == 0.1);
    CHECK(s.at(99).delta_fn == 0.1);
    CHECK(s.at(100).delta_fn == 0.4);
    CHECK(s.at(1u << 30).delta_fp == 0.2);
    CHECK_THROWS(s.add(50, NoiseSpec(0, 0)));
    NoiseSchedule e;
    CHECK_THROWS(e.add(3, NoiseSpec(0, 0)));
}

TEST_CASE("counter rng streams") {
    Rng a(7), b(7), c(7, 1);
    for (int i = 0; i < 100; ++i) CHECK(a() == b());
    Rng d(7);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += d() == c();
    CHECK(same == 0);
    Rng e(9);
    const auto s1 = e.split(3), s2 = e.split(3);
    Rng x = s1, y = s2;
    CHECK(x() == y());
    double m = 0;
    for (int i = 0; i < 100000; ++i) m += e.uniform();
    CHECK(std::abs(m / 100000 - 0.5) < 0.005);
}
