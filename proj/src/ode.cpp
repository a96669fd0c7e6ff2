#include "noisyrl/ode.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nrl {

void OdeConfig::validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("OdeConfig: eta must be > 0");
    if (!(step > 0.0)) throw std::invalid_argument("OdeConfig: step must be > 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("OdeConfig: horizon must be > 0");
    if (step > horizon) throw std::invalid_argument("OdeConfig: step exceeds horizon");
    if (method == Method::rk45_adaptive && !(abs_tol > 0.0 && abs_tol < 1e-3 && rel_tol > 0.0 && rel_tol < 1e-3))
        throw std::invalid_argument("OdeConfig: tolerances must lie in (0, 1e-3)");
    if (record_every == 0) throw std::invalid_argument("OdeConfig: record_every must be >= 1");
}

namespace {

void axpy(Vec &out, const Vec &x, double h, std::initializer_list<std::pair<double, const Vec *>> terms) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        double s = 0.0;
        for (const auto &[c, k] : terms) s += c * (*k)[i];
        out[i] = x[i] + h * s;
    }
}

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

OdeResult solve_ode(const OdeRhs &f, Vec x, double t0, const OdeConfig &cfg, const OdeObserver &observe,
                    const std::function<void(Vec &)> &post_step) {
    cfg.validate();
    const std::size_t n = x.size();
    const double t_end = t0 + cfg.horizon;
    OdeResult res;
    double t = t0;
    if (observe && observe(t, x)) {
        res.reason = StopReason::event;
        res.t = t;
        res.x = std::move(x);
        return res;
    }

    Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), xn(n);
    std::size_t since_record = 0;
    auto accept = [&](double tn) {
        t = tn;
        if (post_step) post_step(xn);
        std::swap(x, xn);
        ++res.accepted;
        ++since_record;
        const bool last = t >= t_end;
        if (observe && (since_record >= cfg.record_every || last)) {
            since_record = 0;
            if (observe(t, x)) return true;
        }
        return false;
    };

    if (cfg.method == Method::rk4_fixed) {
        const auto nsteps = static_cast<std::size_t>(std::ceil(cfg.horizon / cfg.step - 1e-9));
        for (std::size_t i = 0; i < nsteps; ++i) {
            const double tn = i + 1 == nsteps ? t_end : t0 + double(i + 1) * cfg.step;
            const double h = tn - t;
            f(t, x, k1);
            axpy(tmp, x, h, {{0.5, &k1}});
            f(t + 0.5 * h, tmp, k2);
            axpy(tmp, x, h, {{0.5, &k2}});
            f(t + 0.5 * h, tmp, k3);
            axpy(tmp, x, h, {{1.0, &k3}});
            f(t + h, tmp, k4);
            axpy(xn, x, h, {{1.0 / 6, &k1}, {1.0 / 3, &k2}, {1.0 / 3, &k3}, {1.0 / 6, &k4}});
            if (accept(tn)) {
                res.reason = StopReason::event;
                break;
            }
        }
    } else {
        double h = std::min(cfg.step, cfg.horizon);
        f(t, x, k1);
        while (t < t_end) {
            if (cfg.max_step > 0.0) h = std::min(h, cfg.max_step);
            bool last = false;
            if (t + h >= t_end) {
                h = t_end - t;
                last = true;
            }
            if (h < cfg.min_step * std::max(1.0, std::abs(t))) {
                std::ostringstream os;
                os << "step size underflow at t=" << t << " (h=" << h << ")";
                res.reason = StopReason::step_underflow;
                res.message = os.str();
                break;
            }
            axpy(tmp, x, h, {{a21, &k1}});
            f(t + c2 * h, tmp, k2);
            axpy(tmp, x, h, {{a31, &k1}, {a32, &k2}});
            f(t + c3 * h, tmp, k3);
            axpy(tmp, x, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
            f(t + c4 * h, tmp, k4);
            axpy(tmp, x, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
            f(t + c5 * h, tmp, k5);
            axpy(tmp, x, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
            f(t + h, tmp, k6);
            axpy(xn, x, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
            f(t + h, xn, k7);

            double err = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
                const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(x[i]), std::abs(xn[i]));
                err = std::max(err, std::abs(e) / sc);
            }
            if (!std::isfinite(err)) err = 1e10;
            if (err <= 1.0) {
                const double tn = last ? t_end : t + h;
                const bool stop = accept(tn);
                if (post_step)
                    f(t, x, k1);
                else
                    std::swap(k1, k7);
                if (stop) {
                    res.reason = StopReason::event;
                    break;
                }
                const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                h *= fac;
            } else {
                ++res.rejected;
                h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 1.0);
            }
        }
    }
    res.t = t;
    res.x = std::move(x);
    return res;
}

}  // namespace nrl
