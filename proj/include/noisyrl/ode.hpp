#ifndef NOISYRL_ODE_HPP
#define NOISYRL_ODE_HPP

#include <functional>
#include <string>
#include <vector>

#include "noisyrl/simplex.hpp"

namespace nrl {

enum class Method { rk4_fixed, rk45_adaptive };

struct OdeConfig {
    double eta = 1.0;
    double step = 1e-2;  // fixed step, or initial step in adaptive mode
    double horizon = 10.0;
    Method method = Method::rk4_fixed;
    double abs_tol = 1e-9;
    double rel_tol = 1e-9;
    double max_step = 0.0;       // adaptive only; 0 means unbounded
    double min_step = 1e-14;     // adaptive underflow threshold, relative to max(1,|t|)
    std::size_t record_every = 1;  // keep every n-th accepted step (the last one is always kept)

    void validate() const;
};

enum class StopReason { horizon, event, step_underflow };

using OdeRhs = std::function<void(double t, const Vec &x, Vec &dxdt)>;
// Called after each accepted step; return true to stop.
using OdeObserver = std::function<bool(double t, const Vec &x)>;

struct OdeResult {
    StopReason reason = StopReason::horizon;
    double t = 0.0;
    Vec x;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::string message;
};

// Integrates from t0 to t0 + cfg.horizon. The observer sees the initial state
// and every accepted step. post_step (optional) may project the state, e.g.
// back onto the simplex.
OdeResult solve_ode(const OdeRhs &f, Vec x0, double t0, const OdeConfig &cfg, const OdeObserver &observe,
                    const std::function<void(Vec &)> &post_step = {});

}  // namespace nrl

#endif
