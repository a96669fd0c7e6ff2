#ifndef NOISYRL_MEANFIELD_HPP
#define NOISYRL_MEANFIELD_HPP

#include <functional>
#include <utility>
#include <vector>

#include "noisyrl/noise.hpp"
#include "noisyrl/ode.hpp"
#include "noisyrl/simplex.hpp"

namespace nrl {

inline constexpr double kClampBand = 1e-12;
inline constexpr double kAbsorbBand = 1e-9;

struct BlockDrift {
    Vec dy;
    Vec dz;
    double dp = 0.0;
};

BlockDrift coupled_drift(const BlockState &s, const NoiseSpec &spec, double eta);
// Scalar two-class law: dp/dt = -eta J [p(1-p)]^2 / sigma(p)
double binary_drift(double p, const NoiseSpec &spec, double eta);

// Flat per-arm advantage vector (a_good on the first K arms, a_bad on the rest).
Vec advantage_vector(const NoiseSpec &spec, double p, std::size_t K, std::size_t M);

struct TrajectorySample {
    double t = 0.0;
    double tau = 0.0;
    double p = 0.0;
    double logit = 0.0;
    double s2 = 0.0;
    double t2 = 0.0;
    double c_geo = 0.0;
    double lyapunov = 0.0;
    Vec y;
    Vec z;
};

struct Trajectory {
    std::size_t K = 0;
    std::size_t M = 0;
    std::vector<TrajectorySample> samples;
    StopReason reason = StopReason::horizon;
    bool absorbed = false;

    Vec times() const;
    Vec bad_mass() const;
    BlockState state(std::size_t i) const;
};

Trajectory integrate(const BlockState &initial, const NoiseSpec &spec, const OdeConfig &cfg);

// Any block flow; spec and cfg.eta feed the tau and Lyapunov diagnostics.
using BlockFlow = std::function<BlockDrift(const BlockState &)>;
Trajectory integrate_flow(const BlockState &initial, const BlockFlow &flow, const NoiseSpec &spec,
                          const OdeConfig &cfg);
// Same output layout, driven by the scalar two-class law (K = M = 1).
Trajectory integrate_binary(double p0, const NoiseSpec &spec, const OdeConfig &cfg);

double closed_form_p(double p0, double eta, double t);

// Cumulative trapezoid of eta |J| / sigma(p) p (1-p) over the trajectory samples.
Vec internal_time(const Trajectory &traj, const NoiseSpec &spec, double eta);

// Shape and logit flow with internal time as the clock.
struct InternalSample {
    double tau = 0.0;
    double L = 0.0;
    Vec y;
    Vec z;
    double p() const;
};

struct InternalTrajectory {
    std::vector<InternalSample> samples;
    // First tau with p <= p_star (linear interpolation in L); NaN if never reached.
    double hitting_tau(double p_star) const;
};

InternalTrajectory integrate_internal(const BlockState &initial, int j_sign, double tau_max, const OdeConfig &cfg);

struct ExpansionValue {
    double L = 0.0;
    bool advisory = false;  // outside the near-uniform regime
};

ExpansionValue heterogeneity_expansion(const BlockState &initial, std::size_t K, std::size_t M, double tau,
                                       const NoiseSpec &spec);

std::pair<double, double> logit_envelopes(double p0, std::size_t K, std::size_t M, double tau);
std::pair<double, double> hitting_time_bracket(double p0, double p_star, std::size_t K, std::size_t M);

ProbVector inner_good_closed_form(const ProbVector &q, double I);
ProbVector inner_bad_closed_form(const ProbVector &q, double I);
// Internal time elapsed at parameter I for each closed form.
double inner_good_tau(const ProbVector &q, double I);
double inner_bad_tau(const ProbVector &q, double I);

double lyapunov_value(const BlockState &s, const NoiseSpec &spec);

enum class Block { good, bad };
enum class EquilibriumKind { uniform, vertex };
enum class Stability { stable, unstable };

Stability classify_equilibrium(Block block, EquilibriumKind kind, int j_sign);

// Least-squares slope of log p (or log(1-p)) against log t over [t_lo, t_hi].
double tail_exponent(const Trajectory &traj, double t_lo, double t_hi, bool good_mass = false);

}  // namespace nrl

#endif
