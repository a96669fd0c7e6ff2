#ifndef NOISYRL_SWEEP_HPP
#define NOISYRL_SWEEP_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "noisyrl/bandit.hpp"
#include "noisyrl/meanfield.hpp"

namespace nrl {

enum class Engine { ode, sim, wright_fisher };

const char *engine_name(Engine e);
Engine parse_engine(const std::string &s);

inline constexpr std::array<double, 3> kHitThresholds{0.5, 0.1, 0.01};

struct SweepSpec {
    std::vector<NoiseSpec> grid;
    Engine engine = Engine::ode;
    SimConfig sim;        // K, M, G, eta, steps, ... for the stochastic engines
    OdeConfig ode;        // eta, step, horizon, method for the ODE engine
    std::size_t replicas = 1;
    std::uint64_t base_seed = 0;
    double p0 = 0.5;      // initial bad mass with uniform shapes, unless initial is set
    Vec initial;          // optional flat starting policy of length K + M
    std::string out_dir;

    void validate() const;
    ProbVector start() const;
    std::uint64_t run_seed(std::size_t index) const;
};

struct RunSummary {
    std::size_t index = 0;
    NoiseSpec spec;
    Engine engine = Engine::ode;
    std::size_t replicas = 0;
    std::uint64_t seed = 0;
    double p0_mean = 0.0;
    double p0_se = 0.0;
    double pT_mean = 0.0;
    double pT_se = 0.0;
    std::array<double, 3> hit{};  // first time the replica-mean p reaches each threshold, NaN if never
    double tail_exponent = 0.0;    // NaN when the tail never decays enough
    std::string phase;             // learning, neutral, anti-learning
    bool failed = false;
    std::string error;
};

// Runs grid point `index` and writes its per-run CSV.
RunSummary run_point(const SweepSpec &spec, std::size_t index, std::ostream &run_csv);

// Summary statistics recomputed from a per-run CSV; J picks the mass used for the tail fit.
RunSummary summarize_run_csv(std::istream &run_csv, std::size_t K, std::size_t M, double J);

std::string phase_label(double p0_mean, double pT_mean, double se);

void write_summary_csv(std::ostream &os, const std::vector<RunSummary> &rows);

// Writes summary.csv, runs/<index>.csv, seeds.csv and config.resolved under spec.out_dir.
std::vector<RunSummary> run_sweep(const SweepSpec &spec, const std::string &resolved_config);

// Replays one run into out_path, as recorded by a sweep.
void replay_run(const SweepSpec &spec, std::size_t index, const std::string &out_path);

struct TransitionEstimate {
    double critical_j = 0.0;
    std::size_t lower = 0;  // grid indices (sorted by J) bracketing the sign change
    std::size_t upper = 0;
};

// Sign change of the mean (final - initial) p across a J grid, linearly interpolated.
TransitionEstimate detect_transition(const std::vector<RunSummary> &summaries);

struct PhaseCell {
    double delta_fn = 0.0;
    double delta_fp = 0.0;
    double J = 0.0;
    bool masked = false;
    double p_star = 0.0;     // variance argmax
    double p_dagger = 0.0;   // learnability argmax
    double sigma_max = 0.0;
    double l_max = 0.0;
};

std::vector<PhaseCell> phase_surface(std::size_t n_fn, std::size_t n_fp);
PhaseCell phase_cell(double delta_fn, double delta_fp);
void write_phase_surface_csv(std::ostream &os, const std::vector<PhaseCell> &cells);

}  // namespace nrl

#endif
