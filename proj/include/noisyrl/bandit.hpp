#ifndef NOISYRL_BANDIT_HPP
#define NOISYRL_BANDIT_HPP

#include <cstdint>
#include <vector>

#include "noisyrl/kl.hpp"
#include "noisyrl/noise.hpp"
#include "noisyrl/rng.hpp"
#include "noisyrl/simplex.hpp"

namespace nrl {

enum class SimMode { reinforce, grpo_clipped, wright_fisher };
// group: GRPO z-score within each group. population: (r - q(p)) / sigma(p).
enum class AdvantageNorm { group, population };
enum class Execution { serial, parallel };

struct SimConfig {
    std::size_t K = 3;
    std::size_t M = 2;
    std::size_t G = 8;
    double eta = 1e-3;
    std::uint64_t steps = 1000;
    double clip_low = 0.2;   // epsilon, 0 disables the lower clip
    double clip_high = 0.2;  // epsilon', 0 disables the upper clip
    double beta = 0.0;
    double p_ref = 0.5;
    Vec y_ref;
    Vec z_ref;
    KlMode kl_mode = KlMode::two_class;
    double zscore_epsilon = 1e-8;
    std::uint64_t seed = 0;
    SimMode mode = SimMode::reinforce;
    AdvantageNorm norm = AdvantageNorm::group;
    double nu = 1.0;
    std::uint64_t record_every = 100;

    void validate() const;
    std::vector<char> truth_labels() const;
    KlConfig kl() const;
};

struct GroupSample {
    std::vector<std::size_t> arms;
    std::vector<std::uint8_t> rewards;
};

GroupSample sample_group(const ProbVector &policy, const std::vector<char> &truth, const NoiseSpec &spec,
                         std::size_t G, Rng &rng);

Vec group_normalize(const std::vector<std::uint8_t> &rewards, double epsilon);
Vec population_normalize(const std::vector<std::uint8_t> &rewards, const NoiseSpec &spec, double p_bad);

// Logit increment (eta/G) sum_g A_g (e_{I_g} - p).
Vec reinforce_update(const Vec &p, const std::vector<std::size_t> &arms, const Vec &adv, double eta);
// Importance-weighted increment at p_new with clipped ratios p_new[I]/p_old[I].
Vec clipped_update(const Vec &p_old, const Vec &p_new, const std::vector<std::size_t> &arms, const Vec &adv,
                   double eta, double clip_low, double clip_high, double *clipped_fraction = nullptr);
// Centered KL logit increment -beta (g - <p,g>) for the configured penalty.
Vec kl_logit_update(const Vec &p, const SimConfig &cfg);

struct StepRecord {
    std::uint64_t step = 0;
    Vec pre;
    Vec post;
    std::vector<std::uint32_t> arm_counts;
    std::vector<std::uint8_t> rewards;
    Vec advantages;
    double clipped_fraction = 0.0;
};

struct StepResult {
    ProbVector policy;
    StepRecord record;
};

StepResult reinforce_step(const ProbVector &policy, const std::vector<char> &truth, const NoiseSpec &spec,
                          const SimConfig &cfg, Rng &rng);
StepResult grpo_clipped_step(const ProbVector &policy, const std::vector<char> &truth, const NoiseSpec &spec,
                             const SimConfig &cfg, Rng &rng);
ProbVector wright_fisher_step(const ProbVector &state, const NoiseSpec &spec, const SimConfig &cfg, Rng &rng,
                              double nu);

struct SimSample {
    std::uint64_t step = 0;
    double tau = 0.0;
    double p = 0.0;
    double logit = 0.0;
    double s2 = 0.0;
    double t2 = 0.0;
    double c_geo = 0.0;
    double lyapunov = 0.0;
    double clipped_fraction = 0.0;  // mean over the steps since the previous sample
    double reward_mean = 0.0;       // same window; NaN on the first sample
    Vec y;
    Vec z;
};

struct SimTrajectory {
    std::size_t replica = 0;
    std::uint64_t seed = 0;
    std::vector<SimSample> samples;
    Vec final_policy;
};

SimTrajectory run(const SimConfig &cfg, const NoiseSchedule &noise, const ProbVector &initial);
SimTrajectory run(const SimConfig &cfg, const NoiseSpec &spec, const ProbVector &initial);

// Replica r uses seed derive_seed(cfg.seed, r). Output is identical for both executions.
std::vector<SimTrajectory> run_replicas(const SimConfig &cfg, const NoiseSchedule &noise, const ProbVector &initial,
                                        std::size_t replicas, Execution exec = Execution::parallel);
std::uint64_t replica_seed(std::uint64_t base, std::size_t replica);

struct MomentEstimate {
    Vec mean;
    Vec se;
};

// Per-step logit drift E[dtheta] at a fixed policy over independent replicas.
MomentEstimate estimate_logit_drift(const ProbVector &policy, const NoiseSpec &spec, const SimConfig &cfg,
                                    std::size_t replicas, Execution exec = Execution::parallel);
// Row-major d x d second moments of (1/G) sum_g (e_{I_g} - p).
MomentEstimate estimate_rollout_covariance(const ProbVector &policy, std::size_t G, std::uint64_t seed,
                                           std::size_t replicas, Execution exec = Execution::parallel);
// Mean of (clipped - reinforce) logit increments under shared rollouts.
MomentEstimate estimate_clip_difference(const ProbVector &policy, const NoiseSpec &spec, const SimConfig &cfg,
                                        std::size_t replicas, Execution exec = Execution::parallel);

}  // namespace nrl

#endif
