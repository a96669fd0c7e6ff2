#ifndef NOISYRL_NOISE_HPP
#define NOISYRL_NOISE_HPP

#include <cstdint>
#include <vector>

#include "noisyrl/rng.hpp"

namespace nrl {

// Verifier corruption rates.
struct NoiseSpec {
    double delta_fn = 0.0;
    double delta_fp = 0.0;

    NoiseSpec() = default;
    NoiseSpec(double fn, double fp);
    static NoiseSpec from_rates(double tpr, double fpr);

    double tpr() const { return 1.0 - delta_fn; }
    double fpr() const { return delta_fp; }
    double J() const { return 1.0 - (delta_fn + delta_fp); }
};

double youden(const NoiseSpec &spec);

struct RewardStats {
    double q = 0.0;
    double sigma = 0.0;
    double a_good = 0.0;
    double a_bad = 0.0;
    double gap = 0.0;
    bool degenerate = false;  // sigma == 0; a_good, a_bad, gap are NaN
};

// Mean reward q(p) and 1 - q(p), each written without cancellation.
double mean_reward(const NoiseSpec &spec, double p);
double mean_reward_complement(const NoiseSpec &spec, double p);
double reward_sigma(const NoiseSpec &spec, double p);

RewardStats reward_stats(const NoiseSpec &spec, double p);

// J p (1-p) / sigma(p), taking its limit 0 where sigma vanishes.
double signal_gain(const NoiseSpec &spec, double p);

double variance_argmax(const NoiseSpec &spec);

double learnability_speed(const NoiseSpec &spec, double p);
double learnability_argmax(const NoiseSpec &spec);
// Real roots of the cleared first-order condition inside (0,1).
std::vector<double> learnability_critical_points(const NoiseSpec &spec);

bool noisy_check(bool truth, const NoiseSpec &spec, Rng &rng);

// Piecewise-constant noise in step index: entry i applies from steps[i] on.
class NoiseSchedule {
  public:
    NoiseSchedule() = default;
    explicit NoiseSchedule(const NoiseSpec &constant);
    void add(std::uint64_t from_step, const NoiseSpec &spec);
    const NoiseSpec &at(std::uint64_t step) const;
    bool empty() const { return specs_.empty(); }

  private:
    std::vector<std::uint64_t> steps_;
    std::vector<NoiseSpec> specs_;
};

}  // namespace nrl

#endif
