#ifndef NOISYRL_CSV_HPP
#define NOISYRL_CSV_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "noisyrl/bandit.hpp"
#include "noisyrl/meanfield.hpp"

namespace nrl {

// Shortest round-trip decimal; NaN becomes an empty field.
std::string format_double(double v);
std::string csv_escape(std::string_view s);

class CsvWriter {
  public:
    explicit CsvWriter(std::ostream &os) : os_(os) {}
    CsvWriter &header(const std::vector<std::string> &names);
    CsvWriter &field(double v);
    CsvWriter &field(std::int64_t v);
    CsvWriter &field(std::uint64_t v);
    CsvWriter &field(int v) { return field(std::int64_t(v)); }
    CsvWriter &field(std::string_view s);
    CsvWriter &field(const char *s) { return field(std::string_view(s)); }
    CsvWriter &field(const std::string &s) { return field(std::string_view(s)); }
    void end_row();

  private:
    std::ostream &os_;
    bool first_ = true;
};

using CsvTable = std::vector<std::vector<std::string>>;
CsvTable read_csv(std::istream &is);
double parse_double(const std::string &s);  // empty field reads as NaN

std::vector<std::string> trajectory_columns(std::size_t K, std::size_t M, bool sim);
void write_trajectory_csv(std::ostream &os, const Trajectory &traj);
// Mean-field columns followed by replica, seed, clipped_fraction, empirical_reward_mean.
void write_sim_csv(std::ostream &os, const std::vector<SimTrajectory> &runs, std::size_t K, std::size_t M);
// ODE trajectory in the simulator layout (replica 0, empty sampler columns).
void write_trajectory_as_run(std::ostream &os, const Trajectory &traj, std::uint64_t seed);

}  // namespace nrl

#endif
