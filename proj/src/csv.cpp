#include "noisyrl/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace nrl {

std::string format_double(double v) {
    if (std::isnan(v)) return {};
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_escape(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

CsvWriter &CsvWriter::header(const std::vector<std::string> &names) {
    for (const auto &n : names) field(n);
    end_row();
    return *this;
}

CsvWriter &CsvWriter::field(double v) { return field(std::string_view(format_double(v))); }

CsvWriter &CsvWriter::field(std::int64_t v) { return field(std::string_view(std::to_string(v))); }

CsvWriter &CsvWriter::field(std::uint64_t v) { return field(std::string_view(std::to_string(v))); }

CsvWriter &CsvWriter::field(std::string_view s) {
    if (!first_) os_ << ',';
    os_ << csv_escape(s);
    first_ = false;
    return *this;
}

void CsvWriter::end_row() {
    os_ << "\r\n";
    first_ = true;
}

CsvTable read_csv(std::istream &is) {
    CsvTable rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    char c;
    while (is.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (is.peek() == '"') {
                    is.get(c);
                    cell += '"';
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && is.peek() == '\n') is.get(c);
            row.push_back(std::move(cell));
            cell.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            cell += c;
        }
    }
    if (any) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

double parse_double(const std::string &s) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

std::vector<std::string> trajectory_columns(std::size_t K, std::size_t M, bool sim) {
    std::vector<std::string> c{"t", "tau", "p", "logit", "s2", "t2", "c_geo", "lyapunov"};
    for (std::size_t i = 1; i <= K; ++i) c.push_back("y_" + std::to_string(i));
    for (std::size_t i = 1; i <= M; ++i) c.push_back("z_" + std::to_string(i));
    if (sim) {
        for (const char *n : {"replica", "seed", "clipped_fraction", "empirical_reward_mean"}) c.emplace_back(n);
    }
    return c;
}

namespace {

template <class S>
void core_fields(CsvWriter &w, double t, const S &s) {
    w.field(t).field(s.tau).field(s.p).field(s.logit).field(s.s2).field(s.t2).field(s.c_geo).field(s.lyapunov);
    for (double v : s.y) w.field(v);
    for (double v : s.z) w.field(v);
}

}  // namespace

void write_trajectory_csv(std::ostream &os, const Trajectory &traj) {
    CsvWriter w(os);
    w.header(trajectory_columns(traj.K, traj.M, false));
    for (const auto &s : traj.samples) {
        core_fields(w, s.t, s);
        w.end_row();
    }
}

void write_sim_csv(std::ostream &os, const std::vector<SimTrajectory> &runs, std::size_t K, std::size_t M) {
    CsvWriter w(os);
    w.header(trajectory_columns(K, M, true));
    for (const auto &r : runs)
        for (const auto &s : r.samples) {
            core_fields(w, double(s.step), s);
            w.field(r.replica).field(r.seed).field(s.clipped_fraction).field(s.reward_mean);
            w.end_row();
        }
}

void write_trajectory_as_run(std::ostream &os, const Trajectory &traj, std::uint64_t seed) {
    CsvWriter w(os);
    w.header(trajectory_columns(traj.K, traj.M, true));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto &s : traj.samples) {
        core_fields(w, s.t, s);
        w.field(std::uint64_t(0)).field(seed).field(nan).field(nan);
        w.end_row();
    }
}

}  // namespace nrl
