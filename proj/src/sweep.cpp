#include "noisyrl/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "noisyrl/csv.hpp"

namespace nrl {

namespace fs = std::filesystem;

const char *engine_name(Engine e) {
    switch (e) {
    case Engine::ode: return "ode";
    case Engine::sim: return "sim";
    case Engine::wright_fisher: return "wright_fisher";
    }
    return "?";
}

Engine parse_engine(const std::string &s) {
    if (s == "ode") return Engine::ode;
    if (s == "sim") return Engine::sim;
    if (s == "wright_fisher") return Engine::wright_fisher;
    throw std::invalid_argument("unknown engine '" + s + "'");
}

void SweepSpec::validate() const {
    if (grid.empty()) throw std::invalid_argument("sweep: empty noise grid");
    if (replicas == 0) throw std::invalid_argument("sweep: replicas must be >= 1");
    if (engine == Engine::ode)
        ode.validate();
    else
        sim.validate();
    start();
}

ProbVector SweepSpec::start() const {
    const std::size_t K = sim.K, M = sim.M;
    if (!initial.empty()) {
        if (initial.size() != K + M) throw std::invalid_argument("sweep: initial policy must have K + M entries");
        return ProbVector(initial);
    }
    return recompose(make_block(p0, K, M));
}

std::uint64_t SweepSpec::run_seed(std::size_t index) const { return derive_seed(base_seed, index); }

std::string phase_label(double p0_mean, double pT_mean, double se) {
    const double d = pT_mean - p0_mean;
    const double band = se > 0.0 ? 3.0 * se : 1e-12;
    if (d < -band) return "learning";
    if (d > band) return "anti-learning";
    return "neutral";
}

namespace {

struct Series {
    Vec t;                   // sample times, shared by all replicas
    std::vector<Vec> p;      // per replica
};

void summarize_series(const Series &s, double J, RunSummary &out) {
    const std::size_t n = s.p.size();
    if (n == 0 || s.t.empty()) throw std::runtime_error("run produced no samples");
    auto mean_se = [&](auto pick, double &mean, double &se) {
        mean = 0.0;
        for (const auto &r : s.p) mean += pick(r);
        mean /= double(n);
        double v = 0.0;
        for (const auto &r : s.p) v += (pick(r) - mean) * (pick(r) - mean);
        se = n > 1 ? std::sqrt(v / double(n - 1) / double(n)) : 0.0;
    };
    mean_se([](const Vec &r) { return r.front(); }, out.p0_mean, out.p0_se);
    mean_se([](const Vec &r) { return r.back(); }, out.pT_mean, out.pT_se);
    out.replicas = n;
    out.phase = phase_label(out.p0_mean, out.pT_mean, out.pT_se);

    Vec avg(s.t.size(), 0.0);
    for (const auto &r : s.p)
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += r.at(i);
    for (double &v : avg) v /= double(n);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t h = 0; h < kHitThresholds.size(); ++h) {
        out.hit[h] = nan;
        for (std::size_t i = 0; i < avg.size(); ++i)
            if (avg[i] <= kHitThresholds[h]) {
                out.hit[h] = s.t[i];
                break;
            }
    }

    Trajectory tr;
    for (std::size_t i = 0; i < avg.size(); ++i) {
        TrajectorySample ts;
        ts.t = s.t[i];
        ts.p = avg[i];
        tr.samples.push_back(ts);
    }
    const double T = s.t.back();
    try {
        out.tail_exponent = tail_exponent(tr, T / 10.0, T, J < 0.0);
    } catch (const std::exception &) {
        out.tail_exponent = nan;
    }
}

}  // namespace

RunSummary run_point(const SweepSpec &spec, std::size_t index, std::ostream &run_csv) {
    RunSummary out;
    out.index = index;
    out.spec = spec.grid.at(index);
    out.engine = spec.engine;
    out.seed = spec.run_seed(index);
    Series series;
    if (spec.engine == Engine::ode) {
        const ProbVector start = spec.start();
        const Trajectory tr = integrate(decompose(start, spec.sim.K, spec.sim.M), out.spec, spec.ode);
        write_trajectory_as_run(run_csv, tr, out.seed);
        series.t = tr.times();
        series.p.push_back(tr.bad_mass());
    } else {
        SimConfig c = spec.sim;
        c.seed = out.seed;
        c.mode = spec.engine == Engine::wright_fisher ? SimMode::wright_fisher : spec.sim.mode;
        const auto runs = run_replicas(c, NoiseSchedule(out.spec), spec.start(), spec.replicas);
        write_sim_csv(run_csv, runs, c.K, c.M);
        for (const auto &s : runs.front().samples) series.t.push_back(double(s.step));
        for (const auto &r : runs) {
            Vec p;
            for (const auto &s : r.samples) p.push_back(s.p);
            series.p.push_back(std::move(p));
        }
    }
    summarize_series(series, out.spec.J(), out);
    return out;
}

RunSummary summarize_run_csv(std::istream &run_csv, std::size_t K, std::size_t M, double J) {
    const CsvTable table = read_csv(run_csv);
    if (table.size() < 2) throw std::runtime_error("run CSV has no rows");
    const auto cols = trajectory_columns(K, M, true);
    if (table[0] != cols) throw std::runtime_error("run CSV header mismatch");
    const std::size_t it = 0, ip = 2, ir = K + M + 8;
    std::map<std::size_t, Vec> by_replica;
    std::map<std::size_t, Vec> times;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto &row = table[i];
        const auto r = static_cast<std::size_t>(std::stoull(row.at(ir)));
        by_replica[r].push_back(parse_double(row.at(ip)));
        times[r].push_back(parse_double(row.at(it)));
    }
    Series s;
    s.t = times.begin()->second;
    for (auto &[r, p] : by_replica) s.p.push_back(std::move(p));
    RunSummary out;
    summarize_series(s, J, out);
    return out;
}

void write_summary_csv(std::ostream &os, const std::vector<RunSummary> &rows) {
    CsvWriter w(os);
    w.header({"index", "delta_fn", "delta_fp", "tpr", "fpr", "J", "engine", "replicas", "seed", "p0_mean", "p0_se",
              "pT_mean", "pT_se", "hit_0.5", "hit_0.1", "hit_0.01", "tail_exponent", "phase", "status", "error"});
    for (const auto &r : rows) {
        w.field(r.index).field(r.spec.delta_fn).field(r.spec.delta_fp).field(r.spec.tpr()).field(r.spec.fpr());
        w.field(r.spec.J()).field(engine_name(r.engine)).field(r.replicas).field(r.seed);
        w.field(r.p0_mean).field(r.p0_se).field(r.pT_mean).field(r.pT_se);
        for (double h : r.hit) w.field(h);
        w.field(r.tail_exponent).field(r.phase).field(r.failed ? "failed" : "ok").field(r.error);
        w.end_row();
    }
}

std::vector<RunSummary> run_sweep(const SweepSpec &spec, const std::string &resolved_config) {
    spec.validate();
    if (spec.out_dir.empty()) throw std::invalid_argument("sweep: output directory required");
    const fs::path root(spec.out_dir);
    std::error_code ec;
    fs::create_directories(root / "runs", ec);
    if (ec) throw std::runtime_error("sweep: cannot create " + (root / "runs").string() + ": " + ec.message());
    {
        std::ofstream cfg(root / "config.resolved", std::ios::binary);
        if (!cfg) throw std::runtime_error("sweep: cannot write " + (root / "config.resolved").string());
        cfg << resolved_config;
    }

    const std::size_t n = spec.grid.size();
    std::vector<RunSummary> rows(n);
    std::vector<std::string> csv(n);
    auto one = [&](std::size_t i) {
        std::ostringstream os;
        try {
            rows[i] = run_point(spec, i, os);
            csv[i] = os.str();
        } catch (const std::exception &e) {
            rows[i] = RunSummary{};
            rows[i].index = i;
            rows[i].spec = spec.grid[i];
            rows[i].engine = spec.engine;
            rows[i].seed = spec.run_seed(i);
            rows[i].failed = true;
            rows[i].error = e.what();
            const double nan = std::numeric_limits<double>::quiet_NaN();
            rows[i].p0_mean = rows[i].p0_se = rows[i].pT_mean = rows[i].pT_se = rows[i].tail_exponent = nan;
            rows[i].hit.fill(nan);
        }
    };
    if (spec.engine == Engine::ode) {
#pragma omp parallel for schedule(dynamic, 1)
        for (long long i = 0; i < static_cast<long long>(n); ++i) one(std::size_t(i));
    } else {
        for (std::size_t i = 0; i < n; ++i) one(i);
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].failed) continue;
        std::ofstream f(root / "runs" / (std::to_string(i) + ".csv"), std::ios::binary);
        if (!f) throw std::runtime_error("sweep: cannot write run " + std::to_string(i));
        f << csv[i];
    }
    {
        std::ofstream f(root / "seeds.csv", std::ios::binary);
        CsvWriter w(f);
        w.header({"index", "replica", "seed"});
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t s = spec.run_seed(i);
            const std::size_t reps = spec.engine == Engine::ode ? 1 : spec.replicas;
            for (std::size_t r = 0; r < reps; ++r)
                w.field(i).field(r).field(spec.engine == Engine::ode ? s : replica_seed(s, r)).end_row();
        }
    }
    {
        std::ofstream f(root / "summary.csv", std::ios::binary);
        if (!f) throw std::runtime_error("sweep: cannot write summary.csv");
        write_summary_csv(f, rows);
    }
    return rows;
}

void replay_run(const SweepSpec &spec, std::size_t index, const std::string &out_path) {
    spec.validate();
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error("replay: cannot write " + out_path);
    run_point(spec, index, f);
}

TransitionEstimate detect_transition(const std::vector<RunSummary> &summaries) {
    std::vector<std::pair<double, double>> pts;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        if (summaries[i].failed) continue;
        order.push_back(i);
    }
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return summaries[a].spec.J() < summaries[b].spec.J(); });
    for (std::size_t i : order) pts.emplace_back(summaries[i].spec.J(), summaries[i].pT_mean - summaries[i].p0_mean);
    if (pts.size() < 2) throw std::runtime_error("detect_transition: need at least two grid points");
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const auto [ja, da] = pts[i];
        const auto [jb, db] = pts[i + 1];
        if (da > 0.0 && db < 0.0) return {ja + (jb - ja) * da / (da - db), order[i], order[i + 1]};
        if (da > 0.0 && db == 0.0) {
            for (std::size_t k = i + 2; k < pts.size(); ++k) {
                if (pts[k].second < 0.0) return {jb, order[i + 1], order[i + 1]};
                if (pts[k].second > 0.0) break;
            }
        }
    }
    throw std::runtime_error("detect_transition: no sign change across the J grid");
}

PhaseCell phase_cell(double delta_fn, double delta_fp) {
    PhaseCell c;
    c.delta_fn = delta_fn;
    c.delta_fp = delta_fp;
    const NoiseSpec s(delta_fn, delta_fp);
    c.J = s.J();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (c.J <= 1e-12) {
        c.masked = true;
        c.p_star = c.p_dagger = c.sigma_max = c.l_max = nan;
        return c;
    }
    c.p_star = variance_argmax(s);
    c.sigma_max = reward_sigma(s, c.p_star);
    c.p_dagger = learnability_argmax(s);
    c.l_max = learnability_speed(s, c.p_dagger);
    return c;
}

std::vector<PhaseCell> phase_surface(std::size_t n_fn, std::size_t n_fp) {
    if (n_fn < 2 || n_fp < 2) throw std::invalid_argument("phase_surface: need at least 2 points per axis");
    std::vector<PhaseCell> cells;
    for (std::size_t i = 0; i < n_fn; ++i)
        for (std::size_t j = 0; j < n_fp; ++j)
            cells.push_back(phase_cell(double(i) / double(n_fn - 1), double(j) / double(n_fp - 1)));
    return cells;
}

void write_phase_surface_csv(std::ostream &os, const std::vector<PhaseCell> &cells) {
    CsvWriter w(os);
    w.header({"delta_fn", "delta_fp", "J", "masked", "p_star", "p_dagger", "sigma_max", "learnability_max"});
    for (const auto &c : cells) {
        w.field(c.delta_fn).field(c.delta_fp).field(c.J).field(c.masked ? 1 : 0);
        w.field(c.p_star).field(c.p_dagger).field(c.sigma_max).field(c.l_max).end_row();
    }
}

}  // namespace nrl
