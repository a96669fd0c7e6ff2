#include <CLI11.hpp>
#include <omp.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "noisyrl/bandit.hpp"
#include "noisyrl/csv.hpp"
#include "noisyrl/kl.hpp"
#include "noisyrl/meanfield.hpp"
#include "noisyrl/sweep.hpp"

using namespace nrl;

namespace {

struct Global {
    std::uint64_t seed = 0;
    std::string out = "-";
    std::string config;
    int threads = 0;
};

// Exactly one of (tpr, fpr) or (delta_fn, delta_fp).
struct NoiseFlags {
    double tpr = 1, fpr = 0, dfn = 0, dfp = 0;
    CLI::Option *o_tpr = nullptr, *o_fpr = nullptr, *o_dfn = nullptr, *o_dfp = nullptr;

    void add(CLI::App *app) {
        o_tpr = app->add_option("--tpr", tpr, "true positive rate")->check(CLI::Range(0.0, 1.0));
        o_fpr = app->add_option("--fpr", fpr, "false positive rate")->check(CLI::Range(0.0, 1.0));
        o_dfn = app->add_option("--delta-fn", dfn, "false negative rate")->check(CLI::Range(0.0, 1.0));
        o_dfp = app->add_option("--delta-fp", dfp, "false positive rate")->check(CLI::Range(0.0, 1.0));
    }
    NoiseSpec spec() const {
        const bool rates = o_tpr->count() || o_fpr->count();
        const bool deltas = o_dfn->count() || o_dfp->count();
        if (rates == deltas)
            throw CLI::ValidationError("noise", "give exactly one of --tpr/--fpr or --delta-fn/--delta-fp");
        if (rates && !(o_tpr->count() && o_fpr->count()))
            throw CLI::ValidationError("noise", "--tpr and --fpr must be given together");
        if (deltas && !(o_dfn->count() && o_dfp->count()))
            throw CLI::ValidationError("noise", "--delta-fn and --delta-fp must be given together");
        return rates ? NoiseSpec::from_rates(tpr, fpr) : NoiseSpec(dfn, dfp);
    }
};

struct OdeFlags {
    OdeConfig cfg;
    std::string method = "rk4";
    std::size_t record_every = 1;

    void add(CLI::App *app) {
        app->add_option("--eta", cfg.eta, "learning rate")->check(CLI::PositiveNumber);
        app->add_option("--step", cfg.step, "integrator step (initial step for rk45)")->check(CLI::PositiveNumber);
        app->add_option("--horizon", cfg.horizon, "final time")->check(CLI::PositiveNumber);
        app->add_option("--method", method, "rk4 or rk45")->check(CLI::IsMember({"rk4", "rk45"}));
        app->add_option("--abs-tol", cfg.abs_tol, "rk45 absolute tolerance");
        app->add_option("--rel-tol", cfg.rel_tol, "rk45 relative tolerance");
        app->add_option("--record-every", record_every, "keep every n-th accepted step")->check(CLI::PositiveNumber);
    }
    OdeConfig get() const {
        OdeConfig c = cfg;
        c.method = method == "rk45" ? Method::rk45_adaptive : Method::rk4_fixed;
        c.record_every = record_every;
        return c;
    }
};

struct SimFlags {
    SimConfig cfg;
    std::string mode = "reinforce";
    std::string norm = "group";
    std::string kl_mode = "two_class";

    void add(CLI::App *app) {
        app->add_option("--G", cfg.G, "group size")->check(CLI::Range(2, 1 << 20));
        app->add_option("--eta", cfg.eta, "learning rate")->check(CLI::PositiveNumber);
        app->add_option("--steps", cfg.steps, "number of steps");
        app->add_option("--mode", mode, "reinforce, grpo_clipped or wright_fisher")
            ->check(CLI::IsMember({"reinforce", "grpo_clipped", "wright_fisher"}));
        app->add_option("--clip-low", cfg.clip_low, "lower clip epsilon, 0 disables");
        app->add_option("--clip-high", cfg.clip_high, "upper clip epsilon, 0 disables");
        app->add_option("--beta", cfg.beta, "KL strength");
        app->add_option("--p-ref", cfg.p_ref, "reference bad mass");
        app->add_option("--kl-mode", kl_mode, "two_class or full_reverse")
            ->check(CLI::IsMember({"two_class", "full_reverse"}));
        app->add_option("--norm", norm, "group or population")->check(CLI::IsMember({"group", "population"}));
        app->add_option("--zscore-epsilon", cfg.zscore_epsilon, "z-score guard");
        app->add_option("--nu", cfg.nu, "Wright-Fisher diffusion speed");
        app->add_option("--record-every", cfg.record_every, "sample cadence in steps")->check(CLI::PositiveNumber);
    }
    SimConfig get(std::size_t K, std::size_t M, std::uint64_t seed) const {
        SimConfig c = cfg;
        c.K = K;
        c.M = M;
        c.seed = seed;
        c.mode = mode == "grpo_clipped"    ? SimMode::grpo_clipped
                 : mode == "wright_fisher" ? SimMode::wright_fisher
                                           : SimMode::reinforce;
        c.norm = norm == "population" ? AdvantageNorm::population : AdvantageNorm::group;
        c.kl_mode = kl_mode == "full_reverse" ? KlMode::full_reverse : KlMode::two_class;
        return c;
    }
};

class Output {
  public:
    explicit Output(const std::string &path) {
        if (path.empty() || path == "-") return;
        file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
        if (!*file_) throw std::runtime_error("cannot write " + path);
    }
    std::ostream &stream() { return file_ ? *file_ : std::cout; }

  private:
    std::unique_ptr<std::ofstream> file_;
};

std::vector<std::string> option_names(const std::string &key) {
    std::string dash = key;
    for (char &c : dash)
        if (c == '_') c = '-';
    return {"--" + key, "--" + dash};
}

// Applies key = value pairs to options the command line left unset.
void apply_config(CLI::App &app, CLI::App *sub, const std::string &path) {
    std::ifstream in(path);
    if (!in) throw CLI::FileError::Missing(path);
    const auto items = CLI::ConfigTOML().from_config(in);
    for (const auto &item : items) {
        if (item.name == "++" || item.name == "--") continue;
        CLI::App *scope = sub;
        if (!item.parents.empty()) {
            if (!sub || item.parents.front() != sub->get_name()) continue;
        }
        CLI::Option *opt = nullptr;
        for (CLI::App *a : {scope, &app}) {
            if (!a) continue;
            for (const auto &n : option_names(item.name))
                if ((opt = a->get_option_no_throw(n))) break;
            if (opt) break;
        }
        if (!opt) throw CLI::ConfigError("unknown config key '" + item.name + "'");
        if (opt->count() > 0 || opt->get_name() == "--config") continue;
        opt->add_result(item.inputs);
        opt->run_callback();
    }
}

std::string resolved_config(const CLI::App &app, const CLI::App *sub) {
    std::ostringstream os;
    for (const CLI::App *a : {&app, sub}) {
        for (const CLI::Option *o : a->get_options()) {
            if (o->get_lnames().empty() || o->get_name() == "--help" || o->get_name() == "--config" ||
                o->get_name() == "--only")
                continue;
            std::string v;
            if (o->count() > 0) {
                const auto res = o->results();
                if (res.size() == 1) {
                    v = res.front();
                } else {
                    for (std::size_t i = 0; i < res.size(); ++i) v += (i ? ", " : "") + res[i];
                    v = "[" + v + "]";
                }
            } else {
                v = o->get_default_str();
                if (v.empty() || v == "{}") continue;
            }
            const bool quote = v.front() != '[' && v.find_first_not_of("0123456789.eE+-") != std::string::npos;
            os << o->get_lnames().front() << " = " << (quote ? "\"" + v + "\"" : v) << "\n";
        }
    }
    return os.str();
}

BlockState initial_block(std::size_t K, std::size_t M, double p0, const std::vector<double> &y,
                         const std::vector<double> &z) {
    BlockState b = make_block(p0, K, M);
    if (!y.empty()) {
        if (y.size() != K) throw CLI::ValidationError("--y0", "needs K entries");
        b.y = ProbVector::normalized(y);
    }
    if (!z.empty()) {
        if (z.size() != M) throw CLI::ValidationError("--z0", "needs M entries");
        b.z = ProbVector::normalized(z);
    }
    return b;
}

std::vector<NoiseSpec> build_grid(const std::vector<double> &dfn, const std::vector<double> &dfp,
                                  const std::vector<double> &tpr, const std::vector<double> &fpr,
                                  const std::vector<double> &js, double fn_share) {
    const int given = !dfn.empty() + !tpr.empty() + !js.empty();
    if (given != 1) throw CLI::ValidationError("grid", "give exactly one of --delta-fn/--delta-fp, --tpr/--fpr, --j");
    std::vector<NoiseSpec> g;
    if (!dfn.empty()) {
        if (dfn.size() != dfp.size()) throw CLI::ValidationError("grid", "--delta-fn and --delta-fp lengths differ");
        for (std::size_t i = 0; i < dfn.size(); ++i) g.emplace_back(dfn[i], dfp[i]);
    } else if (!tpr.empty()) {
        if (tpr.size() != fpr.size()) throw CLI::ValidationError("grid", "--tpr and --fpr lengths differ");
        for (std::size_t i = 0; i < tpr.size(); ++i) g.push_back(NoiseSpec::from_rates(tpr[i], fpr[i]));
    } else {
        for (double J : js) g.emplace_back(fn_share * (1 - J), (1 - fn_share) * (1 - J));
    }
    return g;
}

std::vector<RunSummary> read_summary(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    const auto t = read_csv(in);
    if (t.empty()) throw std::runtime_error(path + ": empty");
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < t[0].size(); ++i) col[t[0][i]] = i;
    for (const char *need : {"index", "delta_fn", "delta_fp", "p0_mean", "pT_mean", "status"})
        if (!col.count(need)) throw std::runtime_error(path + ": missing column " + need);
    std::vector<RunSummary> rows;
    for (std::size_t r = 1; r < t.size(); ++r) {
        RunSummary s;
        s.index = std::stoull(t[r][col["index"]]);
        s.spec = NoiseSpec(parse_double(t[r][col["delta_fn"]]), parse_double(t[r][col["delta_fp"]]));
        s.p0_mean = parse_double(t[r][col["p0_mean"]]);
        s.pT_mean = parse_double(t[r][col["pT_mean"]]);
        s.failed = t[r][col["status"]] != "ok";
        rows.push_back(s);
    }
    return rows;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Mean-field and bandit laboratory for GRPO under noisy verifiable rewards"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    Global g;
    app.add_option("--seed", g.seed, "base seed");
    app.add_option("--out", g.out, "output file, or directory for sweep ('-' is stdout)");
    app.add_option("--config", g.config, "key = value config file; command-line flags win");
    app.add_option("--threads", g.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);

    // ode
    auto *ode = app.add_subcommand("ode", "integrate the coupled mean-field flow");
    NoiseFlags ode_noise;
    ode_noise.add(ode);
    OdeFlags ode_flags;
    ode_flags.add(ode);
    std::size_t ode_K = 3, ode_M = 2;
    double ode_p0 = 0.5, ode_beta = 0.0, ode_pref = 0.5;
    std::vector<double> ode_y, ode_z;
    bool ode_scalar = false;
    ode->add_option("--K", ode_K, "good arms")->check(CLI::PositiveNumber);
    ode->add_option("--M", ode_M, "bad arms")->check(CLI::PositiveNumber);
    ode->add_option("--p0", ode_p0, "initial bad mass")->check(CLI::Range(0.0, 1.0));
    ode->add_option("--y0", ode_y, "initial good shape (K entries)");
    ode->add_option("--z0", ode_z, "initial bad shape (M entries)");
    ode->add_option("--beta", ode_beta, "two-class KL strength");
    ode->add_option("--p-ref", ode_pref, "KL reference bad mass");
    ode->add_flag("--scalar", ode_scalar, "two-class scalar law instead of the block flow");

    // simulate
    auto *sim = app.add_subcommand("simulate", "run the finite-group bandit simulator");
    NoiseFlags sim_noise;
    sim_noise.add(sim);
    SimFlags sim_flags;
    sim_flags.add(sim);
    std::size_t sim_K = 3, sim_M = 2, sim_reps = 1;
    double sim_p0 = 0.5;
    bool sim_serial = false;
    sim->add_option("--K", sim_K, "good arms")->check(CLI::PositiveNumber);
    sim->add_option("--M", sim_M, "bad arms")->check(CLI::PositiveNumber);
    sim->add_option("--p0", sim_p0, "initial bad mass, uniform shapes")->check(CLI::Range(0.0, 1.0));
    sim->add_option("--replicas", sim_reps, "independent replicas")->check(CLI::PositiveNumber);
    sim->add_flag("--serial", sim_serial, "run replicas on the serial path");

    // sweep
    auto *sweep = app.add_subcommand("sweep", "run a noise grid and write summary.csv, runs/ and seeds.csv");
    std::vector<double> sw_dfn, sw_dfp, sw_tpr, sw_fpr, sw_j;
    double sw_share = 0.5;
    std::string sw_engine = "ode";
    std::size_t sw_K = 3, sw_M = 2, sw_reps = 1;
    double sw_p0 = 0.5;
    std::optional<std::size_t> sw_only;
    OdeFlags sw_ode;
    sw_ode.cfg.horizon = 20;
    SimFlags sw_sim;
    sweep->add_option("--delta-fn", sw_dfn, "grid of false negative rates")->delimiter(',');
    sweep->add_option("--delta-fp", sw_dfp, "grid of false positive rates")->delimiter(',');
    sweep->add_option("--tpr", sw_tpr, "grid of true positive rates")->delimiter(',');
    sweep->add_option("--fpr", sw_fpr, "grid of false positive rates")->delimiter(',');
    sweep->add_option("--j", sw_j, "grid of Youden indices")->delimiter(',');
    sweep->add_option("--fn-share", sw_share, "share of 1-J assigned to false negatives for --j")
        ->check(CLI::Range(0.0, 1.0));
    sweep->add_option("--engine", sw_engine, "ode, sim or wright_fisher")
        ->check(CLI::IsMember({"ode", "sim", "wright_fisher"}));
    sweep->add_option("--K", sw_K, "good arms")->check(CLI::PositiveNumber);
    sweep->add_option("--M", sw_M, "bad arms")->check(CLI::PositiveNumber);
    sweep->add_option("--replicas", sw_reps, "replicas per grid point")->check(CLI::PositiveNumber);
    sweep->add_option("--p0", sw_p0, "initial bad mass, uniform shapes")->check(CLI::Range(0.0, 1.0));
    sweep->add_option("--only", sw_only, "replay one grid index into --out");
    sweep->add_option("--ode-eta", sw_ode.cfg.eta, "ODE learning rate")->check(CLI::PositiveNumber);
    sweep->add_option("--step", sw_ode.cfg.step, "ODE step")->check(CLI::PositiveNumber);
    sweep->add_option("--horizon", sw_ode.cfg.horizon, "ODE final time")->check(CLI::PositiveNumber);
    sweep->add_option("--method", sw_ode.method, "rk4 or rk45")->check(CLI::IsMember({"rk4", "rk45"}));
    sweep->add_option("--ode-record-every", sw_ode.record_every, "ODE sample cadence")->check(CLI::PositiveNumber);
    sw_sim.add(sweep);

    // fixed-point
    auto *fpt = app.add_subcommand("fixed-point", "KL-regularized interior fixed points over a beta sweep");
    NoiseFlags fp_noise;
    fp_noise.add(fpt);
    double fp_bmin = 1e-4, fp_bmax = 1e2, fp_pref = 0.5, fp_s2 = 0.5, fp_t2 = 0.5, fp_eta = 1.0;
    std::size_t fp_n = 25;
    fpt->add_option("--beta-min", fp_bmin, "smallest beta")->check(CLI::PositiveNumber);
    fpt->add_option("--beta-max", fp_bmax, "largest beta")->check(CLI::PositiveNumber);
    fpt->add_option("--beta-count", fp_n, "log-spaced points")->check(CLI::PositiveNumber);
    fpt->add_option("--p-ref", fp_pref, "reference bad mass")->check(CLI::Range(0.0, 1.0));
    fpt->add_option("--s2", fp_s2, "good collision mass")->check(CLI::Range(0.0, 1.0));
    fpt->add_option("--t2", fp_t2, "bad collision mass")->check(CLI::Range(0.0, 1.0));
    fpt->add_option("--eta", fp_eta, "learning rate")->check(CLI::PositiveNumber);

    // phase-surface
    auto *ps = app.add_subcommand("phase-surface", "variance and learnability functionals over a noise grid");
    std::size_t ps_fn = 21, ps_fp = 21;
    ps->add_option("--n-fn", ps_fn, "grid points in delta_fn")->check(CLI::Range(2, 100000));
    ps->add_option("--n-fp", ps_fp, "grid points in delta_fp")->check(CLI::Range(2, 100000));

    // learnability
    auto *lr = app.add_subcommand("learnability", "variance peak and learnability maximizer for one spec");
    NoiseFlags lr_noise;
    lr_noise.add(lr);
    std::size_t lr_curve = 0;
    lr->add_option("--curve", lr_curve, "emit the curve on this many points instead of the summary");

    // transition
    auto *tr = app.add_subcommand("transition", "critical J from a sweep summary.csv");
    std::string tr_from;
    tr->add_option("--from", tr_from, "summary.csv of a sweep over J")->required();

    try {
        app.parse(argc, argv);
        CLI::App *sub = app.get_subcommands().front();
        if (!g.config.empty()) apply_config(app, sub, g.config);
        if (g.threads > 0) omp_set_num_threads(g.threads);

        if (sub == ode) {
            const NoiseSpec spec = ode_noise.spec();
            const OdeConfig cfg = ode_flags.get();
            Output out(g.out);
            Trajectory t;
            if (ode_scalar) {
                t = integrate_binary(ode_p0, spec, cfg);
            } else {
                const BlockState b = initial_block(ode_K, ode_M, ode_p0, ode_y, ode_z);
                if (ode_beta > 0) {
                    KlConfig kl;
                    kl.beta = ode_beta;
                    kl.p_ref = ode_pref;
                    t = integrate_regularized(b, spec, kl, cfg);
                } else {
                    t = integrate(b, spec, cfg);
                }
            }
            write_trajectory_csv(out.stream(), t);
            return 0;
        }
        if (sub == sim) {
            const NoiseSpec spec = sim_noise.spec();
            const SimConfig cfg = sim_flags.get(sim_K, sim_M, g.seed);
            const auto runs = run_replicas(cfg, NoiseSchedule(spec), recompose(make_block(sim_p0, sim_K, sim_M)),
                                           sim_reps, sim_serial ? Execution::serial : Execution::parallel);
            Output out(g.out);
            write_sim_csv(out.stream(), runs, sim_K, sim_M);
            return 0;
        }
        if (sub == sweep) {
            SweepSpec s;
            s.grid = build_grid(sw_dfn, sw_dfp, sw_tpr, sw_fpr, sw_j, sw_share);
            s.engine = parse_engine(sw_engine);
            s.sim = sw_sim.get(sw_K, sw_M, g.seed);
            s.ode = sw_ode.get();
            s.replicas = sw_reps;
            s.base_seed = g.seed;
            s.p0 = sw_p0;
            if (sw_only) {
                if (*sw_only >= s.grid.size()) throw CLI::ValidationError("--only", "index outside the grid");
                if (g.out == "-") throw CLI::ValidationError("--out", "replay needs an output file");
                replay_run(s, *sw_only, g.out);
                return 0;
            }
            if (g.out == "-") throw CLI::ValidationError("--out", "sweep needs an output directory");
            s.out_dir = g.out;
            const auto rows = run_sweep(s, resolved_config(app, sub));
            int failed = 0;
            for (const auto &r : rows)
                if (r.failed) {
                    ++failed;
                    std::cerr << "run " << r.index << " failed: " << r.error << "\n";
                }
            return failed ? 1 : 0;
        }
        if (sub == fpt) {
            const NoiseSpec spec = fp_noise.spec();
            if (fp_bmax < fp_bmin) throw CLI::ValidationError("--beta-max", "must be >= --beta-min");
            Output out(g.out);
            CsvWriter w(out.stream());
            w.header({"beta", "p_star", "stability_sign", "strong_kl_pred", "weak_kl_pred"});
            for (std::size_t i = 0; i < fp_n; ++i) {
                const double f = fp_n == 1 ? 0.0 : double(i) / double(fp_n - 1);
                KlConfig kl;
                kl.beta = fp_bmin * std::pow(fp_bmax / fp_bmin, f);
                kl.p_ref = fp_pref;
                const double p = interior_fixed_point(spec, fp_eta, kl, fp_s2, fp_t2);
                w.field(kl.beta).field(p).field(fixed_point_stability(p, spec, fp_eta, kl, fp_s2, fp_t2));
                w.field(strong_kl_prediction(spec, fp_eta, kl, fp_s2, fp_t2));
                w.field(weak_kl_prediction(spec, fp_eta, kl, fp_s2, fp_t2)).end_row();
            }
            return 0;
        }
        if (sub == ps) {
            Output out(g.out);
            write_phase_surface_csv(out.stream(), phase_surface(ps_fn, ps_fp));
            return 0;
        }
        if (sub == lr) {
            const NoiseSpec spec = lr_noise.spec();
            Output out(g.out);
            CsvWriter w(out.stream());
            if (lr_curve > 0) {
                w.header({"p", "q", "sigma", "signal_gain", "learnability"});
                for (std::size_t i = 0; i < lr_curve; ++i) {
                    const double p = lr_curve == 1 ? 0.5 : double(i) / double(lr_curve - 1);
                    w.field(p).field(mean_reward(spec, p)).field(reward_sigma(spec, p)).field(signal_gain(spec, p));
                    w.field(spec.J() > 0 ? learnability_speed(spec, p) : std::nan("")).end_row();
                }
                return 0;
            }
            const PhaseCell c = phase_cell(spec.delta_fn, spec.delta_fp);
            w.header({"delta_fn", "delta_fp", "J", "p_star", "sigma_max", "p_dagger", "learnability_max"});
            w.field(c.delta_fn).field(c.delta_fp).field(c.J).field(c.p_star).field(c.sigma_max);
            w.field(c.p_dagger).field(c.l_max).end_row();
            return 0;
        }
        if (sub == tr) {
            const auto rows = read_summary(tr_from);
            const auto t = detect_transition(rows);
            Output out(g.out);
            CsvWriter w(out.stream());
            w.header({"critical_j", "lower_index", "upper_index", "lower_j", "upper_j"});
            w.field(t.critical_j).field(rows[t.lower].index).field(rows[t.upper].index);
            w.field(rows[t.lower].spec.J()).field(rows[t.upper].spec.J()).end_row();
            return 0;
        }
    } catch (const CLI::ParseError &e) {
        return app.exit(e);
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
