#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "eefit/config.hpp"
#include "eefit/errors.hpp"
#include "eefit/eval.hpp"
#include "eefit/forecast.hpp"
#include "eefit/inference.hpp"
#include "eefit/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace eefit;
namespace fs = std::filesystem;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
    auto* c = cmd->add_option("--config", args.config_path, "JSON run configuration (or a manifest)");
    if (needs_config) c->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides the config)");
    cmd->add_option("--seed", args.seed, "RNG seed (overrides the config)")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--workers", args.workers, "worker threads (default: all cores)");
}

RunConfig prepare(const CommonArgs& args) {
    RunConfig cfg = load_config(args.config_path);
    if (!args.out_dir.empty()) {
        cfg.output_dir = args.out_dir;
        cfg.resolved["output_dir"] = cfg.output_dir;
    }
    if (args.seed_set) {
        cfg.seed = args.seed;
        cfg.forecast.seed = args.seed;
        cfg.resolved["seed"] = cfg.seed;
    } else {
        cfg.forecast.seed = cfg.seed;
    }
#ifdef _OPENMP
    if (args.workers > 0) omp_set_num_threads(args.workers);
#endif
    fs::create_directories(cfg.output_dir);
    return cfg;
}

std::string join_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

void print_fit_summary(const FittedModel& fm) {
    std::printf("%-28s %12s %12s\n", "coefficient", "estimate", "se");
    for (int k = 0; k < fm.coeffs.layout.size(); ++k) {
        const double se = fm.se.size() == fm.coeffs.layout.size() ? fm.se(k) : std::nan("");
        if (std::isfinite(se))
            std::printf("%-28s %12.5f %12.5f\n", fm.coeffs.layout.names[k].c_str(), fm.coeffs.values(k), se);
        else
            std::printf("%-28s %12.5f %12s\n", fm.coeffs.layout.names[k].c_str(), fm.coeffs.values(k), "-");
    }
    std::printf("loglik %.4f  AIC %.4f  n_free %d  %s (%d iterations)\n", fm.loglik, fm.aic, fm.n_free,
                fm.convergence.converged ? "converged" : "NOT converged", fm.convergence.iterations);
    for (const auto& note : fm.convergence.notes) std::printf("note: %s\n", note.c_str());
}

std::string aic_trace_csv(const OrderSelection& sel) {
    std::string out = "p,aic\n";
    char buf[64];
    for (const auto& [p, aic] : sel.aic_trace) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f\n", p, aic);
        out += buf;
    }
    return out;
}

std::string profile_trace_csv(const FittedModel& fm) {
    std::string out = "x,kappa,loglik\n";
    char buf[96];
    for (const auto& pp : fm.profile) {
        std::snprintf(buf, sizeof(buf), "%.8f,%.8f,%.8f\n", pp.x, pp.kappa, pp.loglik);
        out += buf;
    }
    return out;
}

int run_fit(const CommonArgs& args) {
    RunConfig cfg = prepare(args);
    const Dataset data = load_dataset(cfg);
    ModelSpec spec = cfg.model;

    std::vector<std::string> outputs;
    if (cfg.select_order_max > 0) {
        const OrderSelection sel = select_order(spec, data, cfg.select_order_max, cfg.fit);
        spec.serial_interval.p = sel.p;
        if (spec.serial_interval.family == SiFamily::unrestricted)
            spec.serial_interval.logits = Eigen::VectorXd::Zero(std::max(0, sel.p - 1));
        const std::string trace_path = join_path(cfg.output_dir, "aic_trace.csv");
        write_text(trace_path, aic_trace_csv(sel));
        outputs.push_back(trace_path);
        std::printf("order selected: p = %d (trace written)\n", sel.p);
    }

    const FittedModel fm = fit_profile(spec, data, cfg.fit);
    if (!std::isfinite(fm.loglik)) throw ConvergenceError("fit did not reach a finite log-likelihood");

    const std::string report_path = join_path(cfg.output_dir, "fit_report.json");
    write_text(report_path, fitted_to_json(fm).dump(2) + "\n");
    outputs.push_back(report_path);
    if (!fm.profile.empty()) {
        const std::string prof_path = join_path(cfg.output_dir, "profile_trace.csv");
        write_text(prof_path, profile_trace_csv(fm));
        outputs.push_back(prof_path);
    }
    write_manifest(cfg, "fit", outputs, fm.convergence.notes, join_path(cfg.output_dir, "manifest_fit.json"));
    print_fit_summary(fm);
    return 0;
}

int run_forecast(const CommonArgs& args) {
    RunConfig cfg = prepare(args);
    const Dataset data = load_dataset(cfg);
    ModelSpec spec = cfg.model;
    if (cfg.test_start.empty()) throw ConfigError("forecast.test_start is required");
    const int test_start = resolve_week(data.counts, cfg.test_start);

    std::vector<std::string> outputs;
    if (cfg.select_order_max > 0) {
        const OrderSelection sel = select_order(spec, data.head(test_start - 1), cfg.select_order_max, cfg.fit);
        spec.serial_interval.p = sel.p;
        if (spec.serial_interval.family == SiFamily::unrestricted)
            spec.serial_interval.logits = Eigen::VectorXd::Zero(std::max(0, sel.p - 1));
        const std::string trace_path = join_path(cfg.output_dir, "aic_trace.csv");
        write_text(trace_path, aic_trace_csv(sel));
        outputs.push_back(trace_path);
        std::printf("order selected on training window: p = %d\n", sel.p);
    }

    std::ofstream samples;
    SampleSink sink;
    if (cfg.save_samples) {
        const std::string samples_path = join_path(cfg.output_dir, "samples.txt");
        samples.open(samples_path);
        if (!samples) throw DataError("cannot write " + samples_path);
        // Block layout: one header line per origin/horizon, then n_paths
        // lines of m comma-separated sampled counts.
        sink = [&samples](int, const std::string& origin_week, const std::vector<Eigen::MatrixXi>& paths) {
            const int H = static_cast<int>(paths.front().rows());
            const int m = static_cast<int>(paths.front().cols());
            for (int h = 1; h <= H; ++h) {
                samples << "# origin=" << origin_week << " horizon=" << h << '\n';
                for (const auto& path : paths) {
                    for (int i = 0; i < m; ++i) samples << (i ? "," : "") << path(h - 1, i);
                    samples << '\n';
                }
            }
        };
        outputs.push_back(samples_path);
    }

    const ForecastSet fsres = rolling_forecasts(spec, data, test_start, cfg.forecast, sink);

    const std::string scores_path = join_path(cfg.output_dir, "scores.csv");
    write_scores_csv(fsres, scores_path);
    outputs.push_back(scores_path);

    std::vector<std::string> notes = fsres.origin_notes;
    for (int o : fsres.failed_origins) notes.push_back("failed origin index " + std::to_string(o));
    write_manifest(cfg, "forecast", outputs, notes, join_path(cfg.output_dir, "manifest_forecast.json"));

    // mean score per horizon
    for (int h = 1; h <= cfg.forecast.horizons; ++h) {
        double sum = 0.0;
        int n = 0;
        for (const auto& row : fsres.rows)
            if (row.horizon == h) {
                sum += row.score;
                ++n;
            }
        if (n) std::printf("h=%d: mean score %.4f over %d origins\n", h, sum / n, n);
    }
    if (!fsres.failed_origins.empty())
        std::printf("%zu origin(s) failed and were excluded\n", fsres.failed_origins.size());
    return 0;
}

int run_compare(const std::vector<std::string>& inputs, const std::string& baseline, int n_perm,
                std::uint64_t seed, const std::string& out_dir) {
    std::vector<ScoreFile> files;
    for (const auto& spec : inputs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size())
            throw ConfigError("score inputs must look like label=path, got: " + spec);
        files.push_back(read_scores_csv(spec.substr(eq + 1), spec.substr(0, eq)));
    }
    const ComparisonReport report = compare_models(files, baseline, n_perm, seed);
    fs::create_directories(out_dir);
    write_comparison_csv(report, join_path(out_dir, "comparison.csv"));
    std::printf("%s", format_comparison_table(report).c_str());
    return 0;
}

int run_residuals(const CommonArgs& args, bool no_sqrt, int max_lag) {
    RunConfig cfg = prepare(args);
    const Dataset data = load_dataset(cfg);
    FitOptions fopt = cfg.fit;
    fopt.hessian = false;
    const FittedModel fm = fit_profile(cfg.model, data, fopt);
    if (!std::isfinite(fm.loglik)) throw ConvergenceError("fit did not reach a finite log-likelihood");

    const ResidualPanel resid = pearson_residuals(fm, data, no_sqrt);
    const int n = data.counts.T() - resid.first_valid;
    const int lag = max_lag > 0 ? max_lag : std::min(26, n / 4 - 1);
    const AcfResult acf = residual_acf(resid, lag);

    std::string rtext = "week";
    for (const auto& u : data.counts.unit_names) rtext += "," + u;
    rtext += "\n";
    char buf[64];
    for (int t = resid.first_valid; t < data.counts.T(); ++t) {
        rtext += data.counts.week_labels[t];
        for (int i = 0; i < data.counts.m(); ++i) {
            std::snprintf(buf, sizeof(buf), ",%.8f", resid.r(t, i));
            rtext += buf;
        }
        rtext += "\n";
    }
    const std::string resid_path = join_path(cfg.output_dir, "residuals.csv");
    write_text(resid_path, rtext);

    std::string atext = "lag";
    for (const auto& u : data.counts.unit_names) atext += "," + u;
    atext += ",band\n";
    for (int k = 0; k <= lag; ++k) {
        atext += std::to_string(k);
        for (int i = 0; i < data.counts.m(); ++i) {
            std::snprintf(buf, sizeof(buf), ",%.8f", acf.acf(k, i));
            atext += buf;
        }
        std::snprintf(buf, sizeof(buf), ",%.8f", acf.band);
        atext += buf;
        atext += "\n";
    }
    const std::string acf_path = join_path(cfg.output_dir, "acf.csv");
    write_text(acf_path, atext);

    std::vector<std::string> notes;
    for (int i = 0; i < data.counts.m(); ++i) {
        std::string s = data.counts.unit_names[i] + ": " + std::to_string(acf.crossings[i].size()) +
                        " lag(s) outside the band";
        notes.push_back(s);
        std::printf("%s\n", s.c_str());
    }
    write_manifest(cfg, "residuals", {resid_path, acf_path}, notes,
                   join_path(cfg.output_dir, "manifest_residuals.json"));
    return 0;
}

int run_simulate(const CommonArgs& args) {
    RunConfig cfg = prepare(args);
    const SimulateConfig& sim = cfg.simulate;
    if (sim.weeks < 2) throw ConfigError("simulate.weeks must be at least 2");
    if (sim.units.empty()) throw ConfigError("simulate.units must list the unit names");
    if (sim.burn_in < 0) throw ConfigError("simulate.burn_in must be >= 0");
    const ModelSpec& spec = cfg.model;
    for (const auto& c : spec.endemic.covariates)
        if (c != "christmas") throw ConfigError("simulate supports only the calendar covariate \"christmas\"");
    for (const auto& c : spec.epidemic.covariates)
        if (c != "christmas") throw ConfigError("simulate supports only the calendar covariate \"christmas\"");

    const int p = spec.serial_interval.p;
    const int m = static_cast<int>(sim.units.size());
    // The harmonic clock runs on row indices, so a refit on the emitted
    // window restarts it at zero; pad the warm-up until the lead-in is a
    // whole number of periods and the phases line up. burn_in is a minimum.
    int burn = sim.burn_in;
    if ((p + burn) % spec.period != 0) burn += spec.period - (p + burn) % spec.period;
    const int total = p + burn + sim.weeks;

    // Labels on a 52-week calendar, counted back from start_label so that
    // the first emitted row carries exactly start_label.
    IsoWeek w0 = parse_iso_week(sim.start_label);
    for (int k = 0; k < p + burn; ++k) {
        if (--w0.week < 1) {
            w0.week = 52;
            --w0.year;
        }
    }
    CountsPanel panel;
    panel.counts = Eigen::MatrixXi::Zero(total, m);
    panel.unit_names = sim.units;
    IsoWeek w = w0;
    for (int t = 0; t < total; ++t) {
        panel.week_labels.push_back(format_iso_week(w));
        panel.calendar_week.push_back(w.week);
        if (++w.week > 52) {
            w.week = 1;
            ++w.year;
        }
    }

    Dataset data;
    data.counts = panel;
    if (!cfg.neighbourhood_path.empty())
        data.neighbourhood = load_neighbourhood(cfg.neighbourhood_path, sim.units);
    if (!cfg.populations_path.empty()) data.populations = load_populations(cfg.populations_path, sim.units);
    data.covariates = build_covariates(data.counts);

    const ParamLayout layout = build_layout(spec, data);
    Eigen::VectorXd values(layout.size());
    std::vector<std::string> missing, unknown;
    for (int k = 0; k < layout.size(); ++k) {
        if (k >= layout.si_base && k < layout.si_base + layout.si_count) continue;
        const auto it = sim.coefficients.find(layout.names[k]);
        if (it == sim.coefficients.end())
            missing.push_back(layout.names[k]);
        else
            values(k) = it->second;
    }
    for (const auto& [name, _] : sim.coefficients) {
        bool found = false;
        for (const auto& n : layout.names)
            if (n == name) found = true;
        if (!found) unknown.push_back(name);
        if (found && name.rfind("si.", 0) == 0)
            throw ConfigError("set the weighting parameter in model.serial_interval, not in coefficients: " + name);
    }
    if (!missing.empty()) {
        std::string msg = "simulate.coefficients missing:";
        for (const auto& s : missing) msg += " " + s;
        throw ConfigError(msg);
    }
    if (!unknown.empty()) {
        std::string msg = "simulate.coefficients has unknown names:";
        for (const auto& s : unknown) msg += " " + s;
        throw ConfigError(msg);
    }
    if (layout.si_count > 0) {
        if (spec.serial_interval.parametric())
            values(layout.si_base) = kappa_to_real(spec.serial_interval.family, spec.serial_interval.kappa);
        else
            for (int k = 0; k < layout.si_count; ++k) values(layout.si_base + k) = spec.serial_interval.logits(k);
    }

    const Design design = build_design(spec, data);
    const MeanParts parts = evaluate_mean_parts(spec, layout, design, values); // nu/phi ignore counts
    const Eigen::VectorXd u = lag_weights(spec.serial_interval);
    Eigen::MatrixXd W = Eigen::MatrixXd::Identity(m, m);
    if (spec.spatial.kind == SpatialKind::power_law && m > 1) {
        SpatialWeightSpec sp = spec.spatial;
        sp.rho = std::exp(values(layout.log_rho_index));
        W = spatial_weights(sp, *data.neighbourhood);
    }
    Eigen::VectorXd psi(m);
    for (int i = 0; i < m; ++i)
        psi(i) = std::exp(values(layout.log_psi_base + (layout.log_psi_count == 1 ? 0 : i)));

    Rng rng(derive_seed(cfg.seed, 0));
    Eigen::MatrixXd hist = Eigen::MatrixXd::Zero(total, m);
    for (int t = 0; t < p; ++t) // endemic-only start
        for (int i = 0; i < m; ++i) hist(t, i) = static_cast<double>(rng.neg_binomial(parts.nu(t, i), psi(i)));
    for (int t = p; t < total; ++t) {
        Eigen::VectorXd A = Eigen::VectorXd::Zero(m);
        for (int d = 1; d <= p; ++d) A += u(d - 1) * hist.row(t - d).transpose();
        const Eigen::VectorXd X = W.transpose() * A;
        for (int i = 0; i < m; ++i) {
            const double lam = parts.nu(t, i) + parts.phi(t, i) * X(i);
            hist(t, i) = static_cast<double>(rng.neg_binomial(lam, psi(i)));
        }
    }

    CountsPanel outp;
    outp.unit_names = sim.units;
    outp.counts = hist.bottomRows(sim.weeks).cast<int>();
    outp.week_labels.assign(panel.week_labels.end() - sim.weeks, panel.week_labels.end());
    outp.calendar_week.assign(panel.calendar_week.end() - sim.weeks, panel.calendar_week.end());

    const std::string counts_path = join_path(cfg.output_dir, "simulated.csv");
    write_counts(outp, counts_path);
    write_manifest(cfg, "simulate", {counts_path}, {}, join_path(cfg.output_dir, "manifest_simulate.json"));
    std::printf("wrote %d weeks x %d units to %s (mean count %.3f)\n", sim.weeks, m, counts_path.c_str(),
                outp.counts.cast<double>().mean());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"endemic-epidemic weekly count models: fitting, forecasting, evaluation"};
    app.require_subcommand(1);

    CommonArgs fit_args, fc_args, res_args, sim_args;
    bool no_sqrt = false;
    int max_lag = 0;
    std::vector<std::string> cmp_inputs;
    std::string cmp_baseline, cmp_out = ".";
    int cmp_nperm = 9999;
    std::uint64_t cmp_seed = 1;

    auto* cmd_fit = app.add_subcommand("fit", "fit a model and write the report");
    add_common(cmd_fit, fit_args);
    auto* cmd_forecast = app.add_subcommand("forecast", "rolling-origin forecasts and log scores");
    add_common(cmd_forecast, fc_args);
    auto* cmd_compare = app.add_subcommand("compare", "compare score files against a baseline");
    cmd_compare->add_option("inputs", cmp_inputs, "score files as label=path")->required()->expected(-2);
    cmd_compare->add_option("--baseline", cmp_baseline, "baseline label")->required();
    cmd_compare->add_option("--n-perm", cmp_nperm, "permutation replicates");
    cmd_compare->add_option("--seed", cmp_seed, "RNG seed");
    cmd_compare->add_option("--out", cmp_out, "output directory");
    auto* cmd_sim = app.add_subcommand("simulate", "generate a synthetic counts panel");
    add_common(cmd_sim, sim_args);
    auto* cmd_resid = app.add_subcommand("residuals", "Pearson residuals and their autocorrelation");
    add_common(cmd_resid, res_args);
    cmd_resid->add_flag("--no-sqrt", no_sqrt, "divide by the variance instead of its square root");
    cmd_resid->add_option("--max-lag", max_lag, "autocorrelation lags (default ~26)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_fit->parsed()) return run_fit(fit_args);
        if (cmd_forecast->parsed()) return run_forecast(fc_args);
        if (cmd_compare->parsed()) return run_compare(cmp_inputs, cmp_baseline, cmp_nperm, cmp_seed, cmp_out);
        if (cmd_sim->parsed()) return run_simulate(sim_args);
        if (cmd_resid->parsed()) return run_residuals(res_args, no_sqrt, max_lag);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
