#include "eefit/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "eefit/errors.hpp"

namespace eefit {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
    }
}

const json& section(const json& j, const char* name, const json& fallback) {
    const auto it = j.find(name);
    return it == j.end() ? fallback : *it;
}

InterceptKind intercept_from_string(const std::string& s, const std::string& where) {
    if (s == "shared") return InterceptKind::shared;
    if (s == "per_unit") return InterceptKind::per_unit;
    throw ConfigError(where + ": intercept must be \"shared\" or \"per_unit\", got \"" + s + "\"");
}

std::string to_string(InterceptKind k) { return k == InterceptKind::shared ? "shared" : "per_unit"; }

ComponentSpec component_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    check_keys(j, where, {"intercept", "harmonics", "covariates"});
    ComponentSpec c;
    c.intercept = intercept_from_string(j.value("intercept", "shared"), where);
    c.harmonics = j.value("harmonics", 0);
    if (j.contains("covariates")) {
        if (!j["covariates"].is_array()) throw ConfigError(where + ".covariates must be an array of names");
        for (const auto& v : j["covariates"]) c.covariates.push_back(v.get<std::string>());
    }
    return c;
}

json component_to_json(const ComponentSpec& c) {
    return json{{"intercept", to_string(c.intercept)}, {"harmonics", c.harmonics}, {"covariates", c.covariates}};
}

} // namespace

ModelSpec model_spec_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("model section must be an object");
    check_keys(j, "model",
               {"endemic", "epidemic", "gravity", "serial_interval", "spatial", "per_unit_dispersion", "period"});
    ModelSpec spec;
    const json empty = json::object();
    spec.endemic = component_from_json(section(j, "endemic", empty), "model.endemic");
    spec.epidemic = component_from_json(section(j, "epidemic", empty), "model.epidemic");
    spec.gravity = j.value("gravity", false);
    spec.per_unit_dispersion = j.value("per_unit_dispersion", false);
    spec.period = j.value("period", 52);

    const json& si = section(j, "serial_interval", empty);
    check_keys(si, "model.serial_interval", {"family", "p", "kappa", "logits"});
    spec.serial_interval.family = si_family_from_string(si.value("family", "fixed"));
    spec.serial_interval.p = si.value("p", 1);
    spec.serial_interval.kappa = si.value("kappa", 0.5);
    if (si.contains("logits")) {
        const auto& lg = si["logits"];
        if (!lg.is_array()) throw ConfigError("model.serial_interval.logits must be an array");
        spec.serial_interval.logits.resize(static_cast<int>(lg.size()));
        for (int k = 0; k < spec.serial_interval.logits.size(); ++k)
            spec.serial_interval.logits(k) = lg[k].get<double>();
    } else if (spec.serial_interval.family == SiFamily::unrestricted) {
        spec.serial_interval.logits = Eigen::VectorXd::Zero(std::max(0, spec.serial_interval.p - 1));
    }

    const json& sp = section(j, "spatial", empty);
    check_keys(sp, "model.spatial", {"kind", "rho"});
    const std::string kind = sp.value("kind", "identity");
    if (kind == "identity")
        spec.spatial.kind = SpatialKind::identity;
    else if (kind == "power_law")
        spec.spatial.kind = SpatialKind::power_law;
    else
        throw ConfigError("model.spatial.kind must be \"identity\" or \"power_law\", got \"" + kind + "\"");
    spec.spatial.rho = sp.value("rho", 1.0);

    spec.validate();
    return spec;
}

json model_spec_to_json(const ModelSpec& spec) {
    json si{{"family", to_string(spec.serial_interval.family)},
            {"p", spec.serial_interval.p},
            {"kappa", spec.serial_interval.kappa}};
    if (spec.serial_interval.family == SiFamily::unrestricted) {
        std::vector<double> lg(spec.serial_interval.logits.data(),
                               spec.serial_interval.logits.data() + spec.serial_interval.logits.size());
        si["logits"] = lg;
    }
    return json{{"endemic", component_to_json(spec.endemic)},
                {"epidemic", component_to_json(spec.epidemic)},
                {"gravity", spec.gravity},
                {"serial_interval", si},
                {"spatial",
                 {{"kind", spec.spatial.kind == SpatialKind::identity ? "identity" : "power_law"},
                  {"rho", spec.spatial.rho}}},
                {"per_unit_dispersion", spec.per_unit_dispersion},
                {"period", spec.period}};
}

RunConfig config_from_json(const json& raw) {
    const json& j = raw.contains("config") ? raw["config"] : raw; // manifest round-trip
    if (!j.is_object()) throw ConfigError("config root must be an object");
    check_keys(j, "config root", {"data", "model", "fit", "forecast", "simulate", "seed", "output_dir"});

    RunConfig cfg;
    const json empty = json::object();

    const json& data = section(j, "data", empty);
    check_keys(data, "data", {"counts", "neighbourhood", "populations", "covariates"});
    cfg.counts_path = data.value("counts", "");
    cfg.neighbourhood_path = data.value("neighbourhood", "");
    cfg.populations_path = data.value("populations", "");
    cfg.covariates_path = data.value("covariates", "");

    cfg.model = model_spec_from_json(section(j, "model", empty));

    const json& fit = section(j, "fit", empty);
    check_keys(fit, "fit", {"hessian", "grid_points", "nm_starts", "select_order_max"});
    cfg.fit.hessian = fit.value("hessian", true);
    cfg.fit.grid_points = fit.value("grid_points", 21);
    cfg.fit.nm_starts = fit.value("nm_starts", 5);
    cfg.select_order_max = fit.value("select_order_max", 0);

    const json& fc = section(j, "forecast", empty);
    check_keys(fc, "forecast",
               {"test_start", "horizons", "n_paths", "standardize", "refit", "reuse_on_failure", "save_samples"});
    if (fc.contains("test_start")) {
        const auto& ts = fc["test_start"];
        cfg.test_start = ts.is_string() ? ts.get<std::string>() : std::to_string(ts.get<long>());
    }
    cfg.forecast.horizons = fc.value("horizons", 1);
    cfg.forecast.n_paths = fc.value("n_paths", 1000);
    cfg.forecast.standardize = fc.value("standardize", false);
    cfg.forecast.refit = fc.value("refit", true);
    cfg.forecast.reuse_on_failure = fc.value("reuse_on_failure", false);
    cfg.save_samples = fc.value("save_samples", false);

    const json& sim = section(j, "simulate", empty);
    check_keys(sim, "simulate", {"weeks", "burn_in", "units", "coefficients", "start_label"});
    cfg.simulate.weeks = sim.value("weeks", 0);
    cfg.simulate.burn_in = sim.value("burn_in", 52);
    if (sim.contains("units"))
        for (const auto& u : sim["units"]) cfg.simulate.units.push_back(u.get<std::string>());
    if (sim.contains("coefficients")) {
        if (!sim["coefficients"].is_object())
            throw ConfigError("simulate.coefficients must map names to numbers");
        for (const auto& [k, v] : sim["coefficients"].items()) cfg.simulate.coefficients[k] = v.get<double>();
    }
    cfg.simulate.start_label = sim.value("start_label", "2000-W01");

    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.output_dir = j.value("output_dir", ".");
    if (cfg.forecast.horizons < 1 || cfg.forecast.n_paths < 1)
        throw ConfigError("forecast.horizons and forecast.n_paths must be positive");

    // Echo the fully resolved configuration so defaults cannot drift silently.
    json sim_j{{"weeks", cfg.simulate.weeks},
               {"burn_in", cfg.simulate.burn_in},
               {"units", cfg.simulate.units},
               {"coefficients", cfg.simulate.coefficients},
               {"start_label", cfg.simulate.start_label}};
    json fc_j{{"horizons", cfg.forecast.horizons},   {"n_paths", cfg.forecast.n_paths},
              {"standardize", cfg.forecast.standardize}, {"refit", cfg.forecast.refit},
              {"reuse_on_failure", cfg.forecast.reuse_on_failure}, {"save_samples", cfg.save_samples}};
    if (!cfg.test_start.empty()) fc_j["test_start"] = cfg.test_start;
    cfg.resolved = json{{"data",
                         {{"counts", cfg.counts_path},
                          {"neighbourhood", cfg.neighbourhood_path},
                          {"populations", cfg.populations_path},
                          {"covariates", cfg.covariates_path}}},
                        {"model", model_spec_to_json(cfg.model)},
                        {"fit",
                         {{"hessian", cfg.fit.hessian},
                          {"grid_points", cfg.fit.grid_points},
                          {"nm_starts", cfg.fit.nm_starts},
                          {"select_order_max", cfg.select_order_max}}},
                        {"forecast", fc_j},
                        {"simulate", sim_j},
                        {"seed", cfg.seed},
                        {"output_dir", cfg.output_dir}};
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error in ") + path + ": " + e.what());
    }
    return config_from_json(j);
}

json fitted_to_json(const FittedModel& fm) {
    json coeffs = json::array();
    for (int k = 0; k < fm.coeffs.layout.size(); ++k) {
        json row{{"name", fm.coeffs.layout.names[k]}, {"estimate", fm.coeffs.values(k)}};
        if (fm.se.size() == fm.coeffs.layout.size() && std::isfinite(fm.se(k)))
            row["se"] = fm.se(k);
        else
            row["se"] = nullptr;
        coeffs.push_back(std::move(row));
    }
    json out{{"format_version", 1},
             {"loglik", fm.loglik},
             {"aic", fm.aic},
             {"n_free", fm.n_free},
             {"coefficients", coeffs},
             {"model", model_spec_to_json(fm.spec)},
             {"convergence",
              {{"converged", fm.convergence.converged},
               {"iterations", fm.convergence.iterations},
               {"grad_norm", fm.convergence.grad_norm},
               {"notes", fm.convergence.notes}}}};
    std::vector<double> w(fm.si_weights.data(), fm.si_weights.data() + fm.si_weights.size());
    out["si_weights"] = w;
    if (std::isfinite(fm.kappa_hat)) out["kappa"] = fm.kappa_hat;
    if (!fm.profile.empty()) {
        json prof = json::array();
        for (const auto& pp : fm.profile)
            prof.push_back(json{{"x", pp.x}, {"kappa", pp.kappa}, {"loglik", pp.loglik}});
        out["profile"] = prof;
    }
    return out;
}

Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.counts_path.empty()) throw ConfigError("data.counts path is required");
    Dataset data;
    data.counts = load_counts(cfg.counts_path);
    if (!cfg.neighbourhood_path.empty())
        data.neighbourhood = load_neighbourhood(cfg.neighbourhood_path, data.counts.unit_names);
    if (!cfg.populations_path.empty())
        data.populations = load_populations(cfg.populations_path, data.counts.unit_names);
    data.covariates = build_covariates(data.counts, cfg.covariates_path);
    return data;
}

int resolve_week(const CountsPanel& panel, const std::string& label_or_index) {
    if (label_or_index.empty()) throw ConfigError("empty week reference");
    bool digits = true;
    for (char c : label_or_index)
        if (!std::isdigit(static_cast<unsigned char>(c))) digits = false;
    if (digits) {
        const int idx = std::stoi(label_or_index);
        if (idx < 1 || idx > panel.T())
            throw ConfigError("week index " + label_or_index + " outside 1.." + std::to_string(panel.T()));
        return idx;
    }
    for (int t = 0; t < panel.T(); ++t)
        if (panel.week_labels[t] == label_or_index) return t + 1;
    throw ConfigError("week label not found in panel: " + label_or_index);
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs, const std::vector<std::string>& notes,
                    const std::string& path) {
    json m{{"tool", "eefit"},
           {"format_version", 1},
           {"command", command},
           {"seed", cfg.seed},
           {"config", cfg.resolved},
           {"outputs", outputs},
           {"notes", notes}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest: " + path);
    out << m.dump(2) << '\n';
}

} // namespace eefit
