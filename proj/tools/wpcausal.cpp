// wpcausal: simulate panels, compute within-person scores, estimate joint
// treatment effects and run Monte Carlo grids.
//
// Every subcommand takes an optional JSON config (--config); flags override
// config values. Unknown config keys are rejected. Exit codes:
//   0 ok, 1 usage/config, 2 I/O or malformed data, 3 improper step-1 fit
//   (strict) or failed Monte Carlo cell, 4 estimation did not converge.

#include "wpcausal/errors.hpp"
#include "wpcausal/montecarlo.hpp"
#include "wpcausal/msm.hpp"
#include "wpcausal/scores.hpp"
#include "wpcausal/simulate.hpp"
#include "wpcausal/snmm.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace wpcausal;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kImproper = 3, kNonConvergence = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ImproperError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// -------------------------------------------------------------------------
// Config schema: defaults double as the list of accepted keys and types
// -------------------------------------------------------------------------

json dynamics_defaults() {
    const Dynamics d;
    return {{"yy", d.yy}, {"ya", d.ya}, {"yl", d.yl}, {"ay", d.ay}, {"aa", d.aa},
            {"al", d.al}, {"ly", d.ly}, {"la", d.la}, {"ll", d.ll}, {"quadratic", d.quadratic}};
}

json population_defaults() {
    const SimConfig c;
    return {{"trait_correlation", c.trait_correlation},
            {"within_initial_variance", c.within_initial_variance},
            {"within_initial_covariance", c.within_initial_covariance},
            {"residual_variance", c.residual_variance},
            {"dynamics", dynamics_defaults()}};
}

json variables_default() {
    return json::array({{{"name", "Y"}, {"role", "outcome"}},
                        {{"name", "A"}, {"role", "treatment"}},
                        {{"name", "L"}, {"role", "confounder"}}});
}

json fit_defaults() {
    const FitOptions f;
    return {{"max_iterations", f.max_iterations},
            {"gradient_tolerance", f.gradient_tolerance},
            {"relative_change_tolerance", f.relative_change_tolerance}};
}

json msm_defaults() {
    const MsmOptions m;
    return {{"include_baseline", m.treatment.include_baseline},
            {"quadratic_confounders", m.treatment.quadratic_confounders},
            {"truncate_percentile", m.truncate_percentile},
            {"extreme_weight_ratio", m.extreme_weight_ratio}};
}

json snmm_defaults() {
    const NuisanceConfig n;
    return {{"confounder_interactions", false},     {"quadratic_a", n.quadratic_a},
            {"intercept_only_a", n.intercept_only_a}, {"quadratic_b", n.quadratic_b},
            {"intercept_only_b", n.intercept_only_b},
            {"d_function", "efficient"},
            {"max_iterations", n.max_iterations},    {"tolerance", n.tolerance},
            {"variance_floor", n.variance_floor}};
}

json simulate_defaults() {
    const SimConfig c;
    json j = {{"n_persons", c.n_persons}, {"k_times", c.k_times}, {"phi2", c.phi2}};
    const json population = population_defaults();
    for (auto& [k, v] : population.items()) j[k] = v;
    j["scenario"] = "clean";
    j["seed"] = c.seed;
    j["out"] = ".";
    return j;
}

json scores_defaults() {
    return {{"input", ""},        {"variables", variables_default()}, {"centerings", json::array({"proposed"})},
            {"strict", false},    {"truth", ""},                      {"fit", fit_defaults()},
            {"out", "."}};
}

json estimate_defaults() {
    return {{"input", ""},       {"scores", ""},          {"centering", "proposed"},
            {"truth", ""},       {"variables", variables_default()},
            {"method", "snmm"},  {"first_treatment", 0},
            {"msm", msm_defaults()}, {"snmm", snmm_defaults()}, {"fit", fit_defaults()},
            {"out", "."}};
}

json mc_defaults() {
    json centerings = json::array();
    for (Centering c : all_centerings()) centerings.push_back(std::string(to_string(c)));
    return {{"grid", {{"n_persons", {1000}}, {"k_times", {4}}, {"phi2", {10.0}}, {"scenario", {"clean"}}}},
            {"replications", 200},
            {"seed", 1},
            {"workers", 1},
            {"methods", {"msm", "snmm"}},
            {"centerings", centerings},
            {"first_treatment", -1},
            {"population", population_defaults()},
            {"msm", msm_defaults()},
            {"snmm", snmm_defaults()},
            {"fit", fit_defaults()},
            {"out", "."}};
}

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return !(a.is_number_integer() && b.is_number_float());
    return a.type() == b.type();
}

// Overlays `user` onto `schema`, rejecting unknown keys and type mismatches.
void merge_checked(json& schema, const json& user, const std::string& where) {
    if (!user.is_object()) throw UsageError(where + ": expected an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!schema.contains(it.key())) throw UsageError("unknown config key '" + path + "'");
        json& slot = schema[it.key()];
        if (slot.is_object()) {
            merge_checked(slot, it.value(), path);
        } else if (slot.is_array()) {
            if (!it.value().is_array()) throw UsageError("config key '" + path + "' must be an array");
            if (!slot.empty()) {
                for (const auto& item : it.value()) {
                    if (slot.front().is_object()) {
                        json probe = slot.front();
                        merge_checked(probe, item, path + "[]");
                        for (auto& [k, v] : probe.items()) {
                            if (!item.contains(k)) throw UsageError("config key '" + path + "[]." + k + "' is required");
                        }
                    } else if (!same_kind(slot.front(), item)) {
                        throw UsageError("config key '" + path + "' has an element of the wrong type");
                    }
                }
            }
            slot = it.value();
        } else {
            if (!same_kind(slot, it.value())) throw UsageError("config key '" + path + "' has the wrong type");
            slot = it.value();
        }
    }
}

json resolve(json defaults, const std::string& config_path) {
    if (config_path.empty()) return defaults;
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open config '" + config_path + "'");
    json user;
    try {
        user = json::parse(in);
    } catch (const json::parse_error& e) {
        throw UsageError("config '" + config_path + "' is not valid JSON: " + e.what());
    }
    merge_checked(defaults, user, "");
    return defaults;
}

// -------------------------------------------------------------------------
// Conversions
// -------------------------------------------------------------------------

Dynamics dynamics_from(const json& j) {
    Dynamics d;
    d.yy = j["yy"];
    d.ya = j["ya"];
    d.yl = j["yl"];
    d.ay = j["ay"];
    d.aa = j["aa"];
    d.al = j["al"];
    d.ly = j["ly"];
    d.la = j["la"];
    d.ll = j["ll"];
    d.quadratic = j["quadratic"];
    return d;
}

void population_from(const json& j, SimConfig& c) {
    c.trait_correlation = j["trait_correlation"];
    c.within_initial_variance = j["within_initial_variance"];
    c.within_initial_covariance = j["within_initial_covariance"];
    c.residual_variance = j["residual_variance"];
    c.dynamics = dynamics_from(j["dynamics"]);
}

std::vector<VariableSpec> variables_from(const json& j) {
    std::vector<VariableSpec> out;
    for (const auto& v : j) out.push_back({v["name"].get<std::string>(), parse_role(v["role"].get<std::string>())});
    validate_roles(out);
    return out;
}

FitOptions fit_from(const json& j) {
    FitOptions f;
    f.max_iterations = j["max_iterations"];
    f.gradient_tolerance = j["gradient_tolerance"];
    f.relative_change_tolerance = j["relative_change_tolerance"];
    return f;
}

MsmOptions msm_from(const json& j, int first_treatment) {
    MsmOptions m;
    m.window.first_treatment = first_treatment;
    m.treatment.include_baseline = j["include_baseline"];
    m.treatment.quadratic_confounders = j["quadratic_confounders"];
    m.truncate_percentile = j["truncate_percentile"];
    m.extreme_weight_ratio = j["extreme_weight_ratio"];
    return m;
}

NuisanceConfig nuisance_from(const json& j) {
    NuisanceConfig n;
    n.quadratic_a = j["quadratic_a"];
    n.quadratic_b = j["quadratic_b"];
    n.intercept_only_a = j["intercept_only_a"];
    n.intercept_only_b = j["intercept_only_b"];
    const std::string d = j["d_function"];
    if (d == "efficient") {
        n.d_function = DFunction::efficient;
    } else if (d == "blip_only") {
        n.d_function = DFunction::blip_only;
    } else {
        throw UsageError("snmm.d_function must be 'efficient' or 'blip_only'");
    }
    n.max_iterations = j["max_iterations"];
    n.tolerance = j["tolerance"];
    n.variance_floor = j["variance_floor"];
    return n;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, const json& extra = json::object()) {
    json m = {{"command", command}, {"version", "0.1.0"}, {"config", config}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::string csv_value(double x) { return std::isnan(x) ? "NA" : format_double(x); }

// -------------------------------------------------------------------------
// simulate
// -------------------------------------------------------------------------

int cmd_simulate(const json& cfg) {
    SimConfig c;
    c.n_persons = cfg["n_persons"];
    c.k_times = cfg["k_times"];
    c.phi2 = cfg["phi2"];
    population_from(cfg, c);
    c.scenario = parse_scenario(cfg["scenario"].get<std::string>());
    c.seed = cfg["seed"];
    c.validate();

    const fs::path out = cfg["out"].get<std::string>();
    ensure_dir(out);
    const SimulatedPanel sim = generate(c);
    write_panel_csv(out / "panel.csv", sim.observed);
    write_truth_csv(out / "truth.csv", sim);

    json scenario = {{"name", std::string(to_string(c.scenario))}};
    switch (c.scenario) {
        case Scenario::measurement_error_10:
        case Scenario::measurement_error_20:
            scenario["measurement_error_variance"] = c.measurement_error_variance();
            break;
        case Scenario::timevarying_loadings:
            scenario["own_loading"] = "1 + 0.5 k / K";
            scenario["cross_loading"] = 0.3;
            break;
        case Scenario::quadratic_confounding:
            scenario["quadratic_coefficient"] = c.dynamics.quadratic;
            break;
        case Scenario::clean:
            break;
    }
    json tau = json::object();
    for (std::size_t j = 0; j < sim.true_tau.names.size(); ++j) tau[sim.true_tau.names[j]] = sim.true_tau.values(static_cast<Eigen::Index>(j));
    write_manifest(out, "simulate", cfg,
                   {{"seed", c.seed}, {"scenario", scenario}, {"true_tau", tau},
                    {"files", {"panel.csv", "truth.csv"}}});
    std::cerr << "wrote " << c.n_persons << " persons x " << c.k_times + 1 << " times to " << out.string() << "\n";
    return kOk;
}

// -------------------------------------------------------------------------
// scores
// -------------------------------------------------------------------------

json fit_report(const PanelDataset& data, const Step1Result& s1) {
    json report = json::array();
    for (std::size_t v = 0; v < s1.fits.size(); ++v) {
        const MeasurementFit& f = s1.fits[v];
        json ar = json::array(), s2 = json::array();
        for (Eigen::Index k = 0; k < f.params.ar_coefs.size(); ++k) {
            ar.push_back(f.params.ar_coefs(k));
            s2.push_back(f.params.resid_vars(k));
        }
        report.push_back({{"variable", data.variables()[v].name},
                          {"phi2", f.params.phi2},
                          {"psi00", f.params.psi00},
                          {"ar_coefs", ar},
                          {"resid_vars", s2},
                          {"chi_square", f.chi_square.statistic},
                          {"df", f.chi_square.df},
                          {"cfi", f.indices.cfi},
                          {"rmsea", f.indices.rmsea},
                          {"srmr", f.indices.srmr},
                          {"converged", f.converged},
                          {"improper", f.improper},
                          {"iterations", f.n_iterations}});
    }
    return report;
}

bool needs_step1(Centering c) { return c == Centering::proposed || c == Centering::trait_predictor; }

std::optional<MatrixXd> load_true_traits(const json& cfg, const std::vector<VariableSpec>& vars) {
    const std::string path = cfg["truth"];
    if (path.empty()) return std::nullopt;
    return load_truth_csv(path, vars).traits;
}

int cmd_scores(const json& cfg) {
    const std::string input = cfg["input"];
    if (input.empty()) throw UsageError("scores needs an input panel (--input)");
    const auto vars = variables_from(cfg["variables"]);
    std::vector<Centering> centerings;
    for (const auto& c : cfg["centerings"]) centerings.push_back(parse_centering(c.get<std::string>()));
    if (centerings.empty()) throw UsageError("no centering requested");
    const bool strict = cfg["strict"];

    const PanelDataset data = load_panel_csv(input, vars);
    const fs::path out = cfg["out"].get<std::string>();
    ensure_dir(out);

    std::optional<Step1Result> s1;
    if (std::any_of(centerings.begin(), centerings.end(), needs_step1)) {
        s1 = run_step1(data, fit_from(cfg["fit"]));
        write_text(out / "fit_report.json", fit_report(data, *s1).dump(2) + "\n");
        for (const auto& p : s1->problems) std::cerr << "warning: " << p << "\n";
        if (strict && !s1->problems.empty()) {
            throw ImproperError("step-1 measurement fits are not usable (strict mode)");
        }
    }
    const auto traits = load_true_traits(cfg, vars);

    json written = json::array();
    std::vector<std::string> skipped;
    for (Centering c : centerings) {
        if (needs_step1(c) && !(s1->fits_usable() && (c != Centering::proposed || s1->proposed_available()))) {
            std::cerr << "warning: " << to_string(c) << " scores refused: step-1 fits are improper or unusable\n";
            skipped.emplace_back(to_string(c));
            continue;
        }
        if (c == Centering::true_scores && !traits) throw UsageError("true_scores centering needs --truth");
        const ScoreSet scores = center(data, c, {s1 ? &*s1 : nullptr, traits ? &*traits : nullptr});
        const std::string name = "scores_" + std::string(to_string(c)) + ".csv";
        write_scores_csv(out / name, scores);
        written.push_back(name);
        for (const auto& w : scores.warnings) std::cerr << "warning: " << w << "\n";
    }
    write_manifest(out, "scores", cfg, {{"files", written}, {"refused", skipped}});
    if (written.empty()) throw ImproperError("no score set could be produced");
    return kOk;
}

// -------------------------------------------------------------------------
// estimate
// -------------------------------------------------------------------------

// Table 1 layout: outcome/treatment blocks in descending order, each beta
// followed by its interaction terms.
std::vector<std::size_t> table_order(const CausalEstimates& est, bool interactions) {
    std::vector<std::size_t> order(est.names.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    if (!interactions) return order;
    auto block = [&](std::size_t j) {
        const std::string& n = est.names[j];
        int m = -1, t = -1;
        if (n.rfind("beta_", 0) == 0) std::sscanf(n.c_str(), "beta_%d_%d", &m, &t);
        else if (n.rfind("gamma_", 0) == 0) std::sscanf(n.c_str(), "gamma_%d_%d", &m, &t);
        return std::make_pair(m, t);
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return block(a) > block(b); });
    return order;
}

int cmd_estimate(const json& cfg) {
    const auto vars = variables_from(cfg["variables"]);
    const std::string input = cfg["input"], scores_path = cfg["scores"];
    if (input.empty() == scores_path.empty()) throw UsageError("estimate needs exactly one of --input (panel) or --scores");
    const Method method = parse_method(cfg["method"].get<std::string>());
    const int first = cfg["first_treatment"];
    const fs::path out = cfg["out"].get<std::string>();
    ensure_dir(out);

    ScoreSet scores;
    if (!scores_path.empty()) {
        scores = load_scores_csv(scores_path, vars);
    } else {
        const PanelDataset data = load_panel_csv(input, vars);
        const Centering c = parse_centering(cfg["centering"].get<std::string>());
        std::optional<Step1Result> s1;
        if (needs_step1(c)) {
            s1 = run_step1(data, fit_from(cfg["fit"]));
            write_text(out / "fit_report.json", fit_report(data, *s1).dump(2) + "\n");
            if (!s1->fits_usable() || (c == Centering::proposed && !s1->proposed_available())) {
                for (const auto& p : s1->problems) std::cerr << "error: " << p << "\n";
                throw ImproperError(std::string(to_string(c)) + " scores unavailable: improper or unusable step-1 fit");
            }
        }
        const auto traits = load_true_traits(cfg, vars);
        if (c == Centering::true_scores && !traits) throw UsageError("true_scores centering needs --truth");
        scores = center(data, c, {s1 ? &*s1 : nullptr, traits ? &*traits : nullptr});
    }

    CausalEstimates est;
    std::ostringstream diagnostics;
    diagnostics << "key,value\n";
    bool interactions = false;
    if (method == Method::msm) {
        est = estimate_msm(scores, msm_from(cfg["msm"], first));
    } else {
        interactions = cfg["snmm"]["confounder_interactions"];
        GEstimationResult g;
        try {
            g = g_estimate(scores, {{first}, interactions}, nuisance_from(cfg["snmm"]));
        } catch (const ConvergenceError& e) {
            write_text(out / "newton_trace.csv", e.trace());
            throw;
        }
        write_text(out / "newton_trace.csv", g.trace_text());
        est = g.tau;
        for (const auto& v : g.v_weights) {
            diagnostics << "v_" << v.outcome_time << "_" << v.treatment_time << ',' << format_double(v.variance) << '\n';
        }
        for (const auto& b : g.nuisance_b) {
            diagnostics << "model_b_r2_" << b.outcome_time << "_" << b.treatment_time << ',' << format_double(b.r_squared) << '\n';
        }
    }
    for (const auto& [k, v] : est.diagnostics) diagnostics << k << ',' << csv_value(v) << '\n';
    for (const auto& w : est.warnings) {
        diagnostics << "warning,\"" << w << "\"\n";
        std::cerr << "warning: " << w << "\n";
    }
    for (const auto& w : scores.warnings) diagnostics << "score_warning,\"" << w << "\"\n";
    write_text(out / "diagnostics.csv", diagnostics.str());

    std::ostringstream table;
    table << "parameter,estimate,se,method,centering\n";
    for (std::size_t j : table_order(est, interactions)) {
        table << est.names[j] << ',' << csv_value(est.estimates(static_cast<Eigen::Index>(j))) << ','
              << csv_value(est.standard_errors(static_cast<Eigen::Index>(j))) << ',' << to_string(est.method) << ','
              << to_string(est.centering) << '\n';
    }
    for (const auto& a : est.absent) table << a << ",NA,NA," << to_string(est.method) << ',' << to_string(est.centering) << '\n';
    write_text(out / "estimates.csv", table.str());
    write_manifest(out, "estimate", cfg, {{"absent", est.absent}});
    return kOk;
}

// -------------------------------------------------------------------------
// mc
// -------------------------------------------------------------------------

int cmd_mc(const json& cfg) {
    const fs::path out = cfg["out"].get<std::string>();
    ensure_dir(out);
    CellSpec base;
    population_from(cfg["population"], base.sim);
    base.replications = cfg["replications"];
    base.sim.seed = cfg["seed"];
    base.first_treatment = cfg["first_treatment"];
    base.msm = msm_from(cfg["msm"], 0);
    base.nuisance = nuisance_from(cfg["snmm"]);
    base.confounder_interactions = cfg["snmm"]["confounder_interactions"];
    base.fit = fit_from(cfg["fit"]);
    base.methods.clear();
    for (const auto& m : cfg["methods"]) base.methods.push_back(parse_method(m.get<std::string>()));
    base.centerings.clear();
    for (const auto& c : cfg["centerings"]) base.centerings.push_back(parse_centering(c.get<std::string>()));
    if (base.methods.empty() || base.centerings.empty()) throw UsageError("mc needs at least one method and one centering");
    const int workers = cfg["workers"];
    if (workers < 1) throw UsageError("workers must be at least 1");

    const json& grid = cfg["grid"];
    std::vector<CellSpec> cells;
    for (const auto& n : grid["n_persons"])
        for (const auto& k : grid["k_times"])
            for (const auto& phi2 : grid["phi2"])
                for (const auto& sc : grid["scenario"]) {
                    CellSpec cell = base;
                    cell.sim.n_persons = n;
                    cell.sim.k_times = k;
                    cell.sim.phi2 = phi2;
                    cell.sim.scenario = parse_scenario(sc.get<std::string>());
                    cell.sim.validate();
                    cell.window().validate(cell.sim.k_times);
                    cells.push_back(cell);
                }
    if (cells.empty()) throw UsageError("empty Monte Carlo grid");

    std::vector<CellResult> results;
    json cell_log = json::array();
    bool any_failed = false;
    for (const auto& cell : cells) {
        std::cerr << "cell " << cell.label() << " (" << cell.replications << " replications)\n";
        results.push_back(run_cell(cell, workers));
        const CellResult& r = results.back();
        any_failed = any_failed || r.failed;
        cell_log.push_back({{"cell", cell.label()},
                            {"step1_discards", r.discarded_improper},
                            {"failed", r.failed},
                            {"messages", r.messages}});
        // Rewritten after every cell so partial grids survive a later failure.
        const Report report = summarize(results);
        write_text(out / "report.csv", report.csv);
        write_text(out / "report.md", report.markdown);
        write_manifest(out, "mc", cfg, {{"cells", cell_log}});
    }
    if (any_failed) {
        std::cerr << "error: at least one cell discarded more than half of its replications\n";
        return kImproper;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Within-person causal effects from panel data"};
    app.require_subcommand(1);
    std::string config_path;

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic panel with known effects");
    sim->add_option("--config", config_path, "JSON config file");
    int sim_n = 0, sim_k = 0;
    double sim_phi2 = 0.0;
    std::string sim_scenario, sim_out;
    std::uint64_t sim_seed = 0;
    sim->add_option("--n", sim_n, "Number of persons");
    sim->add_option("--k", sim_k, "Index of the last time point (K)");
    sim->add_option("--phi2", sim_phi2, "Trait variance");
    sim->add_option("--scenario", sim_scenario, "clean | measurement_error_10 | measurement_error_20 | "
                                                "timevarying_loadings | quadratic_confounding");
    sim->add_option("--seed", sim_seed, "Master seed");
    sim->add_option("--out", sim_out, "Output directory");

    // scores
    auto* sco = app.add_subcommand("scores", "Fit step-1 measurement models and write within-person scores");
    sco->add_option("--config", config_path, "JSON config file");
    std::string sco_input, sco_truth, sco_out;
    std::vector<std::string> sco_centering;
    bool sco_strict = false;
    sco->add_option("--input", sco_input, "Panel CSV");
    sco->add_option("--centering", sco_centering, "Centering method(s)");
    sco->add_flag("--strict", sco_strict, "Fail (exit 3) on any improper or non-converged fit");
    sco->add_option("--truth", sco_truth, "Truth CSV from simulate (for true_scores)");
    sco->add_option("--out", sco_out, "Output directory");

    // estimate
    auto* est = app.add_subcommand("estimate", "Estimate joint treatment effects by MSM or SNMM");
    est->add_option("--config", config_path, "JSON config file");
    std::string est_input, est_scores, est_method, est_centering, est_truth, est_out;
    int est_first = 0;
    bool est_interactions = false;
    est->add_option("--input", est_input, "Panel CSV (scores are computed first)");
    est->add_option("--scores", est_scores, "Score CSV written by the scores command");
    est->add_option("--method", est_method, "msm | snmm");
    est->add_option("--centering", est_centering, "Centering used with --input");
    est->add_option("--first-treatment", est_first, "First intervened treatment time");
    est->add_flag("--interactions", est_interactions, "SNMM blips modified by every confounder");
    est->add_option("--truth", est_truth, "Truth CSV from simulate (for true_scores)");
    est->add_option("--out", est_out, "Output directory");

    // mc
    auto* mc = app.add_subcommand("mc", "Run a Monte Carlo grid");
    mc->add_option("--config", config_path, "JSON config file");
    std::vector<int> mc_n, mc_k;
    std::vector<double> mc_phi2;
    std::vector<std::string> mc_scenario, mc_methods, mc_centerings;
    int mc_reps = 0, mc_workers = 0;
    std::uint64_t mc_seed = 0;
    std::string mc_out;
    mc->add_option("--n", mc_n, "Grid of person counts");
    mc->add_option("--k", mc_k, "Grid of K");
    mc->add_option("--phi2", mc_phi2, "Grid of trait variances");
    mc->add_option("--scenario", mc_scenario, "Grid of scenarios");
    mc->add_option("--methods", mc_methods, "Methods to run");
    mc->add_option("--centerings", mc_centerings, "Centerings to run");
    mc->add_option("--reps", mc_reps, "Replications per cell");
    mc->add_option("--seed", mc_seed, "Master seed");
    mc->add_option("--workers", mc_workers, "Worker threads");
    mc->add_option("--out", mc_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    auto given = [](CLI::App* a, const char* flag) { return a->count(flag) > 0; };
    try {
        if (*sim) {
            json cfg = resolve(simulate_defaults(), config_path);
            if (given(sim, "--n")) cfg["n_persons"] = sim_n;
            if (given(sim, "--k")) cfg["k_times"] = sim_k;
            if (given(sim, "--phi2")) cfg["phi2"] = sim_phi2;
            if (given(sim, "--scenario")) cfg["scenario"] = sim_scenario;
            if (given(sim, "--seed")) cfg["seed"] = sim_seed;
            if (given(sim, "--out")) cfg["out"] = sim_out;
            return cmd_simulate(cfg);
        }
        if (*sco) {
            json cfg = resolve(scores_defaults(), config_path);
            if (given(sco, "--input")) cfg["input"] = sco_input;
            if (given(sco, "--centering")) cfg["centerings"] = sco_centering;
            if (given(sco, "--strict")) cfg["strict"] = sco_strict;
            if (given(sco, "--truth")) cfg["truth"] = sco_truth;
            if (given(sco, "--out")) cfg["out"] = sco_out;
            return cmd_scores(cfg);
        }
        if (*est) {
            json cfg = resolve(estimate_defaults(), config_path);
            if (given(est, "--input")) cfg["input"] = est_input;
            if (given(est, "--scores")) cfg["scores"] = est_scores;
            if (given(est, "--method")) cfg["method"] = est_method;
            if (given(est, "--centering")) cfg["centering"] = est_centering;
            if (given(est, "--first-treatment")) cfg["first_treatment"] = est_first;
            if (given(est, "--interactions")) cfg["snmm"]["confounder_interactions"] = est_interactions;
            if (given(est, "--truth")) cfg["truth"] = est_truth;
            if (given(est, "--out")) cfg["out"] = est_out;
            return cmd_estimate(cfg);
        }
        if (*mc) {
            json cfg = resolve(mc_defaults(), config_path);
            if (given(mc, "--n")) cfg["grid"]["n_persons"] = mc_n;
            if (given(mc, "--k")) cfg["grid"]["k_times"] = mc_k;
            if (given(mc, "--phi2")) cfg["grid"]["phi2"] = mc_phi2;
            if (given(mc, "--scenario")) cfg["grid"]["scenario"] = mc_scenario;
            if (given(mc, "--methods")) cfg["methods"] = mc_methods;
            if (given(mc, "--centerings")) cfg["centerings"] = mc_centerings;
            if (given(mc, "--reps")) cfg["replications"] = mc_reps;
            if (given(mc, "--seed")) cfg["seed"] = mc_seed;
            if (given(mc, "--workers")) cfg["workers"] = mc_workers;
            if (given(mc, "--out")) cfg["out"] = mc_out;
            return cmd_mc(cfg);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const IdentificationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const ImproperError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kImproper;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNonConvergence;
    } catch (const Error& e) {
        // Singular systems, collinear designs and positivity violations: no estimate.
        std::cerr << "error: " << e.what() << "\n";
        return kNonConvergence;
    } catch (const json::exception& e) {
        std::cerr << "error: bad config value: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
