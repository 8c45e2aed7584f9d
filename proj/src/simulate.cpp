#include "wpcausal/simulate.hpp"

#include "wpcausal/errors.hpp"
#include "wpcausal/spd.hpp"

#include <array>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <cmath>
#include <numbers>

namespace wpcausal {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(master ^ (index * 0x9E3779B97F4A7C15ULL));
}

double NormalStream::uniform() {
    // 53 random bits mapped to the open interval (0, 1).
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double NormalStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(angle);
    has_spare_ = true;
    return r * std::cos(angle);
}

std::string_view to_string(Scenario scenario) {
    switch (scenario) {
        case Scenario::clean: return "clean";
        case Scenario::measurement_error_10: return "measurement_error_10";
        case Scenario::measurement_error_20: return "measurement_error_20";
        case Scenario::timevarying_loadings: return "timevarying_loadings";
        case Scenario::quadratic_confounding: return "quadratic_confounding";
    }
    return "unknown";
}

Scenario parse_scenario(std::string_view text) {
    for (Scenario s : {Scenario::clean, Scenario::measurement_error_10, Scenario::measurement_error_20,
                       Scenario::timevarying_loadings, Scenario::quadratic_confounding}) {
        if (to_string(s) == text) return s;
    }
    throw ConfigError("unknown scenario '" + std::string(text) + "'");
}

bool Dynamics::is_default() const {
    const Dynamics d;
    return yy == d.yy && ya == d.ya && yl == d.yl && ay == d.ay && aa == d.aa && al == d.al && ly == d.ly &&
           la == d.la && ll == d.ll && quadratic == d.quadratic;
}

void SimConfig::validate() const {
    if (n_persons < 1) throw ConfigError("n_persons must be positive");
    if (k_times < 2) throw ConfigError("k_times (K) must be at least 2");
    if (phi2 < 0.0 || within_initial_variance < 0.0 || residual_variance < 0.0) {
        throw ConfigError("variances must be nonnegative");
    }
    if (std::abs(trait_correlation) > 1.0) throw ConfigError("trait_correlation must lie in [-1, 1]");
    if (std::abs(within_initial_covariance) > within_initial_variance && within_initial_variance > 0.0) {
        throw ConfigError("within_initial_covariance exceeds the variance");
    }
}

double SimConfig::measurement_error_variance() const {
    switch (scenario) {
        case Scenario::measurement_error_10: return 0.1 * (within_initial_variance + phi2);
        case Scenario::measurement_error_20: return 0.2 * (within_initial_variance + phi2);
        default: return 0.0;
    }
}

double NamedVector::at(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return values(static_cast<Eigen::Index>(j));
    throw ConfigError("no parameter named '" + name + "'");
}

bool NamedVector::contains(const std::string& name) const {
    for (const auto& n : names)
        if (n == name) return true;
    return false;
}

std::vector<VariableSpec> simulated_variables() {
    return {{"Y", Role::outcome}, {"A", Role::treatment}, {"L", Role::confounder}};
}

std::string beta_name(int outcome_time, int treatment_time) {
    return "beta_" + std::to_string(outcome_time) + "_" + std::to_string(treatment_time);
}

namespace {

Eigen::Matrix3d exchangeable(double variance, double covariance) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Constant(covariance);
    m.diagonal().setConstant(variance);
    return m;
}

}  // namespace

SimulatedPanel generate(const SimConfig& config) {
    config.validate();
    const int n = config.n_persons;
    const int t = config.k_times + 1;
    const Dynamics& d = config.dynamics;
    const bool quadratic = config.scenario == Scenario::quadratic_confounding;

    const MatrixXd trait_root = spd_power(exchangeable(config.phi2, config.trait_correlation * config.phi2), 0.5);
    const MatrixXd init_root =
        spd_power(exchangeable(config.within_initial_variance, config.within_initial_covariance), 0.5);
    const double resid_sd = std::sqrt(config.residual_variance);

    std::vector<MatrixXd> within(3, MatrixXd(n, t));
    MatrixXd traits(n, 3);
    NormalStream rng(derive_seed(config.seed, 0));
    MatrixXd& y = within[0];
    MatrixXd& a = within[1];
    MatrixXd& l = within[2];
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
        traits.row(i) = (trait_root * z).transpose();
        z = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
        const Eigen::Vector3d init = init_root * z;
        y(i, 0) = init(0);
        a(i, 0) = init(1);
        l(i, 0) = init(2);
        for (int k = 1; k < t; ++k) {
            const double dl = resid_sd * rng.normal();
            const double dy = resid_sd * rng.normal();
            const double da = resid_sd * rng.normal();
            l(i, k) = d.ly * y(i, k - 1) + d.la * a(i, k - 1) + d.ll * l(i, k - 1) + dl;
            y(i, k) = d.yy * y(i, k - 1) + d.ya * a(i, k - 1) + d.yl * l(i, k - 1) + dy;
            a(i, k) = d.ay * y(i, k) + d.aa * a(i, k - 1) + d.al * l(i, k) + da;
            if (quadratic) a(i, k) += d.quadratic * y(i, k) * y(i, k);
        }
    }

    std::vector<MatrixXd> observed(3);
    for (int v = 0; v < 3; ++v) observed[static_cast<std::size_t>(v)] = within[static_cast<std::size_t>(v)].colwise() + traits.col(v);

    SimulatedPanel clean{PanelDataset(simulated_variables(), std::move(observed)), std::move(within), std::move(traits),
                         true_tau(config.k_times, 0, d)};
    if (config.scenario == Scenario::clean || config.scenario == Scenario::quadratic_confounding) return clean;
    return apply_scenario(clean, config);
}

SimulatedPanel apply_scenario(const SimulatedPanel& clean, const SimConfig& config) {
    const int n = clean.observed.n_persons();
    const int t = clean.observed.n_times();
    const int kk = t - 1;
    std::vector<MatrixXd> observed = clean.observed.all_series();
    switch (config.scenario) {
        case Scenario::clean:
        case Scenario::quadratic_confounding:
            return clean;
        case Scenario::measurement_error_10:
        case Scenario::measurement_error_20: {
            const double sd = std::sqrt(config.measurement_error_variance());
            NormalStream rng(derive_seed(config.seed, 1));
            for (int i = 0; i < n; ++i)
                for (auto& block : observed)
                    for (int k = 0; k < t; ++k) block(i, k) += sd * rng.normal();
            break;
        }
        case Scenario::timevarying_loadings:
            for (int v = 0; v < 3; ++v) {
                auto& block = observed[static_cast<std::size_t>(v)];
                for (int k = 0; k < t; ++k) {
                    VectorXd shift = VectorXd::Zero(n);
                    for (int u = 0; u < 3; ++u) {
                        const double loading = u == v ? 1.0 + 0.5 * k / static_cast<double>(kk) : 0.3;
                        shift += loading * clean.true_traits.col(u);
                    }
                    block.col(k) = clean.true_within[static_cast<std::size_t>(v)].col(k) + shift;
                }
            }
            break;
    }
    return SimulatedPanel{PanelDataset(clean.observed.variables(), std::move(observed)), clean.true_within,
                          clean.true_traits, clean.true_tau};
}

std::vector<double> lag_effects(const Dynamics& d, int max_lag) {
    std::vector<double> out;
    // State of (Y*, L*) after one step from a unit treatment, later treatments fixed.
    double y = d.ya;
    double l = d.la;
    for (int lag = 1; lag <= max_lag; ++lag) {
        out.push_back(y);
        const double y_next = d.yy * y + d.yl * l;
        const double l_next = d.ly * y + d.ll * l;
        y = y_next;
        l = l_next;
    }
    return out;
}

NamedVector true_tau(int k_times, int first_treatment, const Dynamics& dynamics) {
    if (first_treatment < 0 || first_treatment >= k_times) {
        throw ConfigError("intervention window must start in [0, K-1]");
    }
    const auto effects = lag_effects(dynamics, k_times);
    if (dynamics.is_default()) {
        // Joint effects by lag for the default dynamics (lags 1-4).
        static constexpr std::array<double, 4> kTable{0.40, 0.18, 0.09, 0.0486};
        for (std::size_t lag = 0; lag < kTable.size() && lag < effects.size(); ++lag) {
            if (std::abs(effects[lag] - kTable[lag]) > 1e-12) {
                throw Error("path-tracing recursion disagrees with the joint-effect table");
            }
        }
    }
    NamedVector out;
    std::vector<double> values;
    for (int m = first_treatment + 1; m <= k_times; ++m) {
        for (int tt = first_treatment; tt < m; ++tt) {
            out.names.push_back(beta_name(m, tt));
            values.push_back(effects[static_cast<std::size_t>(m - tt - 1)]);
        }
    }
    out.values = Eigen::Map<VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    return out;
}


void write_truth_csv(const std::filesystem::path& path, const SimulatedPanel& panel) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    const auto& vars = panel.observed.variables();
    out << "#truth within\n";
    write_panel_csv(out, vars, panel.true_within);
    out << "#truth traits\n";
    for (std::size_t v = 0; v < vars.size(); ++v) out << (v ? "," : "") << vars[v].name;
    out << '\n';
    for (Eigen::Index i = 0; i < panel.true_traits.rows(); ++i) {
        for (Eigen::Index v = 0; v < panel.true_traits.cols(); ++v)
            out << (v ? "," : "") << format_double(panel.true_traits(i, v));
        out << '\n';
    }
    out << "#truth tau\nparameter,value\n";
    for (std::size_t j = 0; j < panel.true_tau.names.size(); ++j)
        out << panel.true_tau.names[j] << ',' << format_double(panel.true_tau.values(static_cast<Eigen::Index>(j))) << '\n';
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

TruthRecord load_truth_csv(const std::filesystem::path& path, const std::vector<VariableSpec>& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::map<std::string, std::string> sections;
    std::string current, line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("#truth ", 0) == 0) {
            current = line.substr(7);
            sections[current];
            continue;
        }
        if (current.empty()) throw DataError(path.string() + ": content before the first #truth section");
        sections[current] += line + "\n";
    }
    for (const char* name : {"within", "traits", "tau"}) {
        if (!sections.count(name)) throw DataError(path.string() + ": missing '#truth " + name + "' section");
    }

    TruthRecord out;
    std::istringstream within(sections["within"]);
    out.within = read_panel_csv(within, schema, path.string() + " [within]").all_series();

    auto split = [](const std::string& row) {
        std::vector<std::string> cells;
        std::stringstream ss(row);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };
    auto number = [&](const std::string& cell) {
        char* end = nullptr;
        const double x = std::strtod(cell.c_str(), &end);
        if (cell.empty() || *end != '\0') throw DataError(path.string() + ": non-numeric truth value '" + cell + "'");
        return x;
    };

    std::istringstream traits(sections["traits"]);
    std::getline(traits, line);
    const auto header = split(line);
    std::vector<int> column_of(schema.size(), -1);
    for (std::size_t v = 0; v < schema.size(); ++v)
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == schema[v].name) column_of[v] = static_cast<int>(c);
    for (std::size_t v = 0; v < schema.size(); ++v)
        if (column_of[v] < 0) throw DataError(path.string() + ": no trait column for '" + schema[v].name + "'");
    std::vector<std::vector<double>> rows;
    while (std::getline(traits, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) throw DataError(path.string() + ": ragged trait row");
        std::vector<double> row;
        for (std::size_t v = 0; v < schema.size(); ++v) row.push_back(number(cells[static_cast<std::size_t>(column_of[v])]));
        rows.push_back(std::move(row));
    }
    out.traits.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(schema.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t v = 0; v < schema.size(); ++v) out.traits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) = rows[i][v];
    if (out.traits.rows() != out.within.front().rows()) throw DataError(path.string() + ": trait and within row counts differ");

    std::istringstream tau(sections["tau"]);
    std::getline(tau, line);
    std::vector<double> values;
    while (std::getline(tau, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != 2) throw DataError(path.string() + ": tau rows must be parameter,value");
        out.tau.names.push_back(cells[0]);
        values.push_back(number(cells[1]));
    }
    out.tau.values = Eigen::Map<VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    return out;
}

}  // namespace wpcausal
