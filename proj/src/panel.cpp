#include "wpcausal/panel.hpp"

#include "wpcausal/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace wpcausal {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::outcome: return "outcome";
        case Role::treatment: return "treatment";
        case Role::confounder: return "confounder";
    }
    return "unknown";
}

Role parse_role(std::string_view text) {
    if (text == "outcome") return Role::outcome;
    if (text == "treatment") return Role::treatment;
    if (text == "confounder") return Role::confounder;
    throw ConfigError("unknown variable role '" + std::string(text) + "'");
}

std::string_view to_string(Centering centering) {
    switch (centering) {
        case Centering::true_scores: return "true_scores";
        case Centering::proposed: return "proposed";
        case Centering::observed_mean: return "observed_mean";
        case Centering::none: return "none";
        case Centering::trait_predictor: return "trait_predictor";
    }
    return "unknown";
}

Centering parse_centering(std::string_view text) {
    for (Centering c : all_centerings()) {
        if (to_string(c) == text) return c;
    }
    throw ConfigError("unknown centering '" + std::string(text) + "'");
}

const std::vector<Centering>& all_centerings() {
    static const std::vector<Centering> kAll{Centering::true_scores, Centering::proposed,
                                             Centering::observed_mean, Centering::none,
                                             Centering::trait_predictor};
    return kAll;
}

void validate_roles(const std::vector<VariableSpec>& variables) {
    std::set<std::string> names;
    int outcomes = 0;
    int treatments = 0;
    for (const auto& spec : variables) {
        if (spec.name.empty()) throw ConfigError("variable with empty name");
        if (!names.insert(spec.name).second) throw ConfigError("duplicate variable name '" + spec.name + "'");
        if (spec.role == Role::outcome) ++outcomes;
        if (spec.role == Role::treatment) ++treatments;
    }
    if (outcomes != 1) throw ConfigError("exactly one outcome variable is required, found " + std::to_string(outcomes));
    if (treatments != 1) throw ConfigError("exactly one treatment variable is required, found " + std::to_string(treatments));
}

PanelDataset::PanelDataset(std::vector<VariableSpec> variables, std::vector<MatrixXd> values,
                           std::vector<std::string> time_labels)
    : variables_(std::move(variables)), values_(std::move(values)), time_labels_(std::move(time_labels)) {
    validate_roles(variables_);
    if (values_.size() != variables_.size()) {
        throw DataError("panel has " + std::to_string(values_.size()) + " value blocks for " +
                        std::to_string(variables_.size()) + " variables");
    }
    n_persons_ = static_cast<int>(values_.front().rows());
    n_times_ = static_cast<int>(values_.front().cols());
    for (std::size_t v = 0; v < values_.size(); ++v) {
        if (values_[v].rows() != n_persons_ || values_[v].cols() != n_times_) {
            throw DataError("variable '" + variables_[v].name + "' has inconsistent shape");
        }
        if (!values_[v].allFinite()) {
            throw DataError("variable '" + variables_[v].name + "' contains missing or non-finite values");
        }
    }
    if (n_times_ < 3) {
        throw IdentificationError("at least three time points (K >= 2) are required, got " + std::to_string(n_times_));
    }
    if (time_labels_.empty()) {
        for (int k = 0; k < n_times_; ++k) time_labels_.push_back(std::to_string(k));
    } else if (static_cast<int>(time_labels_.size()) != n_times_) {
        throw DataError("time label count does not match the number of time points");
    }
    for (int v = 0; v < n_variables(); ++v) {
        switch (variables_[static_cast<std::size_t>(v)].role) {
            case Role::outcome: outcome_ = v; break;
            case Role::treatment: treatment_ = v; break;
            case Role::confounder: confounders_.push_back(v); break;
        }
    }
}

int PanelDataset::variable_index(std::string_view name) const {
    for (int v = 0; v < n_variables(); ++v) {
        if (variables_[static_cast<std::size_t>(v)].name == name) return v;
    }
    throw ConfigError("no variable named '" + std::string(name) + "'");
}

int ScoreSet::index_of(Role role) const {
    for (std::size_t v = 0; v < variables.size(); ++v) {
        if (variables[v].role == role) return static_cast<int>(v);
    }
    throw ConfigError("score set has no variable with role " + std::string(to_string(role)));
}

std::vector<int> ScoreSet::confounder_indices() const {
    std::vector<int> out;
    for (std::size_t v = 0; v < variables.size(); ++v) {
        if (variables[v].role == Role::confounder) out.push_back(static_cast<int>(v));
    }
    return out;
}

// -------------------------------------------------------------------------
// Moments
// -------------------------------------------------------------------------

MatrixXd stack_persons(const std::vector<MatrixXd>& series) {
    if (series.empty()) return {};
    const Eigen::Index n = series.front().rows();
    const Eigen::Index t = series.front().cols();
    MatrixXd out(n, t * static_cast<Eigen::Index>(series.size()));
    for (std::size_t v = 0; v < series.size(); ++v) {
        out.middleCols(static_cast<Eigen::Index>(v) * t, t) = series[v];
    }
    return out;
}

std::vector<MatrixXd> unstack_persons(const MatrixXd& stacked, int n_variables, int n_times) {
    std::vector<MatrixXd> out;
    out.reserve(static_cast<std::size_t>(n_variables));
    for (int v = 0; v < n_variables; ++v) out.emplace_back(stacked.middleCols(v * n_times, n_times));
    return out;
}

StackedMoments stacked_moments(const PanelDataset& data, const std::vector<int>& variables) {
    if (variables.empty()) throw ConfigError("stacked_moments needs at least one variable");
    if (data.n_persons() < 2) throw DataError("stacked_moments needs at least two persons");
    std::vector<MatrixXd> blocks;
    for (int v : variables) blocks.push_back(data.series(v));
    const MatrixXd x = stack_persons(blocks);
    StackedMoments m;
    m.mean = x.colwise().mean().transpose();
    const MatrixXd centered = x.rowwise() - m.mean.transpose();
    m.covariance = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
    m.covariance = 0.5 * (m.covariance + m.covariance.transpose()).eval();
    return m;
}

StackedMoments stacked_moments(const PanelDataset& data) {
    std::vector<int> all(static_cast<std::size_t>(data.n_variables()));
    for (int v = 0; v < data.n_variables(); ++v) all[static_cast<std::size_t>(v)] = v;
    return stacked_moments(data, all);
}

// -------------------------------------------------------------------------
// CSV
// -------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

struct ColumnKey {
    int variable;
    int time;
};

}  // namespace

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

PanelDataset read_panel_csv(std::istream& in, const std::vector<VariableSpec>& schema, const std::string& source_name) {
    validate_roles(schema);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string_view> header;
    std::string header_line;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line.front() == '#') continue;
        header_line = line;
        break;
    }
    if (header_line.empty()) throw DataError(source_name + ": missing header row");
    header = split_commas(header_line);

    std::map<std::string, int> var_index;
    for (std::size_t v = 0; v < schema.size(); ++v) var_index[schema[v].name] = static_cast<int>(v);

    std::vector<ColumnKey> columns;
    std::set<std::string> seen;
    std::vector<int> max_time(schema.size(), -1);
    std::vector<std::set<int>> times(schema.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name(header[c]);
        if (!seen.insert(name).second) throw DataError(source_name + ": duplicate column '" + name + "'");
        const std::size_t us = name.rfind('_');
        if (us == std::string::npos || us + 1 == name.size()) {
            throw DataError(source_name + ": column '" + name + "' is not of the form <var>_<k>");
        }
        const std::string var = name.substr(0, us);
        int k = -1;
        const auto* first = name.data() + us + 1;
        const auto* last = name.data() + name.size();
        auto [ptr, ec] = std::from_chars(first, last, k);
        if (ec != std::errc{} || ptr != last || k < 0) {
            throw DataError(source_name + ": column '" + name + "' has an invalid time suffix");
        }
        auto it = var_index.find(var);
        if (it == var_index.end()) throw DataError(source_name + ": column '" + name + "' does not match any schema variable");
        columns.push_back({it->second, k});
        times[static_cast<std::size_t>(it->second)].insert(k);
        max_time[static_cast<std::size_t>(it->second)] = std::max(max_time[static_cast<std::size_t>(it->second)], k);
    }
    const int last_time = max_time.front();
    for (std::size_t v = 0; v < schema.size(); ++v) {
        if (max_time[v] < 0) throw DataError(source_name + ": no columns for variable '" + schema[v].name + "'");
        if (max_time[v] != last_time || static_cast<int>(times[v].size()) != last_time + 1) {
            throw DataError(source_name + ": variable '" + schema[v].name + "' must have columns _0.._" +
                            std::to_string(last_time));
        }
    }
    if (last_time < 2) {
        throw IdentificationError(source_name + ": at least three time points (K >= 2) are required");
    }
    const int n_times = last_time + 1;

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line.front() == '#') continue;
        const auto cells = split_commas(line);
        if (cells.size() != header.size()) {
            throw DataError(source_name + ": row " + std::to_string(rows.size() + 1) + " (line " +
                            std::to_string(line_no) + ") has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string_view cell = cells[c];
            const std::string where = source_name + ": row " + std::to_string(rows.size() + 1) + ", column '" +
                                      std::string(header[c]) + "'";
            if (cell.empty()) throw DataError(where + " is empty (missing values are not supported)");
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
                throw DataError(where + " is not numeric: '" + std::string(cell) + "'");
            }
            row[c] = value;
        }
        rows.push_back(std::move(row));
    }
    const int n = static_cast<int>(rows.size());
    if (n == 0) throw DataError(source_name + ": no data rows");

    std::vector<MatrixXd> values(schema.size(), MatrixXd(n, n_times));
    for (int i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            values[static_cast<std::size_t>(columns[c].variable)](i, columns[c].time) = rows[static_cast<std::size_t>(i)][c];
        }
    }
    return PanelDataset(schema, std::move(values));
}

PanelDataset load_panel_csv(const std::filesystem::path& path, const std::vector<VariableSpec>& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return read_panel_csv(in, schema, path.string());
}

void write_panel_csv(std::ostream& out, const std::vector<VariableSpec>& variables, const std::vector<MatrixXd>& series) {
    const Eigen::Index n = series.front().rows();
    const Eigen::Index t = series.front().cols();
    bool first = true;
    for (const auto& spec : variables) {
        for (Eigen::Index k = 0; k < t; ++k) {
            out << (first ? "" : ",") << spec.name << '_' << k;
            first = false;
        }
    }
    out << '\n';
    for (Eigen::Index i = 0; i < n; ++i) {
        first = true;
        for (const auto& block : series) {
            for (Eigen::Index k = 0; k < t; ++k) {
                out << (first ? "" : ",") << format_double(block(i, k));
                first = false;
            }
        }
        out << '\n';
    }
}

void write_panel_csv(const std::filesystem::path& path, const PanelDataset& data) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    write_panel_csv(out, data.variables(), data.all_series());
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << "# centering=" << to_string(scores.centering) << '\n';
    for (const auto& w : scores.warnings) out << "# warning=" << w << '\n';
    write_panel_csv(out, scores.variables, scores.within_scores);
    if (!out) throw DataError("write to '" + path.string() + "' failed");
}

ScoreSet load_scores_csv(const std::filesystem::path& path, const std::vector<VariableSpec>& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::string first_line;
    std::getline(in, first_line);
    const std::string prefix = "# centering=";
    if (first_line.rfind(prefix, 0) != 0) {
        throw DataError(path.string() + ": score files must start with '" + prefix + "<name>'");
    }
    ScoreSet scores;
    scores.centering = parse_centering(trim(std::string_view(first_line).substr(prefix.size())));
    const std::string warning = "# warning=";
    std::ostringstream rest;
    for (std::string line; std::getline(in, line);) {
        if (line.rfind(warning, 0) == 0) {
            scores.warnings.push_back(line.substr(warning.size()));
            continue;
        }
        rest << line << '\n' << in.rdbuf();
        break;
    }
    std::istringstream body(rest.str());
    PanelDataset panel = read_panel_csv(body, schema, path.string());
    scores.variables = panel.variables();
    scores.within_scores = panel.all_series();
    scores.trait_scores = MatrixXd::Zero(panel.n_persons(), panel.n_variables());
    scores.source_means = MatrixXd::Zero(panel.n_times(), panel.n_variables());
    return scores;
}

}  // namespace wpcausal
