#pragma once

// Panel containers shared by every estimator.
//
// Stacking convention: whenever the panel is flattened into one vector per
// person, the order is variable-major, time-minor, i.e. index = v * T + k.

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace wpcausal {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Role { outcome, treatment, confounder };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct VariableSpec {
    std::string name;
    Role role;
};

/// Complete-case panel: N persons x (K+1) times x V variables.
class PanelDataset {
public:
    /// `values[v]` is the N x T matrix for variable v. Validates all invariants.
    PanelDataset(std::vector<VariableSpec> variables, std::vector<MatrixXd> values,
                 std::vector<std::string> time_labels = {});

    int n_persons() const noexcept { return n_persons_; }
    int n_times() const noexcept { return n_times_; }
    int n_variables() const noexcept { return static_cast<int>(variables_.size()); }
    /// K, the index of the last time point.
    int last_time() const noexcept { return n_times_ - 1; }

    const std::vector<VariableSpec>& variables() const noexcept { return variables_; }
    const std::vector<std::string>& time_labels() const noexcept { return time_labels_; }

    const MatrixXd& series(int v) const { return values_.at(static_cast<std::size_t>(v)); }
    const std::vector<MatrixXd>& all_series() const noexcept { return values_; }
    double value(int person, int time, int variable) const {
        return values_[static_cast<std::size_t>(variable)](person, time);
    }

    int variable_index(std::string_view name) const;
    int outcome_index() const noexcept { return outcome_; }
    int treatment_index() const noexcept { return treatment_; }
    const std::vector<int>& confounder_indices() const noexcept { return confounders_; }

private:
    std::vector<VariableSpec> variables_;
    std::vector<MatrixXd> values_;
    std::vector<std::string> time_labels_;
    int n_persons_ = 0;
    int n_times_ = 0;
    int outcome_ = -1;
    int treatment_ = -1;
    std::vector<int> confounders_;
};

/// Validates a variable list: unique names, exactly one outcome and one treatment.
void validate_roles(const std::vector<VariableSpec>& variables);

enum class Centering { true_scores, proposed, observed_mean, none, trait_predictor };

std::string_view to_string(Centering centering);
Centering parse_centering(std::string_view text);
const std::vector<Centering>& all_centerings();

/// Within-person scores for every person, time and variable plus the trait
/// scores that were removed to obtain them.
struct ScoreSet {
    std::vector<VariableSpec> variables;
    std::vector<MatrixXd> within_scores;  // per variable, N x T
    MatrixXd trait_scores;                // N x V (zero where not applicable)
    MatrixXd source_means;                // T x V
    Centering centering = Centering::none;
    std::vector<std::string> warnings;

    int n_persons() const { return within_scores.empty() ? 0 : static_cast<int>(within_scores[0].rows()); }
    int n_times() const { return within_scores.empty() ? 0 : static_cast<int>(within_scores[0].cols()); }
    int last_time() const { return n_times() - 1; }
    int index_of(Role role) const;
    std::vector<int> confounder_indices() const;
    const MatrixXd& series(int v) const { return within_scores.at(static_cast<std::size_t>(v)); }
};

struct StackedMoments {
    VectorXd mean;
    MatrixXd covariance;  // divisor N - 1
};

/// Sample mean and unbiased covariance of the stacked vector over `variables`
/// (indices into the dataset, in the order given).
StackedMoments stacked_moments(const PanelDataset& data, const std::vector<int>& variables);
StackedMoments stacked_moments(const PanelDataset& data);

/// Person-major N x (V*T) matrix in the stacked ordering.
MatrixXd stack_persons(const std::vector<MatrixXd>& series);
std::vector<MatrixXd> unstack_persons(const MatrixXd& stacked, int n_variables, int n_times);

// -------------------------------------------------------------------------
// Wide CSV
// -------------------------------------------------------------------------

/// Reads a wide CSV (one row per person, columns `<var>_<k>`, k = 0..K).
/// Variables are ordered as in `schema`; extra columns are rejected.
PanelDataset load_panel_csv(const std::filesystem::path& path, const std::vector<VariableSpec>& schema);
PanelDataset read_panel_csv(std::istream& in, const std::vector<VariableSpec>& schema,
                            const std::string& source_name = "<stream>");

/// Values are written with 17 significant digits so that a reload is bit-exact.
void write_panel_csv(const std::filesystem::path& path, const PanelDataset& data);
void write_panel_csv(std::ostream& out, const std::vector<VariableSpec>& variables,
                     const std::vector<MatrixXd>& series);

/// Score sets use the panel layout preceded by `# centering=<name>` and any warnings.
void write_scores_csv(const std::filesystem::path& path, const ScoreSet& scores);
ScoreSet load_scores_csv(const std::filesystem::path& path, const std::vector<VariableSpec>& schema);

std::string format_double(double value);

}  // namespace wpcausal
