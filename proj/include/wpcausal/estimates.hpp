#pragma once

#include "wpcausal/panel.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wpcausal {

enum class Method { msm, snmm };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

/// Treatments A*_first..A*_{K-1} are intervened on; earlier treatments are
/// conditioned on. Outcomes Y*_{first+1}..Y*_K carry joint-effect parameters.
struct InterventionWindow {
    int first_treatment = 0;

    void validate(int last_time) const;
};

struct CausalEstimates {
    Method method = Method::msm;
    Centering centering = Centering::none;
    std::vector<std::string> names;
    VectorXd estimates;
    VectorXd standard_errors;
    std::vector<std::string> absent;  // parameters left unidentified by linear dependence
    std::vector<std::pair<std::string, double>> diagnostics;
    std::vector<std::string> warnings;

    std::optional<double> estimate(const std::string& name) const;
    std::optional<double> standard_error(const std::string& name) const;
};

/// Outcome times m in the window whose score Y*_m is an exact linear function
/// of (1, Y*_0..Y*_{m-1}); their joint effects are not identified.
std::vector<int> unidentified_outcome_times(const ScoreSet& scores, const InterventionWindow& window);

}  // namespace wpcausal
