#include "wpcausal/estimates.hpp"

#include "wpcausal/errors.hpp"
#include "wpcausal/regression.hpp"

namespace wpcausal {

std::string_view to_string(Method method) {
    return method == Method::msm ? "msm" : "snmm";
}

Method parse_method(std::string_view text) {
    if (text == "msm") return Method::msm;
    if (text == "snmm") return Method::snmm;
    throw ConfigError("unknown method '" + std::string(text) + "'");
}

void InterventionWindow::validate(int last_time) const {
    if (first_treatment < 0 || first_treatment >= last_time) {
        throw IdentificationError("intervention window starts at " + std::to_string(first_treatment) +
                                  " but must lie in [0, K-1] = [0, " + std::to_string(last_time - 1) + "]");
    }
}

std::optional<double> CausalEstimates::estimate(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return estimates(static_cast<Eigen::Index>(j));
    return std::nullopt;
}

std::optional<double> CausalEstimates::standard_error(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return standard_errors(static_cast<Eigen::Index>(j));
    return std::nullopt;
}

std::vector<int> unidentified_outcome_times(const ScoreSet& scores, const InterventionWindow& window) {
    const int y = scores.index_of(Role::outcome);
    const MatrixXd& ys = scores.series(y);
    std::vector<int> out;
    for (int m = window.first_treatment + 1; m <= scores.last_time(); ++m) {
        Design d(ys.rows());
        for (int k = 0; k < m; ++k) d.add("Y_" + std::to_string(k), ys.col(k));
        if (in_column_span(d, ys.col(m))) out.push_back(m);
    }
    return out;
}

}  // namespace wpcausal
