#include "wpcausal/regression.hpp"

#include "wpcausal/errors.hpp"

#include <cmath>

namespace wpcausal {

Design::Design(Eigen::Index n_rows, bool intercept) : n_rows_(n_rows) {
    if (intercept) add("(intercept)", VectorXd::Ones(n_rows));
}

Design& Design::add(std::string name, const VectorXd& column) {
    if (column.size() != n_rows_) throw ConfigError("design column '" + name + "' has the wrong length");
    names_.push_back(std::move(name));
    columns_.push_back(column);
    return *this;
}

int Design::index_of(const std::string& name) const {
    for (std::size_t j = 0; j < names_.size(); ++j)
        if (names_[j] == name) return static_cast<int>(j);
    throw ConfigError("design has no column '" + name + "'");
}

MatrixXd Design::matrix() const {
    MatrixXd x(n_rows_, cols());
    for (std::size_t j = 0; j < columns_.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = columns_[j];
    return x;
}

double LinearFit::coefficient(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return coef(static_cast<Eigen::Index>(j));
    throw ConfigError("fit has no coefficient '" + name + "'");
}

LinearFit least_squares(const Design& design, const VectorXd& y, const VectorXd& weights) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (y.size() != n) throw ConfigError("response length does not match the design");
    if (n <= p) throw IdentificationError("regression has " + std::to_string(n) + " rows for " + std::to_string(p) + " columns");
    const bool weighted = weights.size() > 0;
    MatrixXd x = design.matrix();
    VectorXd z = y;
    if (weighted) {
        const VectorXd root = weights.array().sqrt();
        x = root.asDiagonal() * x;
        z = root.asDiagonal() * z;
    }
    // Column scaling keeps the rank threshold meaningful for mixed-scale columns.
    VectorXd scale = x.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < p; ++j)
        if (scale(j) == 0.0) scale(j) = 1.0;
    const MatrixXd xs = x * scale.cwiseInverse().asDiagonal();
    Eigen::ColPivHouseholderQR<MatrixXd> qr(xs);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        std::vector<std::string> dependent;
        for (Eigen::Index j = qr.rank(); j < p; ++j)
            dependent.push_back(design.names()[static_cast<std::size_t>(qr.colsPermutation().indices()(j))]);
        std::string list;
        for (const auto& d : dependent) list += (list.empty() ? "" : ", ") + d;
        throw CollinearityError("collinear regression design; dependent columns: " + list, dependent);
    }
    LinearFit fit;
    fit.names = design.names();
    fit.coef = scale.cwiseInverse().asDiagonal() * qr.solve(z);
    const MatrixXd raw = design.matrix();
    fit.fitted = raw * fit.coef;
    fit.residuals = y - fit.fitted;
    const VectorXd wres = weighted ? VectorXd(fit.residuals.array() * weights.array().sqrt()) : fit.residuals;
    const double rss = wres.squaredNorm();
    fit.residual_variance = rss / static_cast<double>(n - p);
    const double ybar = weighted ? (weights.dot(y) / weights.sum()) : y.mean();
    const double tss = weighted ? (weights.array() * (y.array() - ybar).square()).sum() : (y.array() - ybar).square().sum();
    fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : 1.0;
    return fit;
}

MatrixXd sandwich_covariance(const Design& design, const LinearFit& fit, const VectorXd& weights) {
    const MatrixXd x = design.matrix();
    const Eigen::Index n = x.rows();
    const VectorXd w = weights.size() > 0 ? weights : VectorXd::Ones(n);
    const MatrixXd bread = (x.transpose() * w.asDiagonal() * x).inverse();
    const VectorXd score_scale = w.array() * fit.residuals.array();
    const MatrixXd xs = score_scale.asDiagonal() * x;
    const MatrixXd meat = xs.transpose() * xs;
    return bread * meat * bread;
}

bool in_column_span(const Design& design, const VectorXd& y, double tolerance) {
    const MatrixXd x = design.matrix();
    const VectorXd coef = x.colPivHouseholderQr().solve(y);
    const double rss = (y - x * coef).squaredNorm();
    const double tss = (y.array() - y.mean()).square().sum();
    if (tss <= 0.0) return true;
    return rss / tss < tolerance;
}

}  // namespace wpcausal
