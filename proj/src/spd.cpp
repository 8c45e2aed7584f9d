#include "wpcausal/spd.hpp"

#include "wpcausal/errors.hpp"

#include <cmath>
#include <sstream>

namespace wpcausal {

namespace {

double eigen_floor(const Eigen::VectorXd& eigenvalues, double relative_floor) {
    const double top = eigenvalues.cwiseAbs().maxCoeff();
    return relative_floor * (top > 0.0 ? top : 1.0);
}

}  // namespace

double asymmetry(const MatrixXd& c) {
    return (c - c.transpose()).cwiseAbs().maxCoeff();
}

MatrixXd spd_power(const MatrixXd& c, double p, double relative_floor) {
    if (c.rows() != c.cols()) throw ConfigError("spd_power needs a square matrix");
    if (c.size() == 0) return c;
    const MatrixXd sym = 0.5 * (c + c.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw SingularityError("eigendecomposition failed", 0.0);
    Eigen::VectorXd lambda = es.eigenvalues();
    const double floor = eigen_floor(lambda, relative_floor);
    for (Eigen::Index j = 0; j < lambda.size(); ++j) {
        if (p < 0.0) {
            if (lambda(j) <= floor) {
                std::ostringstream msg;
                msg << "matrix is singular for power " << p << ": eigenvalue " << lambda(j)
                    << " is below the floor " << floor;
                throw SingularityError(msg.str(), lambda(j));
            }
            lambda(j) = std::pow(lambda(j), p);
        } else {
            // Tiny negative eigenvalues from round-off are treated as zero.
            lambda(j) = lambda(j) <= 0.0 ? 0.0 : std::pow(lambda(j), p);
        }
    }
    MatrixXd out = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

MatrixXd spd_pseudo_power(const MatrixXd& c, double p, double relative_floor) {
    if (c.rows() != c.cols()) throw ConfigError("spd_pseudo_power needs a square matrix");
    if (c.size() == 0) return c;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (c + c.transpose()));
    if (es.info() != Eigen::Success) throw SingularityError("eigendecomposition failed", 0.0);
    Eigen::VectorXd lambda = es.eigenvalues();
    const double floor = eigen_floor(lambda, relative_floor);
    for (Eigen::Index j = 0; j < lambda.size(); ++j) lambda(j) = lambda(j) <= floor ? 0.0 : std::pow(lambda(j), p);
    MatrixXd out = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

PsdRepair repair_psd(const MatrixXd& c, double relative_floor) {
    if (c.rows() != c.cols()) throw ConfigError("repair_psd needs a square matrix");
    PsdRepair out;
    const MatrixXd sym = 0.5 * (c + c.transpose());
    out.trace = sym.trace();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    Eigen::VectorXd lambda = es.eigenvalues();
    const double floor = eigen_floor(lambda, relative_floor);
    bool clipped = false;
    for (Eigen::Index j = 0; j < lambda.size(); ++j) {
        if (lambda(j) < floor) {
            out.clipped_mass += floor - lambda(j);
            lambda(j) = floor;
            clipped = true;
        }
    }
    if (!clipped) {
        out.matrix = sym;
        return out;
    }
    out.matrix = es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
    out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
    out.warning = out.clipped_fraction() > 0.01;
    return out;
}

}  // namespace wpcausal
