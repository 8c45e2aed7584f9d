#pragma once

// Matrix powers of symmetric positive (semi)definite matrices through the
// symmetric eigendecomposition.

#include <Eigen/Dense>

namespace wpcausal {

using Eigen::MatrixXd;

/// Relative eigenvalue floor: eigenvalues below floor * max eigenvalue count as zero.
inline constexpr double kEigenFloor = 1e-10;

/// C^p for symmetric C. Negative powers require every eigenvalue above the
/// floor, otherwise SingularityError reports the smallest eigenvalue.
MatrixXd spd_power(const MatrixXd& c, double p, double relative_floor = kEigenFloor);

/// Like spd_power, but eigenvalues at or below the floor map to zero for any
/// power (Moore-Penrose style), so singular PSD input is accepted.
MatrixXd spd_pseudo_power(const MatrixXd& c, double p, double relative_floor = kEigenFloor);

inline MatrixXd spd_sqrt(const MatrixXd& c) { return spd_power(c, 0.5); }
inline MatrixXd spd_inv_sqrt(const MatrixXd& c) { return spd_power(c, -0.5); }

struct PsdRepair {
    MatrixXd matrix;
    double clipped_mass = 0.0;  // sum of (floor - lambda) over clipped eigenvalues
    double trace = 0.0;         // trace of the symmetrized input
    bool warning = false;       // clipped mass above 1% of the trace

    double clipped_fraction() const { return trace > 0.0 ? clipped_mass / trace : (clipped_mass > 0.0 ? 1.0 : 0.0); }
};

/// Symmetrizes and lifts eigenvalues below the floor up to the floor.
PsdRepair repair_psd(const MatrixXd& c, double relative_floor = kEigenFloor);

/// Largest absolute asymmetry |c - c^T|.
double asymmetry(const MatrixXd& c);

}  // namespace wpcausal
