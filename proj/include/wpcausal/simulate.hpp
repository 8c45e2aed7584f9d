#pragma once

// Synthetic panels with known within-person causal structure.
//
// Within-person scores follow a first-order linear system; at each time the
// confounder L*_k and outcome Y*_k are drawn from lag-1 values, then the
// treatment A*_k from the concurrent Y*_k, L*_k and A*_{k-1}. Observed
// values add correlated stable traits (temporal means are zero).

#include "wpcausal/panel.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace wpcausal {

// -------------------------------------------------------------------------
// Random numbers
// -------------------------------------------------------------------------

/// SplitMix64 finalizer; used to derive independent sub-stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed of sub-stream `index` of `master`: mix64(master ^ (index * golden ratio)).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// mt19937_64 with Box-Muller standard normals built from 53-bit uniforms.
/// Both variates of each pair are used, cosine branch first.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : engine_(seed) {}
    double uniform();  // in (0, 1)
    double normal();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// -------------------------------------------------------------------------
// Configuration
// -------------------------------------------------------------------------

enum class Scenario { clean, measurement_error_10, measurement_error_20, timevarying_loadings, quadratic_confounding };

std::string_view to_string(Scenario scenario);
Scenario parse_scenario(std::string_view text);

/// Lag structure of the within-person system; names read "<target><source>".
struct Dynamics {
    double yy = 0.40, ya = 0.40, yl = 0.10;  // Y*_k on lag-1 Y*, A*, L*
    double ay = 0.20, aa = 0.40, al = 0.30;  // A*_k on concurrent Y*, lag-1 A*, concurrent L*
    double ly = 0.20, la = 0.20, ll = 0.50;  // L*_k on lag-1 Y*, A*, L*
    double quadratic = 0.08;                 // A*_k on Y*_k^2 under quadratic_confounding

    bool is_default() const;
};

struct SimConfig {
    int n_persons = 1000;
    int k_times = 4;  // K; the panel has K + 1 time points
    double phi2 = 10.0;
    double trait_correlation = 0.3;
    double within_initial_variance = 10.0;
    double within_initial_covariance = 3.0;
    double residual_variance = 5.0;
    Scenario scenario = Scenario::clean;
    std::uint64_t seed = 1;
    Dynamics dynamics;

    void validate() const;
    /// Per-cell measurement error variance for the measurement-error scenarios, else 0.
    double measurement_error_variance() const;
};

struct NamedVector {
    std::vector<std::string> names;
    VectorXd values;

    double at(const std::string& name) const;
    bool contains(const std::string& name) const;
};

struct SimulatedPanel {
    PanelDataset observed;
    std::vector<MatrixXd> true_within;  // Y*, A*, L*; N x (K+1) each
    MatrixXd true_traits;               // N x 3
    NamedVector true_tau;
};

/// Variable names and roles of simulated panels: Y outcome, A treatment, L confounder.
std::vector<VariableSpec> simulated_variables();

/// Canonical name of the joint-effect coefficient of A*_t on Y*_m.
std::string beta_name(int outcome_time, int treatment_time);

/// Draws a panel. Scenario perturbations are applied through apply_scenario,
/// except quadratic_confounding which changes the recursion itself.
SimulatedPanel generate(const SimConfig& config);

/// Adds measurement error or time-varying loadings to a clean panel. Uses
/// sub-stream 1 of the seed so the underlying clean draw is unchanged.
SimulatedPanel apply_scenario(const SimulatedPanel& clean, const SimConfig& config);

/// Effects of A*_t on Y*_{t+lag} with later treatments held fixed, by path tracing
/// through the (Y*, L*) subsystem. Index 0 is lag 1.
std::vector<double> lag_effects(const Dynamics& dynamics, int max_lag);

/// Ground truth for beta_{m,t}, first_treatment <= t < m <= K, ordered by m then t.
NamedVector true_tau(int k_times, int first_treatment, const Dynamics& dynamics = {});

// -------------------------------------------------------------------------
// Ground-truth files
// -------------------------------------------------------------------------

struct TruthRecord {
    std::vector<MatrixXd> within;  // per variable, N x (K+1)
    MatrixXd traits;               // N x V
    NamedVector tau;
};

/// Sections `#truth within` (panel layout), `#truth traits` (one column per
/// variable) and `#truth tau` (parameter,value).
void write_truth_csv(const std::filesystem::path& path, const SimulatedPanel& panel);
TruthRecord load_truth_csv(const std::filesystem::path& path, const std::vector<VariableSpec>& schema);

}  // namespace wpcausal
