"""Within-person causal effects from panel data (C++ core)."""

from ._wpcausal import (
    ConvergenceError,
    Error,
    PanelDataset,
    estimate,
    fit_measurement,
    load_panel_csv,
    monte_carlo,
    simulate,
    spd_power,
    true_tau,
    weight_matrix,
    within_scores,
    write_panel_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "Error",
    "PanelDataset",
    "estimate",
    "fit_measurement",
    "load_panel_csv",
    "monte_carlo",
    "simulate",
    "spd_power",
    "true_tau",
    "weight_matrix",
    "within_scores",
    "write_panel_csv",
]
