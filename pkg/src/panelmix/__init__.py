"""Semiparametric Bayesian density forecasting for short-T dynamic panels."""

__version__ = "0.1.0"

from panelmix.panel import (
    ConditioningSet,
    DifferencedPanel,
    PanelData,
    PanelSchema,
    build_conditioning_set,
    forward_difference,
    load_panel,
    validate_identification,
)

__all__ = [
    "ConditioningSet",
    "DifferencedPanel",
    "PanelData",
    "PanelSchema",
    "build_conditioning_set",
    "forward_difference",
    "load_panel",
    "validate_identification",
    "__version__",
]
