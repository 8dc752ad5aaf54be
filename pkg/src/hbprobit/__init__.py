"""Hierarchical Bayes multinomial probit for household brand choice.

Brand intercepts are split into a tangible part explained by physical
attributes and an intangible remainder.
"""

from .brand_value import choice_probabilities, decompose_chain, intangible_value, tangible_value
from .data_model import (
    BrandAttributeMatrix,
    McmcConfig,
    PanelDataset,
    PriorConfig,
    default_attributes,
    read_attributes,
    read_panel,
    validate_panel,
)
from .posterior import geweke_z, hpd_interval, render_report, significance_table
from .sampler import ChainDraws, run_chain, run_chains
from .synth import GeneratorSpec, generate_panel, recovery_score

__all__ = [
    "BrandAttributeMatrix",
    "ChainDraws",
    "GeneratorSpec",
    "McmcConfig",
    "PanelDataset",
    "PriorConfig",
    "choice_probabilities",
    "decompose_chain",
    "default_attributes",
    "generate_panel",
    "geweke_z",
    "hpd_interval",
    "intangible_value",
    "read_attributes",
    "read_panel",
    "recovery_score",
    "render_report",
    "run_chain",
    "run_chains",
    "significance_table",
    "tangible_value",
    "validate_panel",
]
