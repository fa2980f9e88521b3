"""Invariance experiments for multiplicative chaos built on random Fourier series."""
__version__ = "0.1.0"

from .noise import NoiseKind, NoiseSpec, parse_spec
from .coupling import VectorSystem, run_coupling, run_coupling_batch
from .fourier import FourierDraw, PiecewiseMeasure, draw_coefficients, prelimit_gmc, series_eval
from .hierarchy import HierTree, build_tree, hierarchical_coupling
from .skorokhod import embed, survival_function

__all__ = [
    "NoiseKind", "NoiseSpec", "parse_spec", "VectorSystem", "run_coupling",
    "run_coupling_batch", "FourierDraw", "PiecewiseMeasure", "draw_coefficients",
    "prelimit_gmc", "series_eval", "HierTree", "build_tree", "hierarchical_coupling",
    "embed", "survival_function",
]
