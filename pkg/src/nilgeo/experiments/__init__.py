"""Desk-scale experiments on distance gaps, ball volumes and rough isometries."""

from .ballbox import ballbox_check
from .engel import cusp_constant, cusp_lower_bound, engel_gap
from .gap import GapSample, gap_scan, mismatched_structure
from .report import ExperimentReport
from .rough import PairSample, rough_isometry_scan
from .volumes import finsler_linf_volume, heisenberg_ball_volume, heisenberg_volume, hxr_ball_volume, mc_ball_volume

__all__ = [
    "ExperimentReport",
    "GapSample",
    "PairSample",
    "ballbox_check",
    "cusp_constant",
    "cusp_lower_bound",
    "engel_gap",
    "finsler_linf_volume",
    "gap_scan",
    "heisenberg_ball_volume",
    "heisenberg_volume",
    "hxr_ball_volume",
    "mc_ball_volume",
    "mismatched_structure",
    "rough_isometry_scan",
]
