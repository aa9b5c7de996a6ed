"""Secure ISAC with a fluid antenna system: channels, secrecy metrics, JPPS and ZF baselines."""

from .geometry import ChannelSet, FasGeometry, UserLink, jakes_correlation, steering_vectors
from .jpps import InfeasibleError, JppsResult, SolverOptions, jpps, optimize_precoder, radar_centric
from .metrics import MetricsReport, PortSelection, secrecy_report
from .zf import RankDeficientError, greedy_removal, gs_tim, svd_tim, zf_solution

__version__ = "0.1.0"

__all__ = [
    "ChannelSet", "FasGeometry", "UserLink", "jakes_correlation", "steering_vectors",
    "InfeasibleError", "JppsResult", "SolverOptions", "jpps", "optimize_precoder", "radar_centric",
    "MetricsReport", "PortSelection", "secrecy_report",
    "RankDeficientError", "greedy_removal", "gs_tim", "svd_tim", "zf_solution",
]
