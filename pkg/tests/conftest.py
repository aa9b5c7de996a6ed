import math

import numpy as np
import pytest

from fasisac.geometry import (
    ChannelSet,
    FasGeometry,
    UserLink,
    jakes_correlation,
    steering_vectors,
    synthesize_user_channel,
)


def random_channel(seed: int, K: int = 4, ns_x: int = 4, ns_y: int = 4, area: float = 1.0,
                   distances=None, gain_db: float = 70.0, target_distance: float = 200.0,
                   theta_deg: float | None = None, clutter: float = 1.0) -> ChannelSet:
    """A seeded channel realization in the default setting (users at 2..35 m, target at 200 m)."""
    rng = np.random.default_rng(seed)
    geom = FasGeometry(ns_x, ns_y, area, area)
    corr = jakes_correlation(geom)
    if distances is None:
        distances = (2.0, 15.0, 25.0, 35.0, 10.0, 20.0)[:K]
    H = np.array([synthesize_user_channel(corr, UserLink(d), rng) for d in distances])
    theta = rng.uniform(-60, 60) if theta_deg is None else theta_deg
    a_t, a_r = steering_vectors(geom, math.radians(theta))
    alpha = 10 ** (gain_db / 20) * target_distance ** -2 * np.exp(2j * np.pi * rng.uniform())
    return ChannelSet(H, a_t, a_r, alpha, clutter * np.eye(geom.nr), 1.0, 1.0, 1.0)


def random_precoder(rng, n: int, K: int, power: float) -> np.ndarray:
    W = rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))
    return math.sqrt(power) * W / np.linalg.norm(W)


@pytest.fixture
def chan():
    return random_channel(7)


ACCEPTANCE: dict = {}


def record(criterion: int, ok: bool, detail: str):
    """Store one acceptance line; the summary hook prints them in criterion order."""
    line = f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
