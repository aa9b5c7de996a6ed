"""Seeded Monte Carlo sweeps over the secure FAS-ISAC system, with CSV/JSON output.

Every trial draws its randomness from ``SeedSequence(seed, spawn_key=(scenario,
trial, entity, ...))``.  The grid point is deliberately not part of the key, so
all points of a sweep see the same channel realizations (common random numbers)
and users are nested across the user-count sweep.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    ChannelSet,
    FasGeometry,
    UserLink,
    grid_shape,
    jakes_correlation,
    port_positions,
    steering_from_positions,
    steering_vectors,
    synthesize_user_channel,
)
from .jpps import InfeasibleError, SolverOptions, jpps, optimize_precoder, radar_centric
from .metrics import as_ports
from .zf import RankDeficientError, greedy_removal, gs_tim, svd_tim, trace_inverse, zf_solution

SCENARIOS = ("snr", "area", "zeta", "ports", "users", "convergence", "beampattern")
SCHEMES = ("jpps", "gs", "gs-tim", "svd-tim", "fpa-jpps", "exhaustive")
MODES = ("secrecy-max", "radar-centric")
ORACLE_LIMIT = 100_000
WORKERS_ENV = "FASISAC_WORKERS"

CSV_HEADER = ("scenario", "param", "scheme", "trials", "mean_secrecy_bps_hz", "std_secrecy",
              "mean_radar_sinr", "miss_frac", "mean_ms")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line or override."""


class OracleGuardError(ValueError):
    def __init__(self, count: int):
        super().__init__(f"exhaustive search over {count} selections exceeds the limit {ORACLE_LIMIT}")
        self.count = count


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class ScenarioConfig:
    # surface and arrays
    n_ports: int = 16
    area: float = 1.0  # side of the square port surface, in wavelengths
    carrier_hz: float = 2.4e9
    nr: int = 10
    n_active: int = 6
    # users
    users: int = 4
    user_distances: tuple = (2.0, 15.0, 25.0, 35.0)
    placement: str = "fixed"  # fixed | disc
    disc_radius: float = 32.0
    min_distance: float = 1.0
    pathloss_exp: float = 2.0
    noise_var: float = 1.0
    # radar and target
    sigma_r2: float = 1.0
    sigma_b2: float = 1.0
    clutter_power: float = 1.0  # R_c = clutter_power * I
    radar_gain_db: float = 75.0
    target_distance: float = 200.0
    target_theta_deg: float = math.nan  # nan: uniform in +-theta_range_deg
    theta_range_deg: float = 60.0
    target_phi_deg: float = 0.0
    zeta: float = 1.0
    # operating point and sweep grids
    snr_db: float = 20.0
    snr_grid: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0)
    area_grid: tuple = (1.0, 2.0)
    zeta_grid: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    zeta_target_distance: float = 50.0
    zeta_snr_db: float = -5.0
    ns_grid: tuple = (10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    users_grid: tuple = (2, 3, 4, 5, 6)
    users_snr_db: float = 5.0
    # beampattern experiment
    beam_ports: int = 9
    beam_active: int = 6
    beam_snr_db: float = 10.0
    beam_theta_deg: float = 20.0
    beam_r_th: float = 0.5
    angle_step_deg: float = 0.5
    # run control
    trials: int = 200
    seed: int = 0
    schemes: tuple = ("jpps", "gs", "gs-tim", "svd-tim", "fpa-jpps")
    mode: str = "secrecy-max"
    r_th: float = 0.0
    max_outer_iters: int = 20
    tol: float = 1e-3
    timing: bool = False

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self) -> list:
        out = []
        for name in ("snr_grid", "area_grid", "zeta_grid", "ns_grid", "users_grid", "schemes"):
            if len(getattr(self, name)) == 0:
                out.append(f"{name} must not be empty")
        if self.trials < 1:
            out.append("trials must be >= 1")
        if self.n_ports < 1 or self.nr < 1:
            out.append("n_ports and nr must be >= 1")
        if self.n_active > min((self.n_ports, *self.ns_grid)):
            out.append("n_active must not exceed n_ports or any ns_grid value")
        if self.users < 1 or self.users > self.n_active:
            out.append("users must be between 1 and n_active")
        if max(self.users_grid, default=1) > self.n_active or min(self.users_grid, default=1) < 1:
            out.append("users_grid values must be between 1 and n_active")
        if self.placement not in ("fixed", "disc"):
            out.append(f"placement must be fixed or disc, got {self.placement!r}")
        if self.placement == "fixed" and len(self.user_distances) < self.users:
            out.append("user_distances needs one entry per user")
        if any(d <= 0 for d in self.user_distances) or self.min_distance <= 0:
            out.append("distances must be positive")
        if self.disc_radius <= self.min_distance:
            out.append("disc_radius must exceed min_distance")
        if self.area <= 0 or any(a <= 0 for a in self.area_grid):
            out.append("areas must be positive")
        if min(self.noise_var, self.sigma_r2, self.sigma_b2, self.carrier_hz, self.pathloss_exp) <= 0:
            out.append("noise variances, carrier and path-loss exponent must be positive")
        if self.clutter_power < 0:
            out.append("clutter_power must be nonnegative")
        if self.zeta < 0 or any(z < 0 for z in self.zeta_grid) or self.r_th < 0 or self.beam_r_th < 0:
            out.append("zeta and r_th values must be nonnegative")
        if self.target_distance <= 0 or self.zeta_target_distance <= 0:
            out.append("target distances must be positive")
        if self.beam_active > self.beam_ports or self.users > self.beam_active:
            out.append("beam_active must lie between users and beam_ports")
        if self.angle_step_deg <= 0:
            out.append("angle_step_deg must be positive")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            out.append(f"unknown schemes {unknown}; choose from {list(SCHEMES)}")
        if self.mode not in MODES:
            out.append(f"mode must be one of {list(MODES)}")
        if self.max_outer_iters < 1 or self.tol <= 0:
            out.append("max_outer_iters must be >= 1 and tol positive")
        return out

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    def solver_options(self, zeta: float | None = None) -> SolverOptions:
        return SolverOptions(max_outer_iters=self.max_outer_iters, tol=self.tol,
                             zeta=self.zeta if zeta is None else zeta, r_th=self.r_th)


PROFILES = {"paper-default": ScenarioConfig()}


def _parse_value(name: str, text: str, current):
    text = text.strip()
    if isinstance(current, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(current, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if name == "schemes":
            return tuple(items)
        kind = int if current and isinstance(current[0], int) else float
        return tuple(kind(t) for t in items)
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    return text


def apply_overrides(cfg: ScenarioConfig, pairs, source: str = "--set") -> ScenarioConfig:
    """Apply ``(label, key, value)`` triples; errors name the label."""
    known = {f.name: f for f in fields(ScenarioConfig)}
    changes = {}
    for label, key, value in pairs:
        if key not in known:
            raise ConfigError(f"{source}{label}: unknown key {key!r}")
        try:
            changes[key] = _parse_value(key, value, getattr(cfg, key))
        except ValueError as exc:
            raise ConfigError(f"{source}{label}: bad value for {key}: {exc}") from None
    try:
        return replace(cfg, **changes)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def parse_config(text: str, base: ScenarioConfig | None = None, source: str = "config") -> ScenarioConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment.  List values are comma separated."""
    pairs = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        pairs.append((f":{n}", key.strip(), value))
    return apply_overrides(base or PROFILES["paper-default"], pairs, source)


def parse_set(items, cfg: ScenarioConfig) -> ScenarioConfig:
    pairs = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, value = item.split("=", 1)
        pairs.append((f" {item!r}", key.strip(), value))
    return apply_overrides(cfg, pairs)


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- trials

@dataclass(frozen=True)
class TrialPoint:
    """Everything that varies along a sweep."""

    n_ports: int
    area: float
    users: int
    snr_db: float
    zeta: float
    target_distance: float
    n_active: int
    target_theta_deg: float = math.nan


@lru_cache(maxsize=64)
def _correlation(geom: FasGeometry):
    return jakes_correlation(geom)


def make_geometry(cfg: ScenarioConfig, n_ports: int, area: float) -> FasGeometry:
    nx, ny = grid_shape(n_ports)
    return FasGeometry(nx, ny, area, area, wavelength=cfg.wavelength, nr=cfg.nr)


def _stream(cfg: ScenarioConfig, scenario: int, trial: int, *entity) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(scenario, trial, *entity)))


def user_distance(cfg: ScenarioConfig, scenario: int, trial: int, k: int) -> float:
    if cfg.placement == "fixed":
        return float(cfg.user_distances[k])
    r = cfg.disc_radius * math.sqrt(_stream(cfg, scenario, trial, 2, k).uniform())
    return max(r, cfg.min_distance)


def make_channel(cfg: ScenarioConfig, point: TrialPoint, scenario: int, trial: int):
    """Channel realization and geometry of one trial at one grid point."""
    geom = make_geometry(cfg, point.n_ports, point.area)
    corr = _correlation(geom)
    H = np.array([
        synthesize_user_channel(
            corr, UserLink(user_distance(cfg, scenario, trial, k), cfg.pathloss_exp, cfg.noise_var),
            _stream(cfg, scenario, trial, 1, k))
        for k in range(point.users)
    ])
    rng = _stream(cfg, scenario, trial, 0)
    theta_draw = rng.uniform(-cfg.theta_range_deg, cfg.theta_range_deg)
    phase = rng.uniform(0.0, 2 * math.pi)
    theta = point.target_theta_deg if not math.isnan(point.target_theta_deg) else theta_draw
    a_t, a_r = steering_vectors(geom, math.radians(theta), math.radians(cfg.target_phi_deg))
    amp = 10 ** (cfg.radar_gain_db / 20) * point.target_distance ** (-cfg.pathloss_exp)
    chan = ChannelSet(H, a_t, a_r, amp * np.exp(1j * phase), cfg.clutter_power * np.eye(cfg.nr),
                      cfg.sigma_b2, cfg.noise_var, cfg.sigma_r2)
    return chan, geom


def transmit_power(cfg: ScenarioConfig, snr_db: float) -> float:
    return 10 ** (snr_db / 10) * cfg.noise_var


# ---------------------------------------------------------------- baselines and oracle

def fpa_indices(n_ports: int, n_active: int) -> np.ndarray:
    """Evenly spaced fixed ports: ``round(linspace(0, N_s - 1, n_s))``."""
    if not 1 <= n_active <= n_ports:
        raise ValueError(f"need 1 <= n_s <= N_s, got n_s={n_active}, N_s={n_ports}")
    return np.round(np.linspace(0, n_ports - 1, n_active)).astype(int)


def fpa_baseline(chan: ChannelSet, n_active: int, power: float, opts: SolverOptions,
                 mode: str = "secrecy-max"):
    """The JPPS precoder on the fixed evenly spaced ports (no reselection)."""
    idx = fpa_indices(chan.n_ports, n_active)
    if mode == "radar-centric":
        return radar_centric(chan, n_active, power, opts, selection=idx)
    return optimize_precoder(chan, idx, power, opts)


@dataclass
class OracleResult:
    selection: np.ndarray
    value: float
    feasible: bool
    evaluated: int


def exhaustive_oracle(chan: ChannelSet, n_active: int, objective: str, power: float = 1.0,
                      opts: SolverOptions | None = None, scores: np.ndarray | None = None,
                      limit: int = ORACLE_LIMIT) -> OracleResult:
    """Best selection over all ``C(N_s, n_s)`` subsets for one objective.

    ``zf-secrecy`` and ``fp-sca`` are maximized among radar-feasible subsets (the
    best infeasible one is returned, flagged, when none is feasible);
    ``trace-inverse`` is minimized over full-rank subsets; ``gamma-knapsack``
    maximizes the summed port scores ``scores``.
    """
    N = chan.n_ports
    count = math.comb(N, n_active)
    if count > limit:
        raise OracleGuardError(count)
    opts = opts or SolverOptions()
    best = None  # (feasible, value, selection)
    for combo in itertools.combinations(range(N), n_active):
        idx = np.array(combo)
        if objective == "trace-inverse":
            try:
                val, ok = -trace_inverse(chan.H[:, idx]), True
            except RankDeficientError:
                continue
        elif objective == "gamma-knapsack":
            if scores is None:
                raise ValueError("gamma-knapsack needs port scores")
            val, ok = float(np.sum(scores[idx])), True
        elif objective == "zf-secrecy":
            try:
                sol = zf_solution(chan, idx, power, opts.zeta)
            except RankDeficientError:
                continue
            val, ok = sol.sum_secrecy, not sol.constraint_missed
        elif objective == "fp-sca":
            try:
                res = optimize_precoder(chan, idx, power, opts)
            except InfeasibleError:
                continue
            val, ok = res.sum_secrecy, not res.constraint_missed
        else:
            raise ValueError(f"unknown oracle objective {objective!r}")
        key = (ok, val)
        if best is None or key > best[:2]:
            best = (ok, val, idx)
    if best is None:
        raise InfeasibleError("no admissible selection")
    value = -best[1] if objective == "trace-inverse" else best[1]
    return OracleResult(best[2], value, best[0], count)


# ---------------------------------------------------------------- beampattern

def angle_grid(step_deg: float) -> np.ndarray:
    n = int(round(180.0 / step_deg))
    return np.linspace(-90.0, 90.0, n + 1)


def beam_gains(geom: FasGeometry, sel, W: np.ndarray, angles_deg: np.ndarray,
               phi_deg: float = 0.0) -> np.ndarray:
    """Raw transmit gain ``||a(theta)^H Pi W||^2`` over the angle grid."""
    pos = port_positions(geom)[as_ports(sel, geom.n_ports)]
    out = np.empty(len(angles_deg))
    for i, th in enumerate(angles_deg):
        a = steering_from_positions(pos, math.radians(th), math.radians(phi_deg), geom.wavelength)
        out[i] = float(np.sum(np.abs(a.conj() @ W) ** 2))
    return out


def beampattern(geom: FasGeometry, sel, W: np.ndarray, angles_deg: np.ndarray,
                phi_deg: float = 0.0) -> list:
    """``(angle, gain dB)`` pairs normalized to a 0 dB peak."""
    g = beam_gains(geom, sel, W, angles_deg, phi_deg)
    peak = g.max()
    db = 10 * np.log10(np.maximum(g, 1e-300) / peak) if peak > 0 else np.zeros_like(g)
    return list(zip(angles_deg.tolist(), db.tolist()))


@dataclass
class BeamTrial:
    trial: int
    fas_peak_deg: float
    fas_peak_gain: float
    fpa_peak_deg: float
    fpa_peak_gain: float
    fas_db: np.ndarray
    fpa_db: np.ndarray
    fas_secrecy: float
    fpa_secrecy: float
    fas_radar: float
    fpa_radar: float


def beam_trial(cfg: ScenarioConfig, trial: int, scenario: int | None = None) -> BeamTrial:
    """Radar-centric FAS and FPA solutions on one paired seed at the beampattern settings."""
    scenario = SCENARIOS.index("beampattern") if scenario is None else scenario
    point = TrialPoint(cfg.beam_ports, cfg.area, cfg.users, cfg.beam_snr_db, 0.0,
                       cfg.target_distance, cfg.beam_active, cfg.beam_theta_deg)
    chan, geom = make_channel(cfg, point, scenario, trial)
    P = transmit_power(cfg, cfg.beam_snr_db)
    opts = replace(cfg.solver_options(0.0), r_th=cfg.beam_r_th)
    angles = angle_grid(cfg.angle_step_deg)
    out = {}
    for name, runner in (("fas", lambda: radar_centric(chan, cfg.beam_active, P, opts)),
                         ("fpa", lambda: fpa_baseline(chan, cfg.beam_active, P, opts, "radar-centric"))):
        res = runner()
        g = beam_gains(geom, res.selection, res.W, angles, cfg.target_phi_deg)
        i = int(np.argmax(g))
        out[name] = (float(angles[i]), float(g[i]), 10 * np.log10(np.maximum(g, 1e-300) / g[i]),
                     res.sum_secrecy, res.report.radar_sinr)
    f, p = out["fas"], out["fpa"]
    return BeamTrial(trial, f[0], f[1], p[0], p[1], f[2], p[2], f[3], p[3], f[4], p[4])


# ---------------------------------------------------------------- running schemes

@dataclass
class SchemeOutcome:
    secrecy: float
    radar_sinr: float
    missed: bool
    ms: float
    iterations: int = 0
    trace: list = field(default_factory=list)


def run_scheme(name: str, chan: ChannelSet, cfg: ScenarioConfig, point: TrialPoint) -> SchemeOutcome:
    P = transmit_power(cfg, point.snr_db)
    opts = cfg.solver_options(point.zeta)
    n_s = point.n_active
    t0 = time.perf_counter()
    try:
        if name == "jpps":
            if cfg.mode == "radar-centric":
                res = radar_centric(chan, n_s, P, opts)
            else:
                res = jpps(chan, n_s, P, opts)
            out = SchemeOutcome(res.sum_secrecy, res.report.radar_sinr, res.constraint_missed, 0.0,
                                res.iterations, res.trace)
        elif name == "fpa-jpps":
            res = fpa_baseline(chan, n_s, P, opts, cfg.mode)
            out = SchemeOutcome(res.sum_secrecy, res.report.radar_sinr, res.constraint_missed, 0.0,
                                res.iterations, res.trace)
        elif name == "gs":
            sol = greedy_removal(chan, n_s, point.zeta, P)
            out = SchemeOutcome(sol.sum_secrecy, sol.report.radar_sinr, sol.constraint_missed, 0.0,
                                len(sol.trace), sol.trace)
        elif name in ("gs-tim", "svd-tim"):
            idx = (gs_tim if name == "gs-tim" else svd_tim)(chan.H, n_s)
            sol = zf_solution(chan, idx, P, point.zeta)
            out = SchemeOutcome(sol.sum_secrecy, sol.report.radar_sinr, sol.constraint_missed, 0.0, n_s)
        elif name == "exhaustive":
            orc = exhaustive_oracle(chan, n_s, "fp-sca", P, opts)
            res = optimize_precoder(chan, orc.selection, P, opts)
            out = SchemeOutcome(res.sum_secrecy, res.report.radar_sinr, not orc.feasible, 0.0)
        else:
            raise ValueError(f"unknown scheme {name!r}")
    except (InfeasibleError, RankDeficientError):
        out = SchemeOutcome(0.0, 0.0, True, 0.0)
    out.ms = (time.perf_counter() - t0) * 1e3 if cfg.timing else math.nan
    return out


# ---------------------------------------------------------------- sweeps

@dataclass(frozen=True)
class ResultRow:
    scenario: str
    param: str
    scheme: str
    trials: int
    mean_secrecy: float
    std_secrecy: float
    mean_radar_sinr: float
    miss_frac: float
    mean_ms: float

    def csv_fields(self) -> list:
        f = _fmt
        return [self.scenario, self.param, self.scheme, str(self.trials), f(self.mean_secrecy),
                f(self.std_secrecy), f(self.mean_radar_sinr), f(self.miss_frac), f(self.mean_ms)]


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _param(x) -> str:
    return f"{x:g}" if isinstance(x, (int, float)) else str(x)


def sweep_points(cfg: ScenarioConfig, scenario: str) -> list:
    """``(param label, TrialPoint)`` for each grid point of a scenario."""
    base = TrialPoint(cfg.n_ports, cfg.area, cfg.users, cfg.snr_db, cfg.zeta, cfg.target_distance,
                      cfg.n_active, cfg.target_theta_deg)
    if scenario == "snr":
        return [(_param(s), replace(base, snr_db=s)) for s in cfg.snr_grid]
    if scenario == "area":
        return [(f"area={a:g};snr_db={s:g}", replace(base, area=a, snr_db=s))
                for a in cfg.area_grid for s in cfg.snr_grid]
    if scenario == "zeta":
        return [(_param(z), replace(base, zeta=z, snr_db=cfg.zeta_snr_db,
                                    target_distance=cfg.zeta_target_distance)) for z in cfg.zeta_grid]
    if scenario == "ports":
        return [(_param(n), replace(base, n_ports=n)) for n in cfg.ns_grid]
    if scenario == "users":
        return [(_param(k), replace(base, users=k, snr_db=cfg.users_snr_db)) for k in cfg.users_grid]
    if scenario == "convergence":
        return [("0", base)]
    raise ConfigError(f"unknown scenario {scenario!r}; choose from {list(SCENARIOS)}")


def _scenario_config(cfg: ScenarioConfig, scenario: str) -> ScenarioConfig:
    if scenario == "users" and cfg.placement == "fixed":
        return replace(cfg, placement="disc")
    return cfg


def _run_item(args):
    cfg, scenario, p_idx, point, trial, schemes = args
    chan, _ = make_channel(cfg, point, SCENARIOS.index(scenario), trial)
    return p_idx, trial, [run_scheme(s, chan, cfg, point) for s in schemes]


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _execute(items, workers: int):
    if workers <= 1 or len(items) <= 1:
        results = [_run_item(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_item, items, chunksize=max(1, len(items) // (8 * workers))))
    return sorted(results, key=lambda r: (r[0], r[1]))


def collect(cfg: ScenarioConfig, scenario: str, workers: int | None = None):
    """Per-trial outcomes: ``{(point index, trial): [SchemeOutcome per scheme]}`` and the points."""
    cfg = _scenario_config(cfg, scenario)
    points = sweep_points(cfg, scenario)
    schemes = tuple(cfg.schemes)
    items = [(cfg, scenario, i, pt, t, schemes)
             for i, (_, pt) in enumerate(points) for t in range(cfg.trials)]
    done = _execute(items, worker_count() if workers is None else workers)
    return points, schemes, {(p, t): outs for p, t, outs in done}


def _aggregate(scenario: str, param: str, scheme: str, outs: list) -> ResultRow:
    sec = np.array([o.secrecy for o in outs])
    std = float(np.std(sec, ddof=1)) if len(sec) > 1 else 0.0
    return ResultRow(scenario, param, scheme, len(outs), float(sec.mean()), std,
                     float(np.mean([o.radar_sinr for o in outs])),
                     float(np.mean([o.missed for o in outs])),
                     float(np.mean([o.ms for o in outs])))


def run_sweep(cfg: ScenarioConfig, scenario: str, workers: int | None = None) -> list:
    """Aggregated rows for one scenario, in grid order then scheme order."""
    if scenario == "beampattern":
        return beam_rows(cfg, workers)[0]
    if scenario == "convergence":
        return convergence_rows(cfg, workers)[0]
    points, schemes, outcomes = collect(cfg, scenario, workers)
    rows = []
    for i, (label, _) in enumerate(points):
        for j, s in enumerate(schemes):
            rows.append(_aggregate(scenario, label, s, [outcomes[(i, t)][j] for t in range(cfg.trials)]))
    return rows


def _trace_values(outcome: SchemeOutcome, scheme: str) -> list:
    if scheme in ("jpps", "fpa-jpps"):
        return [t["sum_secrecy"] for t in outcome.trace if "sum_secrecy" in t]
    if scheme == "gs":
        return [t["sum_secrecy"] for t in outcome.trace]
    return []


@dataclass
class ConvergenceSummary:
    iterations: dict  # scheme -> list of per-trial iteration counts
    curves: dict  # scheme -> mean secrecy per iteration (final value held)

    def median_iterations(self, scheme: str) -> float:
        return float(np.median(self.iterations[scheme]))


def convergence_rows(cfg: ScenarioConfig, workers: int | None = None):
    """Mean secrecy versus iteration for the iterative schemes, plus iteration counts."""
    schemes = tuple(s for s in cfg.schemes if s in ("jpps", "fpa-jpps", "gs")) or ("jpps", "gs")
    cfg = replace(cfg, schemes=schemes)
    points, schemes, outcomes = collect(cfg, "convergence", workers)
    iters, curves, rows = {}, {}, []
    for j, s in enumerate(schemes):
        traces = [_trace_values(outcomes[(0, t)][j], s) for t in range(cfg.trials)]
        iters[s] = [outcomes[(0, t)][j].iterations for t in range(cfg.trials)]
        length = max((len(tr) for tr in traces), default=0)
        padded = np.array([tr + [tr[-1]] * (length - len(tr)) if tr else [0.0] * length for tr in traces])
        curves[s] = padded.mean(axis=0) if length else np.zeros(0)
        for it in range(length):
            col = padded[:, it]
            std = float(np.std(col, ddof=1)) if len(col) > 1 else 0.0
            rows.append(ResultRow("convergence", str(it + 1), s, cfg.trials, float(col.mean()), std,
                                  math.nan, 0.0, math.nan))
    return rows, ConvergenceSummary(iters, curves)


def _beam_item(args):
    cfg, trial = args
    return beam_trial(cfg, trial)


def beam_trials(cfg: ScenarioConfig, workers: int | None = None) -> list:
    items = [(cfg, t) for t in range(cfg.trials)]
    workers = worker_count() if workers is None else workers
    if workers <= 1:
        out = [_beam_item(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_beam_item, items))
    return sorted(out, key=lambda b: b.trial)


def beam_rows(cfg: ScenarioConfig, workers: int | None = None):
    """Summary rows (param = target angle) and the mean normalized pattern per scheme."""
    trials = beam_trials(cfg, workers)
    rows = []
    patterns = {}
    for name in ("fas", "fpa"):
        sec = np.array([getattr(b, f"{name}_secrecy") for b in trials])
        rad = np.array([getattr(b, f"{name}_radar") for b in trials])
        std = float(np.std(sec, ddof=1)) if len(sec) > 1 else 0.0
        rows.append(ResultRow("beampattern", _param(cfg.beam_theta_deg), f"radar-centric-{name}",
                              len(trials), float(sec.mean()), std, float(rad.mean()), 0.0, math.nan))
        patterns[name] = np.mean([getattr(b, f"{name}_db") for b in trials], axis=0)
    return rows, {"angles_deg": angle_grid(cfg.angle_step_deg), **patterns, "trials": trials}


# ---------------------------------------------------------------- output

def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def rows_to_json(rows, extra: dict | None = None) -> str:
    def clean(x):
        return None if isinstance(x, float) and math.isnan(x) else x

    body = {"rows": [{k: clean(v) for k, v in asdict(r).items()} for r in rows]}
    if extra:
        body.update(extra)
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def pattern_csv(angles: np.ndarray, patterns: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scheme", "angle_deg", "mean_gain_db"))
    for name in ("fas", "fpa"):
        for a, g in zip(angles, patterns[name]):
            w.writerow((name, _fmt(float(a)), _fmt(float(g))))
    return buf.getvalue()
