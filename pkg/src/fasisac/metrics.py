"""SINRs, rates and secrecy rates for a channel realization, port selection and precoder.

The transmit power is carried by the precoder itself: ``W`` is ``n_s x K`` with
``||W||_F^2 <= P`` and no separate ``P`` factor appears in any SINR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ChannelSet


@dataclass(frozen=True)
class PortSelection:
    """Distinct active port indices (0-based), kept in the order given."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise ValueError(f"port indices must be distinct: {idx}")
        if any(i < 0 for i in idx):
            raise ValueError(f"port indices must be nonnegative: {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)

    def selector(self, n_ports: int) -> np.ndarray:
        """The ``N_s x n_s`` activation matrix ``Pi``."""
        return selector(self.array, n_ports)


def as_ports(sel, n_ports: int | None = None) -> np.ndarray:
    idx = sel.array if isinstance(sel, PortSelection) else np.asarray(sel, dtype=int).ravel()
    if len(np.unique(idx)) != len(idx):
        raise ValueError(f"port indices must be distinct: {idx.tolist()}")
    if n_ports is not None and (idx.min(initial=0) < 0 or idx.max(initial=-1) >= n_ports):
        raise ValueError(f"port index out of range for {n_ports} ports: {idx.tolist()}")
    return idx


def selector(sel, n_ports: int) -> np.ndarray:
    idx = as_ports(sel, n_ports)
    Pi = np.zeros((n_ports, len(idx)))
    Pi[idx, np.arange(len(idx))] = 1.0
    return Pi


def _check(H_S: np.ndarray, W: np.ndarray):
    if H_S.shape[1] != W.shape[0]:
        raise ValueError(f"channel has {H_S.shape[1]} active ports but W has {W.shape[0]} rows")


def rate(sinr):
    return np.log2(1.0 + np.asarray(sinr))


# ---------------------------------------------------------------- communication

def user_sinrs(H_S: np.ndarray, W: np.ndarray, sigma2) -> np.ndarray:
    """All ``K`` user SINRs from the sliced channel ``H_S`` (rows ``h_k^H Pi``)."""
    _check(H_S, W)
    Q = np.abs(H_S @ W) ** 2
    sig = np.diag(Q)
    return sig / (Q.sum(axis=1) - sig + sigma2)


def comm_sinr(H: np.ndarray, sel, W: np.ndarray, k: int, sigma_k2: float) -> float:
    idx = as_ports(sel, H.shape[1])
    if not 0 <= k < H.shape[0]:
        raise IndexError(f"user {k} out of range")
    if W.shape[1] != H.shape[0]:
        raise ValueError("W must have one column per user")
    return float(user_sinrs(H[:, idx], W, sigma_k2)[k])


# ---------------------------------------------------------------- radar

def mvdr_filter(Rc: np.ndarray, sigma_b2: float, a_r: np.ndarray) -> np.ndarray:
    R = Rc + sigma_b2 * np.eye(a_r.shape[0])
    x = np.linalg.solve(R, a_r)
    return x / (a_r.conj() @ x)


def radar_sinr_from_gain(chan: ChannelSet, beam_gain: float, w_r: np.ndarray | None = None) -> float:
    """Radar SINR given ``||a_S^H W||^2`` (valid because ``G`` is rank one)."""
    if w_r is None:
        w_r = mvdr_filter(chan.Rc, chan.sigma_b2, chan.a_r)
    num = abs(chan.alpha) ** 2 * abs(w_r.conj() @ chan.a_r) ** 2 * beam_gain
    return float(num / np.real(w_r.conj() @ chan.R_tilde @ w_r))


def radar_sinr(chan: ChannelSet, sel, W: np.ndarray, w_r: np.ndarray | None = None) -> float:
    """``w_r^H G Pi W W^H Pi^H G^H w_r / (w_r^H R~ w_r)`` with unit-variance symbols."""
    idx = as_ports(sel, chan.n_ports)
    if w_r is None:
        w_r = mvdr_filter(chan.Rc, chan.sigma_b2, chan.a_r)
    G_S = chan.G[:, idx]
    _check(G_S, W)
    y = w_r.conj() @ G_S @ W
    return float(np.real(y @ y.conj()) / np.real(w_r.conj() @ chan.R_tilde @ w_r))


def radar_threshold(chan: ChannelSet, zeta: float, w_r: np.ndarray | None = None) -> float:
    """Beam gain ``||a_S^H W||^2`` needed for radar SINR ``zeta``."""
    return zeta / radar_sinr_from_gain(chan, 1.0, w_r) if zeta > 0 else 0.0


# ---------------------------------------------------------------- eavesdroppers

def target_eve_sinrs(a_S: np.ndarray, W: np.ndarray, sigma_r2: float) -> np.ndarray:
    t = np.abs(a_S.conj() @ W) ** 2
    return t / (t.sum() - t + sigma_r2)


def eve_sinr_target(chan: ChannelSet, sel, W: np.ndarray, k: int) -> float:
    idx = as_ports(sel, chan.n_ports)
    _check(chan.H[:, idx], W)
    return float(target_eve_sinrs(chan.a_t[idx], W, chan.sigma_r2)[k])


def user_eve_sinrs(H_S: np.ndarray, W: np.ndarray, sigma_eve2) -> np.ndarray:
    """``E[i, k]``: SINR of user ``i`` eavesdropping user ``k``; the diagonal is 0."""
    _check(H_S, W)
    Q = np.abs(H_S @ W) ** 2
    own = np.diag(Q)
    sigma = np.broadcast_to(np.asarray(sigma_eve2, dtype=float), (Q.shape[0],))
    denom = Q.sum(axis=1, keepdims=True) - Q - own[:, None] + sigma[:, None]
    E = Q / denom
    np.fill_diagonal(E, 0.0)
    return E


def eve_sinr_user(H: np.ndarray, sel, W: np.ndarray, k: int, i: int, sigma_i2: float) -> float:
    if i == k:
        raise ValueError("a user cannot eavesdrop on itself")
    idx = as_ports(sel, H.shape[1])
    return float(user_eve_sinrs(H[:, idx], W, sigma_i2)[i, k])


# ---------------------------------------------------------------- secrecy

@dataclass
class MetricsReport:
    sinr: np.ndarray
    rate: np.ndarray
    eve_target_sinr: np.ndarray
    eve_user_sinr: np.ndarray
    eve_rate: np.ndarray
    secrecy: np.ndarray
    radar_sinr: float

    @property
    def sum_secrecy(self) -> float:
        return float(self.secrecy.sum())

    @property
    def worst_eve_sinr(self) -> np.ndarray:
        if self.eve_user_sinr.size:
            return np.maximum(self.eve_target_sinr, self.eve_user_sinr.max(axis=0))
        return self.eve_target_sinr


def secrecy_report(chan: ChannelSet, sel, W: np.ndarray,
                   w_r: np.ndarray | None = None) -> MetricsReport:
    idx = as_ports(sel, chan.n_ports)
    H_S = chan.H[:, idx]
    _check(H_S, W)
    g = user_sinrs(H_S, W, chan.sigma_k2)
    e_t = target_eve_sinrs(chan.a_t[idx], W, chan.sigma_r2)
    e_u = user_eve_sinrs(H_S, W, chan.sigma_eve2)
    worst = np.maximum(e_t, e_u.max(axis=0)) if e_u.size else e_t
    r, r_e = rate(g), rate(worst)
    return MetricsReport(
        sinr=g, rate=r, eve_target_sinr=e_t, eve_user_sinr=e_u, eve_rate=r_e,
        secrecy=np.maximum(0.0, r - r_e), radar_sinr=radar_sinr(chan, idx, W, w_r),
    )


def rates(chan: ChannelSet, idx: np.ndarray, W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """User rates and worst-case eavesdropper rates (no radar evaluation)."""
    H_S = chan.H[:, idx]
    Q = np.abs(H_S @ W) ** 2
    own = np.diag(Q)
    row = Q.sum(axis=1)
    g = own / (row - own + chan.sigma_k2)
    t = np.abs(chan.a_t[idx].conj() @ W) ** 2
    worst = t / (t.sum() - t + chan.sigma_r2)
    if Q.shape[0] > 1:
        E = Q / (row[:, None] - Q - own[:, None] + chan.sigma_eve2[:, None])
        np.fill_diagonal(E, 0.0)
        worst = np.maximum(worst, E.max(axis=0))
    return np.log2(1 + g), np.log2(1 + worst)


def fp_secrecy(chan: ChannelSet, sel, W: np.ndarray) -> float:
    """Unclamped ``sum_k log2((1 + gamma_k) / (1 + theta_k))``."""
    idx = as_ports(sel, chan.n_ports)
    _check(chan.H[:, idx], W)
    r, r_e = rates(chan, idx, W)
    return float(np.sum(r - r_e))
