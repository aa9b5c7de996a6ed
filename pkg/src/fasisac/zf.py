"""Zero-forcing precoding and the low-complexity port-selection schemes.

Three selectors share the ZF precoder: greedy removal on the ZF secrecy rate
(``greedy_removal``) and greedy build-up on the Gram trace inverse, evaluated by
explicit inversion (``gs_tim``) or from singular values (``svd_tim``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ChannelSet
from .metrics import MetricsReport, as_ports, mvdr_filter, radar_sinr_from_gain, rate

# singular-value ratio below which a direction counts as zero
RANK_RTOL = 1e-6


class RankDeficientError(ValueError):
    """The sliced channel has fewer than ``K`` independent columns."""


@dataclass
class ZfSolution:
    selection: np.ndarray
    W_zf: np.ndarray
    trace_inv: float
    report: MetricsReport
    constraint_missed: bool = False
    trace: list = field(default_factory=list)

    @property
    def sum_secrecy(self) -> float:
        return self.report.sum_secrecy


def trace_inverse(H_S: np.ndarray) -> float:
    gram = H_S @ H_S.conj().T
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= RANK_RTOL**2 * ev[-1] or ev[-1] <= 0:
        raise RankDeficientError("Gram matrix is singular")
    return float(np.real(np.trace(np.linalg.inv(gram))))


def svd_trace_inverse(H_S: np.ndarray) -> tuple[int, float]:
    """``(rank, sum_i 1/mu_i^2)`` over the nonzero singular values of ``H_S``."""
    mu = np.linalg.svd(H_S, compute_uv=False)
    if mu.size == 0 or mu[0] == 0:
        return 0, np.inf
    nz = mu[mu > RANK_RTOL * mu[0]]
    return len(nz), float(np.sum(1.0 / nz**2))


def zf_precoder(H_S: np.ndarray) -> tuple[np.ndarray, float]:
    """Unit-power ZF precoder ``H^H (H H^H)^{-1} / sqrt(Tr((H H^H)^{-1}))`` and the trace."""
    K, n = H_S.shape
    if n < K:
        raise RankDeficientError(f"{n} ports cannot zero-force {K} users")
    gram = H_S @ H_S.conj().T
    ev = np.linalg.eigvalsh(gram)
    if ev[0] <= RANK_RTOL**2 * ev[-1] or ev[-1] <= 0:
        raise RankDeficientError("Gram matrix is singular")
    ginv = np.linalg.inv(gram)
    tr = float(np.real(np.trace(ginv)))
    return H_S.conj().T @ ginv / np.sqrt(tr), tr


def water_filling(gains: np.ndarray, power: float) -> np.ndarray:
    """Powers maximizing ``sum log(1 + p_k g_k)`` with ``sum p_k = P``."""
    g = np.asarray(gains, dtype=float)
    order = np.argsort(g)[::-1]
    inv = 1.0 / g[order]
    level = 0.0
    for m in range(len(g), 0, -1):
        level = (power + inv[:m].sum()) / m
        if level > inv[m - 1]:
            break
    return np.maximum(level - 1.0 / g, 0.0)


def zf_water_filling(H_S: np.ndarray, power: float, sigma2) -> np.ndarray:
    """ZF directions with water-filled stream powers; ``||W||_F^2 = P``."""
    W_zf, _ = zf_precoder(H_S)
    norms = np.linalg.norm(W_zf, axis=0)
    D = W_zf / norms
    # |h_k^H d_k|^2 = 1 / ||column k of H^H (H H^H)^{-1}||^2
    gram_inv_diag = np.real(np.diag(np.linalg.inv(H_S @ H_S.conj().T)))
    sigma = np.broadcast_to(np.asarray(sigma2, dtype=float), gram_inv_diag.shape)
    p = water_filling(1.0 / (gram_inv_diag * sigma), power)
    return D * np.sqrt(p)[None, :]


def _zf_report(chan: ChannelSet, idx: np.ndarray, W_zf: np.ndarray, tr: float, power: float,
               w_r: np.ndarray) -> MetricsReport:
    K = chan.K
    gamma = power / (chan.sigma_k2 * tr)
    t = power * np.abs(chan.a_t[idx].conj() @ W_zf) ** 2
    e_t = t / (t.sum() - t + chan.sigma_r2)
    e_u = np.zeros((K, K))
    r, r_e = rate(gamma), rate(e_t)
    return MetricsReport(
        sinr=gamma, rate=r, eve_target_sinr=e_t, eve_user_sinr=e_u, eve_rate=r_e,
        secrecy=np.maximum(0.0, r - r_e),
        radar_sinr=radar_sinr_from_gain(chan, float(t.sum()), w_r),
    )


def zf_metrics(chan: ChannelSet, sel, power: float, w_r: np.ndarray | None = None) -> MetricsReport:
    """Closed-form metrics of ``sqrt(P) W_zf``; internal eavesdroppers are nulled exactly."""
    idx = as_ports(sel, chan.n_ports)
    if w_r is None:
        w_r = mvdr_filter(chan.Rc, chan.sigma_b2, chan.a_r)
    W_zf, tr = zf_precoder(chan.H[:, idx])
    return _zf_report(chan, idx, W_zf, tr, power, w_r)


def zf_solution(chan: ChannelSet, sel, power: float, zeta: float = 0.0,
                w_r: np.ndarray | None = None) -> ZfSolution:
    idx = as_ports(sel, chan.n_ports)
    if w_r is None:
        w_r = mvdr_filter(chan.Rc, chan.sigma_b2, chan.a_r)
    W_zf, tr = zf_precoder(chan.H[:, idx])
    rep = _zf_report(chan, idx, W_zf, tr, power, w_r)
    return ZfSolution(idx, W_zf, tr, rep, constraint_missed=rep.radar_sinr < zeta * (1 - 1e-9))


def _batch_zf_scores(chan: ChannelSet, sets: np.ndarray, power: float, radar_gain: float):
    """Sum secrecy and radar SINR of the ZF precoder on each row of ``sets``.

    Rank-deficient sets get ``-inf`` secrecy and zero radar SINR.
    """
    Hc = np.transpose(chan.H[:, sets], (1, 0, 2))  # (C, K, m)
    gram = Hc @ np.conj(np.transpose(Hc, (0, 2, 1)))
    ev = np.linalg.eigvalsh(gram)
    ok = (ev[:, 0] > RANK_RTOL**2 * ev[:, -1]) & (ev[:, -1] > 0)
    secrecy = np.full(len(sets), -np.inf)
    radar = np.zeros(len(sets))
    if not ok.any():
        return secrecy, radar
    ginv = np.linalg.inv(gram[ok])
    tr = np.real(np.trace(ginv, axis1=1, axis2=2))
    a = chan.a_t[sets[ok]]  # (C', m)
    t = np.abs(np.einsum("cm,ckm,ckj->cj", a.conj(), np.conj(Hc[ok]), ginv)) ** 2
    t *= power / tr[:, None]
    e_t = t / (t.sum(axis=1, keepdims=True) - t + chan.sigma_r2)
    r = np.log2(1 + power / (chan.sigma_k2[None, :] * tr[:, None]))
    secrecy[ok] = np.maximum(0.0, r - np.log2(1 + e_t)).sum(axis=1)
    radar[ok] = radar_gain * t.sum(axis=1)
    return secrecy, radar


def greedy_removal(chan: ChannelSet, n_s: int, zeta: float, power: float,
                   w_r: np.ndarray | None = None) -> ZfSolution:
    """Greedy port removal on the ZF sum secrecy rate under the radar SINR floor.

    Every step drops the port whose removal keeps the most secrecy among the
    removals that keep the radar SINR at or above ``zeta``.  When no removal is
    radar-feasible the best one by secrecy is taken and ``constraint_missed`` set.
    """
    N, K = chan.n_ports, chan.K
    if not K <= n_s <= N:
        raise ValueError(f"need K <= n_s <= N_s, got K={K}, n_s={n_s}, N_s={N}")
    if w_r is None:
        w_r = mvdr_filter(chan.Rc, chan.sigma_b2, chan.a_r)
    gain = radar_sinr_from_gain(chan, 1.0, w_r)
    active = np.arange(N)
    missed = False
    trace = []
    while len(active) > n_s:
        m = len(active)
        sets = np.array([np.delete(active, j) for j in range(m)])
        secrecy, radar = _batch_zf_scores(chan, sets, power, gain)
        feasible = (radar >= zeta * (1 - 1e-9)) & np.isfinite(secrecy)
        if feasible.any():
            j = int(np.argmax(np.where(feasible, secrecy, -np.inf)))
        else:
            missed = True
            j = int(np.argmax(secrecy))
        trace.append({"size": m - 1, "removed": int(active[j]),
                      "sum_secrecy": float(secrecy[j]), "radar_sinr": float(radar[j])})
        active = sets[j]
    sol = zf_solution(chan, active, power, zeta, w_r)
    sol.constraint_missed = sol.constraint_missed or missed
    sol.trace = trace
    return sol


def _tim_greedy(H: np.ndarray, n_s: int, cost_fn) -> np.ndarray:
    N = H.shape[1]
    if not H.shape[0] <= n_s <= N:
        raise ValueError(f"need K <= n_s <= N_s, got K={H.shape[0]}, n_s={n_s}, N_s={N}")
    chosen: list[int] = []
    for _ in range(n_s):
        best, best_key = None, None
        for j in range(N):
            if j in chosen:
                continue
            rank, cost = cost_fn(H[:, chosen + [j]])
            key = (-rank, cost)
            if best_key is None or key < best_key:
                best, best_key = j, key
        chosen.append(best)
    return np.array(chosen)


def _explicit_cost(H_S: np.ndarray) -> tuple[int, float]:
    gram = H_S @ H_S.conj().T
    ev = np.linalg.eigvalsh(gram)
    rank = int(np.sum(ev > RANK_RTOL**2 * ev[-1])) if ev[-1] > 0 else 0
    if rank == gram.shape[0]:
        return rank, float(np.real(np.trace(np.linalg.inv(gram))))
    if rank == 0:
        return 0, np.inf
    pinv = np.linalg.pinv(gram, rcond=RANK_RTOL**2, hermitian=True)
    return rank, float(np.real(np.trace(pinv)))


def gs_tim(H: np.ndarray, n_s: int) -> np.ndarray:
    """Greedy build-up minimizing ``Tr((H_S H_S^H)^{-1})`` by explicit inversion.

    While fewer than ``K`` ports are chosen the Gram is singular; candidates are
    then ranked by rank first and by the pseudo-inverse trace second.
    """
    return _tim_greedy(H, n_s, _explicit_cost)


def svd_tim(H: np.ndarray, n_s: int) -> np.ndarray:
    """Same greedy loop as :func:`gs_tim` with the cost ``sum 1/mu_i^2``."""
    return _tim_greedy(H, n_s, svd_trace_inverse)
