"""Joint precoding and port selection by fractional programming and SCA.

Shapes used throughout: ``H`` is ``K x N_s`` with rows ``h_k^H``, a selection is
an integer array of ``n_s`` port indices and ``W`` is ``n_s x K`` with the power
budget carried inside it (``||W||_F^2 <= P``).

An eavesdropper channel is stored the same way as a user channel, as the row
``g_k^H`` (the target's row is ``a_t^H``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .geometry import ChannelSet
from .zf import RankDeficientError, zf_water_filling
from .metrics import (
    as_ports,
    fp_secrecy,
    mvdr_filter,
    radar_sinr,
    radar_threshold,
    secrecy_report,
    target_eve_sinrs,
    user_eve_sinrs,
    user_sinrs,
)

TARGET = -1  # eavesdropper tag of the radar target


class InfeasibleError(RuntimeError):
    """The radar (or secrecy) requirement cannot be met within the power budget."""

    def __init__(self, message, required=None, achievable=None):
        super().__init__(message)
        self.required = required
        self.achievable = achievable


@dataclass
class SolverOptions:
    max_outer_iters: int = 20
    max_sca_iters: int = 200
    tol: float = 1e-3  # on ||W_new - W_old||_F^2 / P
    bisection_tol: float = 1e-10
    zeta: float = 1.0
    r_th: float = 0.0
    reselect: bool = True
    random_init: bool = False
    swap_width: int = 3  # Gamma-ranked ports per side tried as single swaps
    fp_iters: int = 5  # auxiliary-update rounds per outer iteration
    refine_top: int = 1  # reselection candidates refined by a full precoder step
    polish_top: int = 4  # single-swap neighbours fully optimized per polishing pass (0: off)
    polish_full: int = 16  # neighbourhoods up to this size are optimized in full

    def __post_init__(self):
        if self.tol <= 0 or self.bisection_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.swap_width < 0 or self.fp_iters < 1 or self.refine_top < 1 or min(self.polish_top, self.polish_full) < 0:
            raise ValueError("swap_width, polish_top must be nonnegative; fp_iters, refine_top positive")
        if self.max_outer_iters < 1 or self.max_sca_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.zeta < 0 or self.r_th < 0:
            raise ValueError("zeta and r_th must be nonnegative")


def _inner(X: np.ndarray, Y: np.ndarray) -> float:
    """``Re Tr(X^H Y)``."""
    return float(np.real(np.vdot(X, Y)))


# ---------------------------------------------------------------- eavesdroppers

@dataclass(frozen=True)
class EveChoice:
    tag: int  # TARGET or the eavesdropping user's index
    row: np.ndarray  # g_k^H restricted to the selected ports
    noise: float
    theta: float


def _eve_rows(chan: ChannelSet, idx: np.ndarray, tags) -> np.ndarray:
    return np.array([chan.a_t[idx].conj() if t == TARGET else chan.H[t, idx] for t in tags])


def _worst_tags(chan: ChannelSet, idx: np.ndarray, W: np.ndarray):
    """Per-user worst eavesdropper tag and SINR; the target wins ties, then the lowest index."""
    e_t = target_eve_sinrs(chan.a_t[idx], W, chan.sigma_r2)
    e_u = user_eve_sinrs(chan.H[:, idx], W, chan.sigma_eve2)
    tags, theta = [], np.empty(chan.K)
    for k in range(chan.K):
        best_tag, best = TARGET, e_t[k]
        for i in range(chan.K):
            if i != k and e_u[i, k] > best:
                best_tag, best = i, e_u[i, k]
        tags.append(best_tag)
        theta[k] = best
    return tags, theta


def worst_case_eavesdropper(chan: ChannelSet, sel, W: np.ndarray, k: int) -> EveChoice:
    idx = as_ports(sel, chan.n_ports)
    tags, theta = _worst_tags(chan, idx, W)
    tag = tags[k]
    noise = chan.sigma_r2 if tag == TARGET else float(chan.sigma_eve2[tag])
    return EveChoice(tag, _eve_rows(chan, idx, [tag])[0], noise, float(theta[k]))


# ---------------------------------------------------------------- FP state

@dataclass
class FpState:
    """Auxiliaries at the current precoder and the concave surrogate built from them.

    The surrogate of the secrecy sum is
    ``const + 2 Re Tr(W^H (C1 + C2)) - Tr(W^H D1 W) - sum_j w_j^H D2[j] w_j``.

    ``u, delta`` are the quadratic-transform auxiliaries of the user rates.
    ``v, beta`` are the matching quantities of the worst eavesdropper
    (``v = theta``, ``beta = conj(c) / e``).  The eavesdropper rate is bounded
    from above by a quadratic transform of its interference power and a tangent
    of the log of its total received power; ``C2``/``D2`` hold that bound, with
    ``D2`` stacked per precoder column because a user eavesdropper does not
    count its own stream as interference.
    """

    idx: np.ndarray
    u: np.ndarray
    v: np.ndarray
    delta: np.ndarray
    beta: np.ndarray
    worst_eve: list
    eve_rows: np.ndarray
    eve_noise: np.ndarray
    sigma_k2: np.ndarray
    eve_lin: np.ndarray  # (K, K): coefficient of g_k^H w_j in the linear term
    eve_quad: np.ndarray  # (K, K): weight of |g_k^H w_j|^2 in the quadratic term
    eve_const: np.ndarray  # (K,): constant making the eavesdropper bound tight
    C1: np.ndarray = None
    D1: np.ndarray = None
    C2: np.ndarray = None
    D2: np.ndarray = None
    D3: np.ndarray = None
    rho: float = 0.0
    a_S: np.ndarray = None


def _interference_mask(tags, K: int) -> np.ndarray:
    """``mask[k, j] = 1`` when stream ``j`` interferes at user ``k``'s worst eavesdropper."""
    mask = np.ones((K, K)) - np.eye(K)
    for k, tag in enumerate(tags):
        if tag != TARGET:
            mask[k, tag] = 0.0
    return mask


def update_auxiliaries(chan: ChannelSet, sel, W: np.ndarray) -> FpState:
    """Conditionally optimal auxiliaries at the current precoder."""
    idx = as_ports(sel, chan.n_ports)
    K = chan.K
    H_S = chan.H[:, idx]
    Q = H_S @ W
    a = np.diag(Q).copy()
    b = np.sum(np.abs(Q) ** 2, axis=1) + chan.sigma_k2
    u = user_sinrs(H_S, W, chan.sigma_k2)

    tags, theta = _worst_tags(chan, idx, W)
    rows = _eve_rows(chan, idx, tags)
    noise = np.array([chan.sigma_r2 if t == TARGET else chan.sigma_eve2[t] for t in tags])
    Qg = rows @ W
    c = np.diag(Qg).copy()
    P2 = np.abs(Qg) ** 2
    inter = _interference_mask(tags, K)
    interf = np.sum(inter * P2, axis=1) + noise
    total = interf + np.abs(c) ** 2
    xnorm2 = interf - noise

    lin = inter * Qg / noise[:, None]
    quad = inter * (xnorm2 / (noise * interf))[:, None] + (inter + np.eye(K)) / total[:, None]
    lin_val = 2 * np.real(np.sum(np.conj(lin) * Qg, axis=1))
    quad_val = np.sum(quad * P2, axis=1)
    const = -np.log2(1 + theta) - (lin_val - quad_val)
    return FpState(idx=idx, u=u, v=theta, delta=np.conj(a) / b, beta=np.conj(c) / total,
                   worst_eve=tags, eve_rows=rows, eve_noise=noise, sigma_k2=chan.sigma_k2.copy(),
                   eve_lin=lin, eve_quad=quad, eve_const=const)


def assemble_surrogate(fp: FpState, chan: ChannelSet, zeta: float = 0.0,
                       w_r: np.ndarray | None = None) -> FpState:
    """Fill ``C1, D1, C2, D2, D3`` and the beam-gain threshold ``rho`` in place."""
    H_S = chan.H[:, fp.idx]
    wu = (1 + fp.u) * np.abs(fp.delta) ** 2
    fp.C1 = H_S.conj().T * ((1 + fp.u) * np.conj(fp.delta))[None, :]
    fp.D1 = H_S.conj().T @ (wu[:, None] * H_S)
    G = fp.eve_rows
    fp.C2 = G.conj().T @ fp.eve_lin
    fp.D2 = np.einsum("kj,kn,km->jnm", fp.eve_quad, G.conj(), G)
    fp.a_S = chan.a_t[fp.idx]
    fp.D3 = np.outer(fp.a_S, fp.a_S.conj())
    fp.rho = radar_threshold(chan, zeta, w_r)
    return fp


def surrogate_value(fp: FpState, W: np.ndarray) -> float:
    """W-dependent part of the surrogate: linear terms minus both quadratics."""
    quad_u = _inner(W, fp.D1 @ W)
    quad_e = float(np.real(np.einsum("nj,jnm,mj->", W.conj(), fp.D2, W)))
    return 2 * _inner(W, fp.C1 + fp.C2) - quad_u - quad_e


def fp_constant(fp: FpState) -> float:
    user = np.log2(1 + fp.u) - fp.u - (1 + fp.u) * np.abs(fp.delta) ** 2 * fp.sigma_k2
    return float(np.sum(user) + np.sum(fp.eve_const))


def fp_objective(fp: FpState, W: np.ndarray) -> float:
    """Surrogate of the secrecy sum at fixed auxiliaries; exact right after an update."""
    return fp_constant(fp) + surrogate_value(fp, W)


def user_fp_terms(fp: FpState, H_S: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Per-user ``log2(1+u) - u + (1+u)[2 Re(delta a) - |delta|^2 b]``."""
    Q = H_S @ W
    a = np.diag(Q)
    b = np.sum(np.abs(Q) ** 2, axis=1) + fp.sigma_k2
    return (np.log2(1 + fp.u) - fp.u
            + (1 + fp.u) * (2 * np.real(fp.delta * a) - np.abs(fp.delta) ** 2 * b))


def eve_fp_terms(fp: FpState, W: np.ndarray) -> np.ndarray:
    """Per-user upper bound of ``log2(1 + theta_k)`` at fixed auxiliaries."""
    Qg = fp.eve_rows @ W
    lin = 2 * np.real(np.sum(np.conj(fp.eve_lin) * Qg, axis=1))
    quad = np.sum(fp.eve_quad * np.abs(Qg) ** 2, axis=1)
    return -(fp.eve_const + lin - quad)


def surrogate_gradient(fp: FpState, W: np.ndarray) -> np.ndarray:
    """``C1 + C2 - D1 W - D2 W`` (half the Wirtinger gradient of the surrogate)."""
    return fp.C1 + fp.C2 - fp.D1 @ W - np.einsum("jnm,mj->nj", fp.D2, W)


def _quad_along(fp: FpState, D: np.ndarray) -> float:
    return -_inner(D, fp.D1 @ D) - float(np.real(np.einsum("nj,jnm,mj->", D.conj(), fp.D2, D)))


# ---------------------------------------------------------------- precoder

def solve_precoder_subproblem(M: np.ndarray, B: np.ndarray, power: float, rho: float,
                              bisection_tol: float = 1e-10) -> np.ndarray:
    """Maximize ``2 Re Tr(W^H M)`` over ``||W||_F <= sqrt(P)`` with ``2 Re Tr(W^H B) >= rho``.

    The maximizer is ``sqrt(P) (M + mu B) / ||M + mu B||_F`` for the smallest
    ``mu >= 0`` meeting the constraint, found by bisection on ``mu``.
    """
    sq = math.sqrt(power)
    mm, bb, mb = _inner(M, M), _inner(B, B), _inner(M, B)
    if mm == 0.0 and bb == 0.0:
        raise ValueError("objective and constraint matrices are both zero")
    if rho > 2 * sq * math.sqrt(bb) * (1 + 1e-12):
        raise InfeasibleError("linearized radar constraint exceeds what the power ball allows",
                              required=rho, achievable=2 * sq * math.sqrt(bb))

    def con(mu):
        n2 = mm + 2 * mu * mb + mu * mu * bb
        if n2 <= 0.0:
            return -math.inf
        return 2 * sq * (mb + mu * bb) / math.sqrt(n2)

    def W_of(mu):
        X = M + mu * B
        return sq * X / np.linalg.norm(X)

    if mm > 0.0 and con(0.0) >= rho:
        return W_of(0.0)
    if mm == 0.0:
        return sq * B / math.sqrt(bb)
    if mb < 0 and mb * mb >= (1 - 1e-12) * mm * bb:
        # M anti-parallel to B: every point of the hyperplane is optimal
        return (rho / (2 * bb)) * B
    hi = 1.0
    for _ in range(60):
        if con(hi) >= rho:
            break
        hi *= 2.0
    else:
        raise InfeasibleError("no multiplier satisfies the radar constraint", required=rho)
    lo = 0.0
    scale = max(1.0, abs(rho))
    for _ in range(200):
        if con(hi) - rho <= bisection_tol * scale or hi - lo <= 1e-15 * hi:
            break
        mid = 0.5 * (lo + hi)
        if con(mid) >= rho:
            hi = mid
        else:
            lo = mid
    return W_of(hi)


class _ColumnQP:
    """``max 2 Re Tr(W^H C) - sum_j w_j^H A_j w_j`` over ``||W||_F^2 <= P`` and ``2 Re Tr(W^H B) >= rho``.

    ``A`` is a ``(K, n, n)`` stack of PSD matrices.  The KKT point is
    ``w_j = (A_j + lam I)^{-1} (c_j + mu b_j)``; everything is evaluated in the
    eigenbases of the ``A_j``, so each trial multiplier costs ``O(n K)``.
    """

    def __init__(self, A: np.ndarray, C: np.ndarray, B: np.ndarray, power: float):
        s, V = np.linalg.eigh(A)
        self.s = np.maximum(s, 0.0).T  # (n, K)
        self.V = V
        self.p = np.einsum("jnm,nj->mj", V.conj(), C)
        self.q = np.einsum("jnm,nj->mj", V.conj(), B)
        self.power = power
        self.floor = 1e-14 * max(float(self.s.max()), 1.0)

    def _lam(self, mu: float) -> float:
        """Power multiplier: 0 if the unconstrained point fits, else the secular-equation root."""
        x2 = (np.abs(self.p + mu * self.q) ** 2).ravel()
        s = self.s.ravel()
        tot = float(x2.sum())
        if tot == 0.0:
            return 0.0
        live = x2 > 1e-30 * tot
        x2, s = x2[live], s[live]
        inv_sq = 1.0 / math.sqrt(self.power)
        lam, hi = 0.0, math.sqrt(tot / self.power)
        if s.min() > self.floor and float(np.sum(x2 / s**2)) <= self.power:
            return 0.0
        if s.min() <= self.floor:
            lam = min(hi, 1e-12 * hi + self.floor)
        # Newton on phi(lam) = 1/||x(lam)|| - 1/sqrt(P): concave and increasing,
        # so iterates started left of the root increase monotonically to it
        for _ in range(100):
            r = 1.0 / (s + lam)
            t = x2 * r * r
            n2 = float(t.sum())
            phi = 1.0 / math.sqrt(n2) - inv_sq
            if phi >= 0.0 and lam > 0.0 and phi <= 1e-13 * inv_sq:
                return lam
            dphi = float(t @ r) / n2**1.5
            step = -phi / dphi
            new = lam + step
            if not (new > lam - 1e-300) or new > hi:
                new = 0.5 * (lam + hi)
            if abs(new - lam) <= 1e-14 * max(new, 1e-300):
                return new
            lam = new
        return lam

    def coords(self, mu: float, lam: float) -> np.ndarray:
        d = self.s + lam
        x = self.p + mu * self.q
        return np.divide(x, d, out=np.zeros_like(x), where=d > self.floor)

    def radar(self, mu: float) -> float:
        return 2 * float(np.real(np.vdot(self.q, self.coords(mu, self._lam(mu)))))

    def W(self, mu: float) -> np.ndarray:
        return np.einsum("jnm,mj->nj", self.V, self.coords(mu, self._lam(mu)))


def solve_quadratic_subproblem(A: np.ndarray, C: np.ndarray, B: np.ndarray, power: float,
                               rho: float, bisection_tol: float = 1e-10) -> np.ndarray:
    """Exact maximizer of the concave column-separable QP described in :class:`_ColumnQP`.

    The power multiplier is found by root finding on the secular equation and
    the radar multiplier ``mu`` by bracketing (doubling) then root finding.
    """
    qp = _ColumnQP(A, C, B, power)
    if rho == -math.inf or qp.radar(0.0) >= rho:
        return qp.W(0.0)
    cap = 2 * math.sqrt(power) * float(np.linalg.norm(B))
    if rho > cap * (1 + 1e-12):
        raise InfeasibleError("linearized radar constraint exceeds what the power ball allows",
                              required=rho, achievable=cap)
    hi = 1.0
    for _ in range(60):
        if qp.radar(hi) >= rho:
            break
        hi *= 2.0
    else:
        raise InfeasibleError("no multiplier satisfies the radar constraint", required=rho)
    lo = 0.0 if hi == 1.0 else hi / 2
    scale = max(1.0, abs(rho))
    mu = brentq(lambda m: qp.radar(m) - rho - 0.5 * bisection_tol * scale, lo, hi,
                xtol=1e-15 * hi, rtol=4e-16 * 8)
    # the root can land a hair below the constraint; nudge up until it holds
    for _ in range(60):
        if qp.radar(mu) >= rho:
            break
        mu = mu + max(1e-15 * hi, 1e-12 * mu)
    return qp.W(mu)


def restore_radar(W: np.ndarray, a_S: np.ndarray, rho: float, power: float) -> np.ndarray:
    """Blend ``W`` toward the target direction until ``||a_S^H W||^2 >= rho``; keeps ``||W||^2 = P``."""
    sq = math.sqrt(power)
    nw = np.linalg.norm(W)
    W = sq * W / nw if nw > 0 else np.zeros_like(W)
    if rho <= 0 or np.sum(np.abs(a_S.conj() @ W) ** 2) >= rho * (1 + 1e-9):
        return W
    cap = power * np.sum(np.abs(a_S) ** 2)
    if rho > cap * (1 - 1e-9):
        raise InfeasibleError("radar requirement exceeds the full-power beam gain",
                              required=rho, achievable=cap)
    t = a_S.conj() @ W
    x = t.conj() / np.linalg.norm(t) if np.linalg.norm(t) > 0 else np.eye(W.shape[1])[0]
    beam = np.outer(a_S, x) / np.linalg.norm(a_S)
    base = W / sq

    def blend(tau):
        X = (1 - tau) * base + tau * beam
        return sq * X / np.linalg.norm(X)

    target = rho * (1 + 1e-6)
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.sum(np.abs(a_S.conj() @ blend(mid)) ** 2) >= target:
            hi = mid
        else:
            lo = mid
    return blend(hi)


@dataclass
class ScaResult:
    W: np.ndarray
    values: list
    iterations: int
    converged: bool


def sca_precoder(fp: FpState, W0: np.ndarray, power: float, opts: SolverOptions) -> ScaResult:
    """Successive convex approximation of the radar constraint at fixed auxiliaries.

    The surrogate is concave, so only the beam gain ``||a_S^H W||^2 >= rho`` is
    linearized, keeping its constant.  The linearization is a lower bound of the
    convex beam gain, hence every subproblem solution is radar-feasible and the
    current point is feasible for the next subproblem: surrogate values never
    decrease.  Each subproblem is solved exactly by
    :func:`solve_quadratic_subproblem`.
    """
    W = W0.copy()
    f = surrogate_value(fp, W)
    values = [f]
    radar_on = fp.rho > 0
    A = fp.D2 + fp.D1[None, :, :]
    C = fp.C1 + fp.C2
    converged = False
    it = 0
    for it in range(1, opts.max_sca_iters + 1):
        t = fp.a_S.conj() @ W
        B = np.outer(fp.a_S, t)
        rho_eff = fp.rho + float(np.sum(np.abs(t) ** 2)) if radar_on else -math.inf
        W_new = solve_quadratic_subproblem(A, C, B, power, rho_eff, opts.bisection_tol)
        f_new = surrogate_value(fp, W_new)
        if f_new < f:
            # roundoff at a stationary point; keep the current iterate
            W_new, f_new = W, f
        change = float(np.sum(np.abs(W_new - W) ** 2))
        W, f = W_new, f_new
        values.append(f)
        if not radar_on or change < opts.tol * power * 1e-2:
            converged = True
            break
    return ScaResult(W, values, it, converged)


# ---------------------------------------------------------------- port selection

def embed(W: np.ndarray, idx: np.ndarray, n_ports: int) -> np.ndarray:
    """Precoder in the full port space, zero on inactive ports."""
    F = np.zeros((n_ports, W.shape[1]), dtype=complex)
    F[idx] = W
    return F


def _full_eve_rows(chan: ChannelSet, tags) -> np.ndarray:
    return np.array([chan.a_t.conj() if t == TARGET else chan.H[t] for t in tags])


def port_utility(fp: FpState, chan: ChannelSet, W_full: np.ndarray, r: np.ndarray) -> float:
    """Port-separable surrogate utility ``sum_k sum_n r_n (Phi^h_kn - Phi^g_kn)`` of a 0/1 vector ``r``.

    Each selected port ``n`` contributes its linear term, its cross terms with
    the other selected ports through ``[W W^H]_{n,n'}`` and its diagonal term.
    ``Phi^h`` is the user part and ``Phi^g`` the eavesdropper leakage part, whose
    stream weights come from ``fp.eve_quad``.  At the current selection the value
    equals :func:`surrogate_value`.
    """
    r = np.asarray(r, dtype=float)
    K = chan.K
    G = _full_eve_rows(chan, fp.worst_eve)
    total = 0.0
    for k in range(K):
        uc = (1 + fp.u[k])
        terms = (
            # row, linear coefficient per port, per-stream quadratic weights, sign
            (chan.H[k], 2 * np.real(uc * fp.delta[k] * chan.H[k] * W_full[:, k]),
             np.full(K, uc * abs(fp.delta[k]) ** 2), 1.0),
            (G[k], -2 * np.real(G[k] * (W_full @ np.conj(fp.eve_lin[k]))),
             fp.eve_quad[k], -1.0),
        )
        for row, lin, weights, sign in terms:
            Wm = (W_full * weights[None, :]) @ W_full.conj().T
            cross = row[:, None] * Wm * row.conj()[None, :]
            diag = np.real(np.diag(cross)).copy()
            np.fill_diagonal(cross, 0.0)
            phi = lin - sign * (np.real(cross @ r) + diag)
            total += sign * float(r @ phi)
    return total


def gamma_scores(fp: FpState, chan: ChannelSet) -> np.ndarray:
    """Per-port score: weighted user gains minus weighted eavesdropper gains."""
    G = _full_eve_rows(chan, fp.worst_eve)
    gain = ((1 + fp.u) * np.abs(fp.delta)) @ np.abs(chan.H)
    leak = ((1 + fp.v) * np.abs(fp.beta)) @ np.abs(G)
    return gain - leak


def top_ports(scores: np.ndarray, n_s: int) -> np.ndarray:
    """Indices of the ``n_s`` largest scores (lowest index on ties), ascending."""
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores)))
    return np.sort(order[:n_s])


# ---------------------------------------------------------------- alternating loops

@dataclass
class JppsResult:
    selection: np.ndarray
    W: np.ndarray
    report: object
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    constraint_missed: bool = False
    note: str = ""

    @property
    def sum_secrecy(self) -> float:
        return self.report.sum_secrecy


def matched_filter(chan: ChannelSet, idx: np.ndarray, power: float) -> np.ndarray:
    W = chan.H[:, idx].conj().T
    return math.sqrt(power) * W / np.linalg.norm(W)


def regularized_zf(chan: ChannelSet, idx: np.ndarray, power: float) -> np.ndarray:
    """``H^H (H H^H + (sum sigma_k^2 / P) I)^{-1}`` scaled to power ``P``."""
    H_S = chan.H[:, idx]
    reg = float(np.sum(chan.sigma_k2)) / power
    W = H_S.conj().T @ np.linalg.inv(H_S @ H_S.conj().T + reg * np.eye(chan.K))
    return math.sqrt(power) * W / np.linalg.norm(W)


def initial_precoder(chan: ChannelSet, idx: np.ndarray, power: float, rho: float) -> np.ndarray:
    """The best of matched filter, regularized ZF and water-filled ZF (by secrecy), made radar-feasible."""
    best, best_val = None, -math.inf
    starts = [matched_filter(chan, idx, power), regularized_zf(chan, idx, power)]
    try:
        starts.append(zf_water_filling(chan.H[:, idx], power, chan.sigma_k2))
    except RankDeficientError:
        pass
    for W in starts:
        if not np.all(np.isfinite(W)):
            continue
        W = restore_radar(W, chan.a_t[idx], rho, power)
        val = fp_secrecy(chan, idx, W)
        if val > best_val:
            best, best_val = W, val
    return best


def initial_selection(chan: ChannelSet, n_s: int, power: float,
                      rng: np.random.Generator | None = None, random_init: bool = False) -> np.ndarray:
    """Top ``n_s`` ports by the score computed from a full-array matched filter."""
    N = chan.n_ports
    if random_init:
        if rng is None:
            raise ValueError("random initialization needs an rng")
        return np.sort(rng.choice(N, size=n_s, replace=False))
    full = np.arange(N)
    fp = update_auxiliaries(chan, full, matched_filter(chan, full, power))
    return top_ports(gamma_scores(fp, chan), n_s)


def _transfer(W: np.ndarray, old: np.ndarray, new: np.ndarray, chan: ChannelSet,
              power: float) -> np.ndarray:
    """Carry rows of shared ports over; new ports start from scaled matched-filter rows."""
    pos = {p: i for i, p in enumerate(old)}
    out = np.zeros((len(new), W.shape[1]), dtype=complex)
    fresh = [i for i, p in enumerate(new) if p not in pos]
    for i, p in enumerate(new):
        if p in pos:
            out[i] = W[pos[p]]
    if fresh:
        mf = chan.H[:, new[fresh]].conj().T
        mf /= max(np.linalg.norm(mf), 1e-300)
        row_norm = np.linalg.norm(W) / math.sqrt(W.shape[0])
        out[fresh] = mf * row_norm * math.sqrt(len(fresh))
    return math.sqrt(power) * out / np.linalg.norm(out)


def _precoder_step(chan: ChannelSet, idx: np.ndarray, W: np.ndarray, power: float,
                   opts: SolverOptions, w_r: np.ndarray):
    """Up to ``opts.fp_iters`` rounds of (auxiliary update, SCA) on fixed ports.

    A round is kept only if the true secrecy sum does not drop; the surrogate
    bounds the current worst eavesdropper only, so a switch of worst
    eavesdropper can otherwise cost secrecy.
    """
    obj = fp_secrecy(chan, idx, W)
    fp = res = None
    for _ in range(opts.fp_iters):
        fp_t = assemble_surrogate(update_auxiliaries(chan, idx, W), chan, opts.zeta, w_r)
        res_t = sca_precoder(fp_t, W, power, opts)
        if fp is None:
            fp, res = fp_t, res_t
        obj_t = fp_secrecy(chan, idx, res_t.W)
        if obj_t < obj:
            break
        fp, res = fp_t, res_t
        gain = obj_t - obj
        W, obj = res_t.W, obj_t
        if gain <= 1e-6 * max(1.0, abs(obj)):
            break
    return fp, ScaResult(W, res.values, res.iterations, res.converged)


def _feasible(rep, zeta: float) -> bool:
    return rep.radar_sinr >= zeta * (1 - 1e-6)


def optimize_precoder(chan: ChannelSet, sel, power: float, opts: SolverOptions,
                      W0: np.ndarray | None = None, w_r: np.ndarray | None = None) -> JppsResult:
    """FP alternation (auxiliaries, then SCA) on a fixed port selection."""
    fixed = SolverOptions(**{**opts.__dict__, "reselect": False})
    return _alternate(chan, as_ports(sel, chan.n_ports), power, fixed, W0, w_r)


def jpps(chan: ChannelSet, n_s: int, power: float, opts: SolverOptions | None = None,
         rng: np.random.Generator | None = None, w_r: np.ndarray | None = None) -> JppsResult:
    """Joint precoding and port selection for the sum secrecy rate under the radar floor."""
    opts = opts or SolverOptions()
    N, K = chan.n_ports, chan.K
    if not K <= n_s <= N:
        raise ValueError(f"need K <= n_s <= N_s, got K={K}, n_s={n_s}, N_s={N}")
    idx = initial_selection(chan, n_s, power, rng, opts.random_init)
    res = _alternate(chan, idx, power, opts, None, w_r)
    if opts.reselect and opts.polish_top > 0:
        res = _polish(chan, res, power, opts, w_r)
    if opts.reselect:
        # the warm-started path can stall; a cold start on the final ports may do better
        fixed = SolverOptions(**{**opts.__dict__, "reselect": False})
        cold = _alternate(chan, res.selection, power, fixed, None, w_r)
        if _rank_value(cold) > _rank_value(res):
            res = JppsResult(cold.selection, cold.W, cold.report, res.trace, res.iterations,
                             res.converged, cold.constraint_missed, cold.note)
    return res


def _rank_value(res: JppsResult) -> tuple:
    return (not res.constraint_missed, res.sum_secrecy)


def swap_neighbours(idx: np.ndarray, n_ports: int) -> list:
    """All selections differing from ``idx`` in exactly one port, in lexicographic order."""
    chosen = set(int(p) for p in idx)
    out = []
    for p_out in idx:
        for p_in in range(n_ports):
            if p_in not in chosen:
                out.append(np.sort(np.array([p for p in idx if p != p_out] + [p_in])))
    return out


def _polish(chan: ChannelSet, res: JppsResult, power: float, opts: SolverOptions,
            w_r: np.ndarray | None) -> JppsResult:
    """Swap local search: fully re-optimize the most promising single-swap neighbours.

    Neighbours are ranked by the secrecy of their initial precoder; the best
    ``opts.polish_top`` (all of them when there are at most ``opts.polish_full``)
    get a complete precoder optimization and the best improvement is taken.
    Repeats until no neighbour improves.
    """
    if w_r is None:
        w_r = mvdr_filter(chan.Rc, chan.sigma_b2, chan.a_r)
    rho = radar_threshold(chan, opts.zeta, w_r)
    fixed = SolverOptions(**{**opts.__dict__, "reselect": False})
    seen = {tuple(res.selection.tolist())}
    trace = list(res.trace)
    for _ in range(math.comb(chan.n_ports, len(res.selection))):
        ranked = []
        for cand in swap_neighbours(res.selection, chan.n_ports):
            key = tuple(cand.tolist())
            if key in seen:
                continue
            seen.add(key)
            try:
                W0 = initial_precoder(chan, cand, power, rho)
            except InfeasibleError:
                continue
            ranked.append((fp_secrecy(chan, cand, W0), len(ranked), cand, W0))
        ranked.sort(key=lambda r: (-r[0], r[1]))
        width = len(ranked) if len(ranked) <= opts.polish_full else opts.polish_top
        best = None
        for _, _, cand, W0 in ranked[:width]:
            try:
                r = _alternate(chan, cand, power, fixed, W0, w_r)
            except InfeasibleError:
                continue
            if _rank_value(r) > _rank_value(best or res):
                best = r
        if best is None:
            break
        step = {"iteration": len(trace) + 1, "fp_secrecy": best.sum_secrecy,
                "sum_secrecy": best.sum_secrecy, "radar_sinr": best.report.radar_sinr,
                "selection": best.selection.tolist(), "polish": True}
        trace.append(step)
        res = JppsResult(best.selection, best.W, best.report, trace, res.iterations, res.converged,
                         best.constraint_missed, best.note)
    return res


def candidate_selections(scores: np.ndarray, idx: np.ndarray, width: int) -> list:
    """Gamma-guided neighbours of ``idx``: the top-``n_s`` set, then single swaps.

    A swap replaces one of the ``width`` lowest-scoring selected ports by one of
    the ``width`` highest-scoring unselected ports.  Order is deterministic.
    """
    n_s = len(idx)
    out = []
    top = top_ports(scores, n_s)
    if not np.array_equal(top, np.sort(idx)):
        out.append(top)
    inside = sorted(idx, key=lambda p: (scores[p], p))[:width]
    chosen = set(int(p) for p in idx)
    outside = sorted((p for p in range(len(scores)) if p not in chosen),
                     key=lambda p: (-scores[p], p))[:width]
    for p_out in inside:
        for p_in in outside:
            cand = np.sort(np.array([p for p in idx if p != p_out] + [p_in]))
            if not any(np.array_equal(cand, c) for c in out):
                out.append(cand)
    return out


def _reselect(chan, fp, idx, W, obj, power, rho, opts, w_r):
    """Best Gamma-guided neighbour selection, if it beats ``obj``.

    Candidates are ranked by the secrecy of their warm start; the best
    ``opts.refine_top`` are refined by one precoder step.
    """
    scores = gamma_scores(fp, chan)
    ranked = []
    for cand in candidate_selections(scores, idx, opts.swap_width):
        starts = [initial_precoder(chan, cand, power, rho)]
        if rho <= 0 or np.sum(np.abs(chan.a_t[cand].conj() @ _transfer(W, idx, cand, chan, power)) ** 2) > 0:
            starts.append(restore_radar(_transfer(W, idx, cand, chan, power), chan.a_t[cand], rho, power))
        vals = [fp_secrecy(chan, cand, Wc) for Wc in starts]
        i = int(np.argmax(vals))
        ranked.append((vals[i], len(ranked), cand, starts[i]))
    ranked.sort(key=lambda r: (-r[0], r[1]))
    best = None
    for _, _, cand, Wc in ranked[:opts.refine_top]:
        _, res = _precoder_step(chan, cand, Wc, power, opts, w_r)
        val = fp_secrecy(chan, cand, res.W)
        if val > obj and (best is None or val > best[2]):
            best = (cand, res.W, val)
    return best


def _alternate(chan: ChannelSet, idx: np.ndarray, power: float, opts: SolverOptions,
               W0: np.ndarray | None, w_r: np.ndarray | None) -> JppsResult:
    if w_r is None:
        w_r = mvdr_filter(chan.Rc, chan.sigma_b2, chan.a_r)
    N = chan.n_ports
    rho = radar_threshold(chan, opts.zeta, w_r)
    if W0 is None:
        W = initial_precoder(chan, idx, power, rho)
    else:
        W = restore_radar(W0, chan.a_t[idx], rho, power)
    obj = fp_secrecy(chan, idx, W)
    trace = []
    best = None
    converged = False
    note = ""
    t = 0
    for t in range(1, opts.max_outer_iters + 1):
        fp, res = _precoder_step(chan, idx, W, power, opts, w_r)
        new_idx, W_new = idx, res.W
        obj_new = fp_secrecy(chan, idx, W_new)
        if opts.reselect:
            try:
                found = _reselect(chan, fp, idx, W, obj_new, power, rho, opts, w_r)
            except InfeasibleError:
                found, note = None, "reselection infeasible; kept previous ports"
            if found is not None:
                new_idx, W_new, obj_new = found
        change = float(np.sum(np.abs(embed(W_new, new_idx, N) - embed(W, idx, N)) ** 2)) / power
        idx, W, obj = new_idx, W_new, obj_new
        rep = secrecy_report(chan, idx, W, w_r)
        trace.append({"iteration": t, "surrogate": res.values[-1], "fp_secrecy": obj,
                      "sum_secrecy": rep.sum_secrecy, "radar_sinr": rep.radar_sinr,
                      "selection": idx.tolist(), "change": change})
        if _feasible(rep, opts.zeta) and (best is None or rep.sum_secrecy > best[2].sum_secrecy):
            best = (idx.copy(), W.copy(), rep)
        if change < opts.tol:
            converged = True
            break
    if best is None:
        rep = secrecy_report(chan, idx, W, w_r)
        return JppsResult(idx, W, rep, trace, t, converged, True, note or "radar constraint missed")
    return JppsResult(best[0], best[1], best[2], trace, t, converged, False, note)


# ---------------------------------------------------------------- radar-centric variant

def _radar_sca(fp: FpState, W0: np.ndarray, power: float, r_th: float,
               opts: SolverOptions) -> np.ndarray:
    """Maximize ``||a_S^H W||^2`` with the FP secrecy surrogate kept at or above ``r_th``."""
    W = W0.copy()
    const = fp_constant(fp)
    gain = float(np.sum(np.abs(fp.a_S.conj() @ W) ** 2))
    for _ in range(opts.max_sca_iters):
        B = np.outer(fp.a_S, fp.a_S.conj() @ W)
        if r_th > 0:
            M = surrogate_gradient(fp, W)
            thr = r_th - const - surrogate_value(fp, W) + 2 * _inner(W, M)
            try:
                W_hat = solve_precoder_subproblem(B, M, power, thr, opts.bisection_tol)
            except InfeasibleError:
                break
        else:
            W_hat = math.sqrt(power) * B / np.linalg.norm(B)
        D = W_hat - W
        step, accepted = 1.0, None
        for _ in range(30):
            Wt = W + step * D
            gt = float(np.sum(np.abs(fp.a_S.conj() @ Wt) ** 2))
            if gt > gain and (r_th <= 0 or fp_objective(fp, Wt) >= r_th - 1e-9):
                accepted = (Wt, gt)
                break
            step *= 0.5
        if accepted is None:
            break
        change = float(np.sum(np.abs(accepted[0] - W) ** 2))
        W, gain = accepted
        if change < opts.tol * power * 1e-2:
            break
    return W


def _secrecy_start(chan: ChannelSet, idx: np.ndarray, power: float, opts: SolverOptions,
                   w_r: np.ndarray) -> np.ndarray:
    sec = SolverOptions(**{**opts.__dict__, "zeta": 0.0, "reselect": False})
    return _alternate(chan, idx, power, sec, None, w_r).W


def radar_centric(chan: ChannelSet, n_s: int, power: float, opts: SolverOptions | None = None,
                  rng: np.random.Generator | None = None, w_r: np.ndarray | None = None,
                  selection=None) -> JppsResult:
    """Maximize the radar SINR subject to a sum secrecy floor ``opts.r_th``.

    With ``r_th == 0`` the secrecy floor is vacuous and the precoder is the
    full-power beam toward the target.  ``selection`` pins the ports (no reselection).
    """
    opts = opts or SolverOptions()
    if w_r is None:
        w_r = mvdr_filter(chan.Rc, chan.sigma_b2, chan.a_r)
    N = chan.n_ports
    if selection is not None:
        idx = as_ports(selection, N)
        reselect = False
    else:
        idx = initial_selection(chan, n_s, power, rng, opts.random_init)
        reselect = opts.reselect

    def solve(ports, W_start):
        W = W_start
        if opts.r_th > 0 and fp_secrecy(chan, ports, W) < opts.r_th:
            raise InfeasibleError("secrecy floor not reached by the secrecy-optimal start",
                                  required=opts.r_th, achievable=fp_secrecy(chan, ports, W))
        for _ in range(opts.max_outer_iters):
            fp = assemble_surrogate(update_auxiliaries(chan, ports, W), chan, 0.0, w_r)
            W_new = _radar_sca(fp, W, power, opts.r_th, opts)
            if opts.r_th > 0 and fp_secrecy(chan, ports, W_new) < opts.r_th:
                break
            change = float(np.sum(np.abs(W_new - W) ** 2)) / power
            W = W_new
            if change < opts.tol:
                break
        return W

    def gain_of(ports, W):
        return float(np.sum(np.abs(chan.a_t[ports].conj() @ W) ** 2))

    def blend_start(ports, W_sec):
        """Push the secrecy-optimal precoder toward the target beam while the floor holds."""
        a = chan.a_t[ports]
        W_t = np.outer(a, np.ones(W_sec.shape[1])) * math.sqrt(power / (W_sec.shape[1] * np.vdot(a, a).real))
        for lam in np.linspace(1.0, 0.0, 11):
            Wb = math.sqrt(1 - lam) * W_sec + math.sqrt(lam) * W_t
            nb = np.linalg.norm(Wb)
            if nb > 0:
                Wb = Wb * math.sqrt(power) / nb
                if fp_secrecy(chan, ports, Wb) >= opts.r_th:
                    return Wb
        return W_sec

    def solve_best(ports):
        if opts.r_th <= 0:
            return solve(ports, matched_filter(chan, ports, power))
        W_sec = _secrecy_start(chan, ports, power, opts, w_r)
        W1 = solve(ports, W_sec)
        W2 = solve(ports, blend_start(ports, W_sec))
        return W2 if gain_of(ports, W2) > gain_of(ports, W1) else W1

    W = solve_best(idx)
    trace = [{"iteration": 0, "selection": idx.tolist(), "beam_gain": gain_of(idx, W)}]
    if reselect:
        for t in range(1, opts.max_outer_iters + 1):
            fp = update_auxiliaries(chan, idx, W)
            cand = top_ports(gamma_scores(fp, chan), len(idx))
            if np.array_equal(cand, idx):
                break
            try:
                Wc = solve_best(cand)
            except InfeasibleError:
                break
            if gain_of(cand, Wc) <= gain_of(idx, W):
                break
            idx, W = cand, Wc
            trace.append({"iteration": t, "selection": idx.tolist(), "beam_gain": gain_of(idx, W)})
    if reselect and opts.polish_top > 0:
        idx, W = _radar_polish(chan, idx, W, power, opts, solve_best, gain_of, trace)
    rep = secrecy_report(chan, idx, W, w_r)
    missed = opts.r_th > 0 and rep.sum_secrecy < opts.r_th * (1 - 1e-6)
    return JppsResult(idx, W, rep, trace, len(trace), True, missed)


def _radar_polish(chan, idx, W, power, opts, solve_best, gain_of, trace):
    """Single-swap local search on the target beam gain (same width rule as :func:`_polish`)."""
    seen = {tuple(idx.tolist())}
    best_gain = gain_of(idx, W)
    for _ in range(math.comb(chan.n_ports, len(idx))):
        ranked = []
        for cand in swap_neighbours(idx, chan.n_ports):
            key = tuple(cand.tolist())
            if key in seen:
                continue
            seen.add(key)
            W0 = initial_precoder(chan, cand, power, 0.0)
            ranked.append((fp_secrecy(chan, cand, W0), len(ranked), cand))
        ranked.sort(key=lambda r: (-r[0], r[1]))
        width = len(ranked) if len(ranked) <= opts.polish_full else opts.polish_top
        found = None
        for _, _, cand in ranked[:width]:
            try:
                Wc = solve_best(cand)
            except InfeasibleError:
                continue
            g = gain_of(cand, Wc)
            if g > best_gain * (1 + 1e-9) and (found is None or g > found[2]):
                found = (cand, Wc, g)
        if found is None:
            break
        idx, W, best_gain = found
        trace.append({"iteration": len(trace), "selection": idx.tolist(), "beam_gain": best_gain,
                      "polish": True})
    return idx, W
