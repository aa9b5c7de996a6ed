import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_channel, random_precoder
from fasisac.jpps import (
    TARGET,
    InfeasibleError,
    SolverOptions,
    assemble_surrogate,
    embed,
    eve_fp_terms,
    fp_objective,
    gamma_scores,
    initial_selection,
    jpps,
    optimize_precoder,
    port_utility,
    radar_centric,
    restore_radar,
    sca_precoder,
    solve_precoder_subproblem,
    solve_quadratic_subproblem,
    surrogate_value,
    top_ports,
    update_auxiliaries,
    user_fp_terms,
    worst_case_eavesdropper,
)
from fasisac.metrics import fp_secrecy, radar_threshold, secrecy_report, user_sinrs

IDX = np.array([0, 3, 5, 8, 12, 15])


def project(X, B, P, rho):
    """Euclidean projection onto {||W||^2 <= P} and {2Re<W, B> >= rho}.

    KKT: W = (X + nu B) / max(1, ||X + nu B|| / sqrt(P)) with the smallest nu >= 0
    meeting the half-space; the constraint value is increasing in nu.
    """
    r = math.sqrt(P)

    def at(nu):
        Y = X + nu * B
        return Y / max(1.0, np.linalg.norm(Y) / r)

    if lin(at(0.0), B) >= rho:
        return at(0.0)
    lo, hi = 0.0, 1.0
    while lin(at(hi), B) < rho:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if lin(at(mid), B) < rho else (lo, mid)
    return at(hi)


def projected_gradient(M, B, P, rho, steps=500, step=1e-3):
    """First-order oracle for max 2Re<W, M> over the power ball and the radar half-space."""
    W = project(np.zeros_like(M), B, P, rho)
    for _ in range(steps):
        W = project(W + step * 2 * M, B, P, rho)
    return W


def lin(W, M):
    return 2 * np.vdot(W, M).real


# ---------------------------------------------------------------- eavesdroppers and auxiliaries

def test_single_user_worst_eve_is_target():
    chan = random_channel(1, K=1)
    W = random_precoder(np.random.default_rng(0), 6, 1, 10.0)
    assert worst_case_eavesdropper(chan, IDX, W, 0).tag == TARGET


def test_user_at_base_station_dominates():
    chan = random_channel(2, distances=(0.05, 15.0, 25.0, 35.0))
    W = random_precoder(np.random.default_rng(1), 6, 4, 10.0)
    for k in range(1, 4):
        assert worst_case_eavesdropper(chan, IDX, W, k).tag == 0


def test_tie_lowest_index_wins():
    chan = random_channel(3, K=3)
    chan.H[2] = chan.H[1]
    chan.sigma_r2 = 1e12  # target never wins
    W = random_precoder(np.random.default_rng(2), 6, 3, 10.0)
    W[:, 2] = W[:, 1]  # users 1 and 2 then see user 0 identically
    assert worst_case_eavesdropper(chan, IDX, W, 0).tag == 1


@pytest.mark.parametrize("seed", range(10))
def test_fp_tightness(seed):
    chan = random_channel(seed)
    W = random_precoder(np.random.default_rng(seed), 6, 4, 100.0)
    fp = update_auxiliaries(chan, IDX, W)
    rep = secrecy_report(chan, IDX, W)
    np.testing.assert_allclose(user_fp_terms(fp, chan.H[:, IDX], W), rep.rate, atol=1e-9)
    np.testing.assert_allclose(eve_fp_terms(fp, W), rep.eve_rate, atol=1e-9)
    fp = assemble_surrogate(fp, chan, 1.0)
    ref = float(np.sum(np.log2((1 + rep.sinr) / (1 + rep.worst_eve_sinr))))
    assert abs(fp_objective(fp, W) - ref) <= 1e-8


def test_zero_precoder_auxiliaries():
    chan = random_channel(4)
    fp = update_auxiliaries(chan, IDX, np.zeros((6, 4), dtype=complex))
    assert np.all(fp.u == 0) and np.all(fp.delta == 0)


@pytest.mark.parametrize("seed", range(5))
def test_surrogate_is_a_minorizer(seed):
    rng = np.random.default_rng(seed)
    chan = random_channel(seed)
    W = random_precoder(rng, 6, 4, 100.0)
    fp = assemble_surrogate(update_auxiliaries(chan, IDX, W), chan)
    tags = fp.worst_eve
    for _ in range(50):
        V = random_precoder(rng, 6, 4, 100.0 * rng.uniform(0.01, 1))
        # the bound holds for the eavesdroppers chosen at W
        rep = secrecy_report(chan, IDX, V)
        theta = np.array([rep.eve_target_sinr[k] if tags[k] == TARGET else rep.eve_user_sinr[tags[k], k]
                          for k in range(4)])
        true = float(np.sum(np.log2(1 + rep.sinr) - np.log2(1 + theta)))
        assert fp_objective(fp, V) <= true + 1e-9


# ---------------------------------------------------------------- surrogate matrices

def test_zero_auxiliaries_give_zero_matrices():
    chan = random_channel(5)
    fp = update_auxiliaries(chan, IDX, random_precoder(np.random.default_rng(0), 6, 4, 1.0))
    fp.delta[:] = 0
    fp.eve_lin[:] = 0
    fp.eve_quad[:] = 0
    fp = assemble_surrogate(fp, chan, 0.0)
    for X in (fp.C1, fp.C2, fp.D1, fp.D2):
        assert np.all(X == 0)
    assert fp.rho == 0.0


def test_D1_scalar_loop():
    chan = random_channel(6)
    W = random_precoder(np.random.default_rng(1), 6, 4, 10.0)
    fp = assemble_surrogate(update_auxiliaries(chan, IDX, W), chan, 1.0)
    ref = np.zeros((6, 6), dtype=complex)
    for k in range(4):
        h = chan.H[k, IDX].conj()  # Pi^H h_k as a column
        ref += (1 + fp.u[k]) * abs(fp.delta[k]) ** 2 * np.outer(h, h.conj())
    assert np.max(np.abs(fp.D1 - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
    np.testing.assert_allclose(fp.D1, fp.D1.conj().T)
    for D in fp.D2:
        np.testing.assert_allclose(D, D.conj().T)
        assert np.linalg.eigvalsh(D).min() >= -1e-12 * max(1.0, np.abs(D).max())
    np.testing.assert_allclose(fp.D3, np.outer(chan.a_t[IDX], chan.a_t[IDX].conj()))
    assert fp.rho == pytest.approx(radar_threshold(chan, 1.0))


# ---------------------------------------------------------------- subproblems

def test_subproblem_unconstrained():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    B = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    W = solve_precoder_subproblem(M, B, 5.0, 0.0)
    if lin(math.sqrt(5) * M / np.linalg.norm(M), B) >= 0:
        np.testing.assert_allclose(W, math.sqrt(5) * M / np.linalg.norm(M))


def test_subproblem_collinear():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    W = solve_precoder_subproblem(M, 2 * M, 4.0, 1.0)
    np.testing.assert_allclose(W, 2 * M / np.linalg.norm(M))
    with pytest.raises(InfeasibleError):
        solve_precoder_subproblem(M, 2 * M, 4.0, 1e6)


@pytest.mark.parametrize("seed", range(20))
def test_subproblem_vs_projected_gradient(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    B = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    P = rng.uniform(0.5, 5)
    rho = rng.uniform(0, 0.95) * 2 * math.sqrt(P) * np.linalg.norm(B)
    W = solve_precoder_subproblem(M, B, P, rho)
    assert np.linalg.norm(W) ** 2 == pytest.approx(P, rel=1e-9)
    assert lin(W, B) >= rho * (1 - 1e-9) - 1e-12
    V = projected_gradient(M, B, P, rho)
    assert lin(V, M) <= lin(W, M) + 1e-4 * abs(lin(W, M))


def test_subproblem_infeasible():
    B = np.ones((2, 2), dtype=complex)
    with pytest.raises(InfeasibleError) as exc:
        solve_precoder_subproblem(B, B, 1.0, 100.0)
    assert exc.value.required == 100.0


@pytest.mark.parametrize("seed", range(15))
def test_quadratic_subproblem_kkt(seed):
    rng = np.random.default_rng(seed)
    n, K = 5, 3
    A = []
    for _ in range(K):
        X = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
        A.append(X @ X.conj().T)
    A = np.array(A)
    C = rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))
    B = rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))
    P = rng.uniform(0.5, 3)
    rho = rng.uniform(0, 1) * 2 * math.sqrt(P) * np.linalg.norm(B)
    W = solve_quadratic_subproblem(A, C, B, P, rho)

    def obj(V):
        return lin(V, C) - sum(np.vdot(V[:, j], A[j] @ V[:, j]).real for j in range(K))

    assert np.linalg.norm(W) ** 2 <= P * (1 + 1e-9)
    assert lin(W, B) >= rho - 1e-9
    # no feasible random perturbation improves on the solution
    for _ in range(300):
        V = W + 0.05 * (rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K)))
        if np.linalg.norm(V) ** 2 <= P and lin(V, B) >= rho:
            assert obj(V) <= obj(W) + 1e-9 * max(1, abs(obj(W)))


def test_sca_linear_case_one_step():
    chan = random_channel(7)
    W = random_precoder(np.random.default_rng(0), 6, 4, 10.0)
    fp = assemble_surrogate(update_auxiliaries(chan, IDX, W), chan, 0.0)
    fp.D1[:] = 0
    fp.D2[:] = 0
    res = sca_precoder(fp, W, 10.0, SolverOptions(zeta=0.0))
    C = fp.C1 + fp.C2
    np.testing.assert_allclose(res.W, math.sqrt(10) * C / np.linalg.norm(C), atol=1e-10)
    assert res.iterations == 1


def test_sca_single_user_closed_form():
    chan = random_channel(8, K=1)
    P = 10.0
    W = random_precoder(np.random.default_rng(1), 6, 1, P)
    fp = assemble_surrogate(update_auxiliaries(chan, IDX, W), chan, 0.0)
    res = sca_precoder(fp, W, P, SolverOptions(zeta=0.0))
    A = fp.D1 + fp.D2[0]
    c = (fp.C1 + fp.C2)[:, 0]
    s, V = np.linalg.eigh(A)
    p = V.conj().T @ c
    live = s > 1e-10 * s.max()  # c lies in the range of A up to roundoff
    s, p, V = s[live], p[live], V[:, live]
    if np.sum(np.abs(p / s) ** 2) <= P:
        lam = 0.0
    else:
        lo, hi = 0.0, 1.0
        while np.sum(np.abs(p / (s + hi)) ** 2) > P:
            hi *= 2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if np.sum(np.abs(p / (s + mid)) ** 2) > P else (lo, mid)
        lam = hi
    w = V @ (p / (s + lam))
    cos = abs(np.vdot(w, res.W[:, 0])) / (np.linalg.norm(w) * np.linalg.norm(res.W[:, 0]))
    assert cos >= 0.999


@pytest.mark.parametrize("seed", range(5))
def test_sca_monotone(seed):
    chan = random_channel(seed)
    P = 100.0
    rho = radar_threshold(chan, 1.0)
    W = restore_radar(random_precoder(np.random.default_rng(seed), 6, 4, P), chan.a_t[IDX], rho, P)
    fp = assemble_surrogate(update_auxiliaries(chan, IDX, W), chan, 1.0)
    res = sca_precoder(fp, W, P, SolverOptions(zeta=1.0))
    assert np.all(np.diff(res.values) >= -1e-8)
    assert np.sum(np.abs(chan.a_t[IDX].conj() @ res.W) ** 2) >= rho * (1 - 1e-9)
    assert np.linalg.norm(res.W) ** 2 <= P * (1 + 1e-9)


def test_restore_radar():
    chan = random_channel(9)
    a = chan.a_t[IDX]
    W = random_precoder(np.random.default_rng(2), 6, 4, 10.0)
    rho = 0.8 * 10.0 * 6
    V = restore_radar(W, a, rho, 10.0)
    assert np.sum(np.abs(a.conj() @ V) ** 2) >= rho
    assert np.linalg.norm(V) ** 2 == pytest.approx(10.0)
    with pytest.raises(InfeasibleError):
        restore_radar(W, a, 61.0 * 10.0, 10.0)


# ---------------------------------------------------------------- port selection

def test_port_utility_matches_surrogate():
    chan = random_channel(10)
    W = random_precoder(np.random.default_rng(3), 6, 4, 50.0)
    fp = assemble_surrogate(update_auxiliaries(chan, IDX, W), chan, 1.0)
    V = random_precoder(np.random.default_rng(4), 6, 4, 50.0)
    r = np.zeros(chan.n_ports)
    r[IDX] = 1
    U = port_utility(fp, chan, embed(V, IDX, chan.n_ports), r)
    assert U == pytest.approx(surrogate_value(fp, V), abs=1e-9 * max(1, abs(U)))


def test_port_utility_zero_auxiliaries_and_inactive_ports():
    chan = random_channel(11)
    W = random_precoder(np.random.default_rng(5), 6, 4, 50.0)
    fp = update_auxiliaries(chan, IDX, W)
    r = np.zeros(chan.n_ports)
    r[IDX] = 1
    Wf = embed(W, IDX, chan.n_ports)
    base = port_utility(fp, chan, Wf, r)
    inactive = [p for p in range(chan.n_ports) if p not in IDX][:2]
    chan.H[:, inactive] = chan.H[:, inactive[::-1]]
    chan.a_t[inactive] = chan.a_t[inactive[::-1]]
    assert port_utility(fp, chan, Wf, r) == pytest.approx(base, rel=1e-12)
    fp.u[:] = 0
    fp.delta[:] = 0
    fp.eve_lin[:] = 0
    fp.eve_quad[:] = 0
    assert port_utility(fp, chan, Wf, r) == 0.0


def test_gamma_scores_properties():
    chan = random_channel(12)
    W = random_precoder(np.random.default_rng(6), 6, 4, 50.0)
    fp = update_auxiliaries(chan, IDX, W)
    fp.v[:] = 0
    fp.beta[:] = 0
    assert np.all(gamma_scores(fp, chan) >= 0)
    chan.H[:, 4] = 0
    chan.a_t[4] = 0
    assert update_auxiliaries(chan, IDX, W) is not None
    assert gamma_scores(update_auxiliaries(chan, IDX, W), chan)[4] == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_top_ports_solves_knapsack(seed):
    chan = random_channel(seed, K=2, ns_x=2, ns_y=4)
    idx = np.array([0, 3, 6])
    fp = update_auxiliaries(chan, idx, random_precoder(np.random.default_rng(seed), 3, 2, 10.0))
    s = gamma_scores(fp, chan)
    best = max(itertools.combinations(range(8), 3), key=lambda c: sum(s[list(c)]))
    assert sum(s[top_ports(s, 3)]) == pytest.approx(sum(s[list(best)]))


def test_top_ports_tie_lowest_index():
    assert top_ports(np.array([1.0, 2.0, 2.0, 2.0]), 2).tolist() == [1, 2]


# ---------------------------------------------------------------- full solvers

def test_jpps_all_ports_fixed():
    chan = random_channel(13, ns_x=2, ns_y=3)
    res = jpps(chan, 6, 100.0, SolverOptions(zeta=1.0))
    assert res.selection.tolist() == list(range(6))


@pytest.mark.parametrize("seed", range(3))
def test_jpps_valid_feasible_and_deterministic(seed):
    chan = random_channel(seed)
    a = jpps(chan, 6, 100.0)
    b = jpps(chan, 6, 100.0)
    assert len(set(a.selection.tolist())) == 6
    assert a.constraint_missed or a.report.radar_sinr >= 1.0 * (1 - 1e-6)
    assert np.linalg.norm(a.W) ** 2 <= 100.0 * (1 + 1e-9)
    assert np.array_equal(a.selection, b.selection) and np.array_equal(a.W, b.W)
    assert a.trace and all("sum_secrecy" in t for t in a.trace)


def test_jpps_beats_its_initial_selection():
    chan = random_channel(21)
    res = jpps(chan, 6, 100.0)
    start = initial_selection(chan, 6, 100.0)
    fixed = optimize_precoder(chan, start, 100.0, SolverOptions())
    assert res.sum_secrecy >= fixed.sum_secrecy - 1e-9


def test_jpps_infeasible_radar_floor():
    chan = random_channel(14)
    with pytest.raises(InfeasibleError) as exc:
        jpps(chan, 6, 100.0, SolverOptions(zeta=1e9))
    assert exc.value.required > exc.value.achievable


def test_jpps_random_init_needs_rng():
    chan = random_channel(15)
    with pytest.raises(ValueError):
        jpps(chan, 6, 10.0, SolverOptions(random_init=True))
    res = jpps(chan, 6, 10.0, SolverOptions(random_init=True), rng=np.random.default_rng(0))
    assert len(res.selection) == 6


def test_jpps_bad_sizes():
    chan = random_channel(16)
    with pytest.raises(ValueError):
        jpps(chan, 3, 10.0)


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(tol=0)
    with pytest.raises(ValueError):
        SolverOptions(zeta=-1)
    with pytest.raises(ValueError):
        SolverOptions(max_outer_iters=0)


def test_radar_centric_beats_jpps_beam_gain():
    chan = random_channel(17)
    P = 100.0
    rc = radar_centric(chan, 6, P, SolverOptions(r_th=0.0))
    jp = jpps(chan, 6, P)
    g_rc = np.sum(np.abs(chan.a_t[rc.selection].conj() @ rc.W) ** 2)
    g_jp = np.sum(np.abs(chan.a_t[jp.selection].conj() @ jp.W) ** 2)
    assert g_rc >= g_jp


def test_radar_centric_single_user_eigenbeam():
    chan = random_channel(18, K=1)
    rc = radar_centric(chan, 6, 10.0, SolverOptions(r_th=0.0), selection=IDX)
    a = chan.a_t[IDX]
    cos = abs(np.vdot(a, rc.W[:, 0])) / (np.linalg.norm(a) * np.linalg.norm(rc.W[:, 0]))
    assert cos >= 0.999


def test_radar_centric_secrecy_floor():
    chan = random_channel(19)
    rc = radar_centric(chan, 6, 100.0, SolverOptions(r_th=0.5))
    assert rc.sum_secrecy >= 0.5 * (1 - 1e-6)
    with pytest.raises(InfeasibleError):
        radar_centric(chan, 6, 100.0, SolverOptions(r_th=1e6))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_optimize_precoder_improves_on_start(seed):
    chan = random_channel(seed % 40)
    P = 100.0
    res = optimize_precoder(chan, IDX, P, SolverOptions(zeta=1.0))
    assert res.constraint_missed or res.report.radar_sinr >= 1 - 1e-6
    assert np.linalg.norm(res.W) ** 2 <= P * (1 + 1e-9)
    assert res.sum_secrecy >= -1e-12
