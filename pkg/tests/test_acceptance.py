"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

The lines are printed as each test runs and repeated in the terminal summary.
"""

import json
import time
from fractions import Fraction

import numpy as np
import pytest

from rhuidr import linops as lo
from rhuidr import metrics as mt
from rhuidr import model as md
from rhuidr import prox as px
from rhuidr import simulate as sm
from rhuidr.cli import main as cli_main
from rhuidr.cli import synthesize
from rhuidr.core import Dims, EndmemberLibrary, cube_from_matrix
from rhuidr.ppds import compute_stepsizes, solve

# desk-scale scene and the solver settings picked by the grid search
SCENE = dict(n1=32, n2=32, l=16, m=8, k=3)
CASE_ID = 5
LAMBDA1, LAMBDA2, ALPHA_SIGMA = 0.5, 2.0, 1.3

# regression constants frozen at the first validated run (seed 0, HTV)
FROZEN_SRE_DB = 10.5498
FROZEN_BASELINE_SRE_DB = -7.0520
FROZEN_STRIPE_CORR = 0.9573
REGRESSION_TOL_DB = 0.05
REGRESSION_TOL_CORR = 0.005


def desk_scene(seed):
    E, A0, V0 = synthesize(SCENE["n1"], SCENE["n2"], SCENE["l"], SCENE["m"], SCENE["k"], seed)
    V, truth, case = sm.make_case(V0, CASE_ID, seed)
    nl = V.dims.n * V.dims.l
    eps = md.default_epsilon(case.sigma, case.p_s, nl, ALPHA_SIGMA)
    eta = md.default_eta(case.p_s, nl)
    return E, A0, V0, V, truth, eps, eta


def desk_config(eps, eta, regularizer="htv"):
    lam2 = 0.0 if regularizer == "none" else LAMBDA2
    return md.RhuidrConfig(eps, eta, lambda1=LAMBDA1, lambda2=lam2, regularizer=regularizer)


@pytest.fixture(scope="module")
def case5():
    E, A0, V0, V, truth, eps, eta = desk_scene(0)
    t0 = time.perf_counter()
    res = md.unmix(V, E, desk_config(eps, eta))
    elapsed = time.perf_counter() - t0
    return dict(E=E, A0=A0, V0=V0, V=V, truth=truth, eps=eps, eta=eta, res=res, elapsed=elapsed)


def _all_maps(dims, omega=0.05, seed=0):
    E = np.random.default_rng(seed).random((dims.l, dims.m))
    return {
        "Dv": lo.vertical_diff_map(dims, dims.l),
        "Dh": lo.horizontal_diff_map(dims, dims.l),
        "Db": lo.band_diff_map(dims, dims.l),
        "D": lo.spatial_diff_map(dims, dims.l),
        "DoDb": lo.spatio_spectral_map(dims, dims.l),
        "C": lo.hsstv_map(dims, dims.l, omega),
        "KoE": lo.compose_with_library(lo.spatial_diff_map(dims, dims.l), E),
    }


def test_criterion_01_adjoint_suite(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    dims = Dims(16, 12, 8, 5)
    worst = 0.0
    for name, G in _all_maps(dims).items():
        for _ in range(100):
            X, Y = rng.standard_normal(G.in_shape), rng.standard_normal(G.out_shape)
            lhs, rhs = np.vdot(G(X), Y), np.vdot(X, G.adjoint(Y))
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 5
    acceptance_log(1, ok, f"adjoint identity worst relative error {worst:.2e} (<= 1e-10), "
                          f"{elapsed:.2f}s (< 5s)")
    assert ok


def test_criterion_02_norm_bounds(acceptance_log):
    t0 = time.perf_counter()
    omega = 0.05
    small = Dims(16, 16, 8, 5)
    E = np.random.default_rng(2).random((8, 5))
    sigma1 = np.linalg.norm(E, 2)
    upper = {
        "Dv": (lo.vertical_diff_map(small, 8), 2.0),
        "Dh": (lo.horizontal_diff_map(small, 8), 2.0),
        "Db": (lo.band_diff_map(small, 8), 2.0),
        "D": (lo.spatial_diff_map(small, 8), 2 * np.sqrt(2)),
        "DoDb": (lo.spatio_spectral_map(small, 8), np.sqrt(32)),
        "C": (lo.hsstv_map(small, 8, omega), np.sqrt(32 + 8 * omega ** 2)),
        "KoE": (lo.compose_with_library(lo.spatial_diff_map(small, 8), E),
                2 * np.sqrt(2) * sigma1),
    }
    fails = []
    for name, (G, bound) in upper.items():
        est = lo.power_iteration_norm(G, iters=300)
        if est > bound * (1 + 1e-12):
            fails.append(f"{name}: {est:.6f} > {bound:.6f}")
    big = Dims(64, 64, 16)
    tight = {
        "Dv": (lo.vertical_diff_map(big, 1), 2.0),
        "Dh": (lo.horizontal_diff_map(big, 1), 2.0),
        "Db": (lo.band_diff_map(big, 16), 2.0),
        "D": (lo.spatial_diff_map(big, 1), 2 * np.sqrt(2)),
        "DoDb": (lo.spatio_spectral_map(big, 16), np.sqrt(32)),
        "C": (lo.hsstv_map(big, 16, omega), np.sqrt(32 + 8 * omega ** 2)),
    }
    ratios = {}
    for name, (G, bound) in tight.items():
        est = lo.power_iteration_norm(G, iters=300)
        ratios[name] = est / bound
        if est < 0.9 * bound or est > bound * (1 + 1e-12):
            fails.append(f"{name} on 64x64: ratio {est / bound:.4f}")
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 10
    low = min(ratios.values())
    acceptance_log(2, ok, f"all estimates <= bounds, 64x64 tightness min ratio {low:.4f} (>= 0.9), "
                          f"{elapsed:.2f}s (< 10s)" + (f"; failures: {fails}" if fails else ""))
    assert ok


def test_criterion_03_prox_suite(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    gamma = 0.6
    V = rng.standard_normal((5, 8))
    shape = (5, 8)
    l12 = lambda Y, ax: np.sqrt((Y * Y).sum(axis=ax)).sum()
    ind = lambda ok: 0.0 if ok else np.inf
    cases = {
        # name: (prox, f, map a perturbed point into dom f)
        "nonneg": (px.prox_nonneg, lambda Y: ind((Y >= 0).all()), lambda Y: np.maximum(Y, 0)),
        "l1": (px.prox_l1, lambda Y: np.abs(Y).sum(), lambda Y: Y),
        "l12_rows": (px.prox_l12_rows, lambda Y: l12(Y, 1), lambda Y: Y),
        "l12_cols": (px.prox_l12_cols, lambda Y: l12(Y, 0), lambda Y: Y),
        "fro_ball": (lambda X, g: px.project_fro_ball(X, V, 1.0),
                     lambda Y: ind(np.linalg.norm(Y - V) <= 1.0 + 1e-12),
                     lambda Y: px.project_fro_ball(Y, V, 1.0)),
        "l1_ball": (lambda X, g: px.project_l1_ball(X, 3.0),
                    lambda Y: ind(np.abs(Y).sum() <= 3.0 * (1 + 1e-12)),
                    lambda Y: px.project_l1_ball_sort(Y, 3.0)),
        "zero_set": (px.prox_zero_set, lambda Y: ind(not Y.any()), lambda Y: 0 * Y),
    }
    fails = []
    for name, (prox, f, into_dom) in cases.items():
        X = 2 * rng.standard_normal(shape)
        P = prox(X, gamma)
        obj = lambda Y: f(Y) + np.sum((X - Y) ** 2) / (2 * gamma)
        best = obj(P)
        for _ in range(1000):
            Q = into_dom(P + 10.0 ** rng.uniform(-4, 0) * rng.standard_normal(shape))
            if obj(Q) < best - 1e-12:
                fails.append(f"{name} optimality")
                break
        for _ in range(100):
            A, B = 2 * rng.standard_normal((2, *shape))
            if np.linalg.norm(prox(A, gamma) - prox(B, gamma)) > np.linalg.norm(A - B) * (1 + 1e-12):
                fails.append(f"{name} nonexpansive")
                break
    worst = 0.0
    for k in range(1000):
        size = int(rng.integers(1, 2000))
        kind = k % 4
        if kind == 0:
            x = rng.standard_normal(size)
        elif kind == 1:
            x = rng.choice([-1.5, -0.5, 0.0, 0.5, 1.5], size)
        elif kind == 2:
            x = np.full(size, rng.uniform(-2, 2))
        else:
            x = rng.laplace(size=size) * (rng.random(size) < 0.2)
        total = np.abs(x).sum()
        r = 1.0 if total == 0 else (total if k % 9 == 0 else rng.uniform(0.001, 1.1) * total)
        worst = max(worst, np.abs(px.project_l1_ball(x, r, np.random.default_rng(k))
                                  - px.project_l1_ball_sort(x, r)).max())
    elapsed = time.perf_counter() - t0
    ok = not fails and worst <= 1e-10 and elapsed < 30
    acceptance_log(3, ok, f"optimality + nonexpansiveness for {len(cases)} prox maps, "
                          f"l1-ball vs sort max deviation {worst:.1e} (<= 1e-10), {elapsed:.1f}s (< 30s)"
                          + (f"; failures: {fails}" if fails else ""))
    assert ok


def test_criterion_04_stepsizes(acceptance_log):
    dims = Dims(8, 8, 4)
    V = cube_from_matrix(np.zeros((4, 64)), dims)
    E = EndmemberLibrary(np.eye(4, 3))  # sigma_1 = 1
    omega = 0.05
    expect = {"htv": Fraction(1, 18), "sstv": Fraction(1, 42), "hsstv": None}
    got = {}
    checks = []
    for reg in ("htv", "sstv", "hsstv"):
        st = compute_stepsizes(md.build_problem(V, E, md.RhuidrConfig(1.0, 1.0, regularizer=reg),
                                                sigma_max=1.0))
        got[reg] = st
        checks.append(st.dual == (1 / 3,) * 5)
        checks.append(st.primal[1:] == (1.0, 1 / 5))
        if expect[reg] is not None:
            checks.append(st.primal[0] == float(expect[reg]))
        else:
            want = 1 / (9 + 32 + 8 * omega ** 2 + 1)
            checks.append(abs(st.primal[0] - want) <= 1e-15 * want)
    ok = all(checks)
    acceptance_log(4, ok, f"gamma2 = {got['htv'].dual[0]!r} (1/3); gamma_A htv {got['htv'].primal[0]!r} "
                          f"(1/18), sstv {got['sstv'].primal[0]!r} (1/42), hsstv "
                          f"{got['hsstv'].primal[0]!r}; gamma_S = 1, gamma_L = 1/5")
    assert ok


def _non_increasing(x, jitter=0.01):
    """Every value stays within ``jitter`` of the running minimum before it."""
    x = np.asarray(x)
    runmin = np.minimum.accumulate(x)
    return bool(np.all(x[1:] <= runmin[:-1] * (1 + jitter)))


def test_criterion_05_convergence(case5, acceptance_log):
    res, V, E, eps, eta = case5["res"], case5["V"], case5["E"], case5["eps"], case5["eta"]
    dims = V.dims
    fid = np.linalg.norm(V.data - E.matrix @ res.A - res.S - res.L)
    s_l1 = np.abs(res.S).sum()
    mav_dv = np.abs(lo.diff_v(res.L, dims)).mean()
    mav_l = np.abs(res.L).mean()
    recs = res.trace.records
    tail = recs[len(recs) // 5:]
    mono_fid = _non_increasing([r["fidelity_dist"] for r in tail])
    mono_mav = _non_increasing([r["stripe_mav"] for r in tail])
    parts = {
        "terminated by tol": res.termination_reason == "tol" and res.trace.iterations <= 50000,
        "A >= 0": bool((res.A >= 0).all()),
        "fidelity": fid <= eps * (1 + 1e-3),
        "l1(S)": s_l1 <= eta * (1 + 1e-3),
        "flatness": mav_dv <= 1e-3 * mav_l + 1e-9,
        "trace monotone": mono_fid and mono_mav,
        "runtime": case5["elapsed"] < 600,
    }
    ok = all(parts.values())
    failed = [k for k, v in parts.items() if not v]
    acceptance_log(5, ok, f"{res.trace.iterations} iterations ({res.termination_reason}), "
                          f"fid/eps {fid / eps:.5f} (<= 1.001), l1(S)/eta {s_l1 / eta:.5f} (<= 1.001), "
                          f"MAV(Dv L)/MAV(L) {mav_dv / mav_l:.2e} (<= 1e-3), traces monotone "
                          f"{mono_fid and mono_mav}, {case5['elapsed']:.0f}s (< 600s)"
                          + (f"; failing: {failed}" if failed else ""))
    assert ok, failed


def least_squares_baseline(V, E):
    A, *_ = np.linalg.lstsq(E.matrix, V.data, rcond=None)
    return np.maximum(A, 0.0)


def test_criterion_06_recovery_direction(case5, acceptance_log):
    A0 = case5["A0"]
    sre = mt.sre(A0, case5["res"].A)
    base = mt.sre(A0, least_squares_baseline(case5["V"], case5["E"]))
    gain_ok = sre - base >= 5.0
    frozen_ok = (FROZEN_SRE_DB is None or abs(sre - FROZEN_SRE_DB) <= REGRESSION_TOL_DB) and \
        (FROZEN_BASELINE_SRE_DB is None or abs(base - FROZEN_BASELINE_SRE_DB) <= REGRESSION_TOL_DB)
    ok = gain_ok and frozen_ok
    acceptance_log(6, ok, f"SRE {sre:.3f} dB vs least-squares baseline {base:.3f} dB, gain "
                          f"{sre - base:.2f} dB (>= 5); frozen {FROZEN_SRE_DB} / "
                          f"{FROZEN_BASELINE_SRE_DB} dB")
    assert ok


def test_criterion_07_ablation(case5, acceptance_log):
    rows, ok = [], True
    for seed in (0, 1, 2):
        E, A0, V0, V, _, eps, eta = desk_scene(seed)
        full = case5["res"] if seed == 0 else md.unmix(V, E, desk_config(eps, eta))
        bare = md.unmix(V, E, desk_config(eps, eta, regularizer="none"))
        m_full = (mt.mpsnr(V0, full.reconstructed), mt.mssim(V0, full.reconstructed), mt.sre(A0, full.A))
        m_bare = (mt.mpsnr(V0, bare.reconstructed), mt.mssim(V0, bare.reconstructed), mt.sre(A0, bare.A))
        ok &= m_full[0] > m_bare[0] and m_full[1] > m_bare[1] and m_full[2] >= m_bare[2]
        rows.append(f"seed {seed}: MPSNR {m_full[0]:.2f}/{m_bare[0]:.2f}, MSSIM {m_full[1]:.3f}/"
                    f"{m_bare[1]:.3f}, SRE {m_full[2]:.2f}/{m_bare[2]:.2f}")
    acceptance_log(7, ok, "lambda2 > 0 vs lambda2 = 0 -- " + "; ".join(rows))
    assert ok


def test_criterion_08_stripe_separation(case5, acceptance_log):
    res, dims, L_true = case5["res"], case5["V"].dims, case5["truth"]["L"]
    mav_dv = np.abs(lo.diff_v(res.L, dims)).mean()
    mav_l = np.abs(res.L).mean()
    flat_ok = mav_dv <= 1e-3 * mav_l + 1e-9
    col_means = lambda L: L.reshape(dims.l, dims.n2, dims.n1).mean(axis=2).ravel()
    corr = float(np.corrcoef(col_means(res.L), col_means(L_true))[0, 1])
    corr_ok = corr >= 0.8
    frozen_ok = FROZEN_STRIPE_CORR is None or abs(corr - FROZEN_STRIPE_CORR) <= REGRESSION_TOL_CORR
    ok = flat_ok and corr_ok and frozen_ok
    acceptance_log(8, ok, f"MAV(Dv L) {mav_dv:.3e} vs 1e-3 MAV(L) + 1e-9 = {1e-3 * mav_l + 1e-9:.3e} "
                          f"({'ok' if flat_ok else 'exceeded'}), stripe correlation {corr:.4f} (>= 0.8), "
                          f"frozen {FROZEN_STRIPE_CORR}")
    assert ok


def _median_iteration_time(n2, iters=500):
    E, A0, V0 = synthesize(32, n2, 16, 8, 3, 0)
    V, truth, case = sm.make_case(V0, CASE_ID, 0)
    nl = V.dims.n * V.dims.l
    cfg = desk_config(md.default_epsilon(case.sigma, case.p_s, nl, ALPHA_SIGMA),
                      md.default_eta(case.p_s, nl))
    problem = md.build_problem(V, E, cfg)
    stamps = []
    solve(problem, max_iter=iters, stop=lambda new, old: 1.0,
          hook=lambda t, Y, Z: stamps.append(time.perf_counter()), stride=1)
    return float(np.median(np.diff(stamps)))


def test_criterion_09_complexity_scaling(acceptance_log):
    _median_iteration_time(32, 50)  # warm-up
    t_n = _median_iteration_time(32)
    t_2n = _median_iteration_time(64)
    ratio = t_2n / t_n
    ok = ratio <= 2.5
    acceptance_log(9, ok, f"median per-iteration time {t_n * 1e3:.3f} ms at n = 1024, "
                          f"{t_2n * 1e3:.3f} ms at n = 2048, ratio {ratio:.2f} (<= 2.5)")
    assert ok


def test_criterion_10_determinism(tmp_path, acceptance_log):
    manifest = {
        "seed": 0,
        "scene": {"n1": SCENE["n1"], "n2": SCENE["n2"], "bands": SCENE["l"],
                  "library_size": SCENE["m"], "active": SCENE["k"]},
        "case_id": CASE_ID,
        "solver": {"reg": "htv", "lambda1": LAMBDA1, "lambda2": LAMBDA2,
                   "alpha_sigma": ALPHA_SIGMA},
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    codes = [cli_main(["run", str(path), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    files = sorted(f.relative_to(tmp_path / "a") for f in (tmp_path / "a").rglob("*") if f.is_file())
    differ = [str(f) for f in files
              if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    ok = codes == [0, 0] and len(files) > 0 and not differ
    acceptance_log(10, ok, f"two run invocations, {len(files)} output files, "
                           f"{len(differ)} differing" + (f": {differ}" if differ else ""))
    assert ok
