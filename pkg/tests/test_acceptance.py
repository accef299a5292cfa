"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The heavy criteria (5, 7, 8, 9, 11) take minutes to tens of minutes on one core.
Set UNRAVEL_FULL=1 to also run the adaptive enumeration of criterion 5 at full depth.
"""

import csv
import math
import os

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from dense_oracle import dense_dm_evolution
from scipy.linalg import expm

from unravel.analysis import DataTable, curve_crossings, fss_collapse, synthetic_table
from unravel.channels import (
    ChannelKind,
    ChannelSpec,
    SU2Params,
    apply_channel_dm,
    channel_equivalence,
    choi_distance,
    conventional_kraus,
    dilation_isometry,
    first_order_dephasing_ops,
    minimal_kraus,
    rotate_kraus,
    spin_optimized_kraus,
    su2_matrix,
    trace_ancilla,
)
from unravel.cli import main
from unravel.mps import MFIMConfig, TruncationPolicy, init_product_mps, run_mfim_mps_trajectory, trotter_step_mfim
from unravel.sampling import make_rng
from unravel.spin_model import ampdamp_u_analytic, compute_u, critical_ratio, dephasing_u_analytic
from unravel.statevector import (
    RucConfig,
    mfim_hamiltonian_dense,
    outcome_averaged_dm,
    run_mfim_trajectory_exact,
    run_ruc_trajectory,
    sample_ruc_circuit,
    zero_state,
)

FULL = os.environ.get("UNRAVEL_FULL") == "1"


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_critical_ratio():
    err = abs(critical_ratio(2) - (3 + math.sqrt(34)) / 5)
    report(1, err <= 1e-12, f"|r(2) - (3+sqrt34)/5| = {err:.1e}")


def test_criterion_02_table_s1(tmp_path):
    paper = {
        ("dephasing", "conventional"): 0.3558,
        ("dephasing", "optimized"): 0.0685,
        ("depolarizing", "conventional"): 0.4386,
        ("depolarizing", "optimized"): 0.0457,
        ("amplitude_damping", "conventional"): 0.4205,
        ("amplitude_damping", "optimized"): 0.1324,
    }
    assert main(["pc2", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "pc2.csv", newline="") as fh:
        rows = {(r["kind"], r["basis"]): float(r["pc2"]) for r in csv.DictReader(fh)}
    worst = []
    ok = set(rows) == set(paper)
    for key, ref in paper.items():
        tol = 1e-3 if key == ("depolarizing", "optimized") else 5e-4
        dev = abs(rows.get(key, np.inf) - ref)
        ok &= dev <= tol
        worst.append(dev / tol)
    report(2, ok, f"six p_c^(2) values, max deviation / tolerance = {max(worst):.2f}")


def test_criterion_03_analytic_u():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        p, theta, phi, psi = rng.uniform(0, 1), *rng.uniform(0, 2 * np.pi, 3)
        u = su2_matrix(SU2Params(theta, phi, psi))
        deph = compute_u(rotate_kraus(minimal_kraus(ChannelSpec(ChannelKind.DEPHASING, p)), u))
        amp = compute_u(rotate_kraus(minimal_kraus(ChannelSpec(ChannelKind.AMPLITUDE_DAMPING, p)), u))
        worst = max(
            worst,
            np.abs(np.subtract(dephasing_u_analytic(p, theta, phi), deph)).max(),
            np.abs(np.subtract(ampdamp_u_analytic(p, theta), amp)).max(),
        )
    report(3, worst <= 1e-12, f"100 random tuples per channel, max |analytic - direct| = {worst:.1e}")


def test_criterion_04_channel_identities():
    rng = np.random.default_rng(4)
    comp = choi = dil = 0.0
    equivalent = True
    for kind in ChannelKind:
        for p in (0.0, 0.25, 0.5, 0.75, 1.0):
            spec = ChannelSpec(kind, p)
            sets = [conventional_kraus(spec), minimal_kraus(spec), spin_optimized_kraus(spec)]
            comp = max(comp, *(k.completeness_residual() for k in sets))
            for i in range(3):
                for j in range(i + 1, 3):
                    equivalent &= channel_equivalence(sets[i], sets[j], atol=1e-8)
                    choi = max(choi, choi_distance(sets[i], sets[j]))
            g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            rho = g @ g.conj().T / np.trace(g @ g.conj().T)
            for k in sets:
                v = dilation_isometry(k)
                dil = max(dil, np.abs(trace_ancilla(v @ rho @ v.conj().T, 2, k.n) - apply_channel_dm(k, rho)).max())
    ok = comp <= 1e-10 and equivalent and dil <= 1e-12
    report(4, ok, f"completeness {comp:.1e}, max Choi distance {choi:.1e}, dilation {dil:.1e}")


@pytest.mark.slow
def test_criterion_05_unraveling_independence():
    # full 2^24-leaf enumeration for the fixed unravelings; the adaptive one re-optimizes
    # at every leaf, so by default it is enumerated over the first two layers (2^12 leaves)
    L, depth = 6, 4
    spec = ChannelSpec(ChannelKind.AMPLITUDE_DAMPING, 0.3)
    circuit = sample_ruc_circuit(L, depth, "periodic", make_rng(5, 0, 0))
    exact = dense_dm_evolution(circuit, L, minimal_kraus(spec))
    conv = outcome_averaged_dm(circuit, L, spec, "conventional")
    spin = outcome_averaged_dm(circuit, L, spec, "spin_optimized")
    d_fixed = max(np.abs(conv - spin).max(), np.abs(conv - exact).max())
    heur_depth = depth if FULL else 2
    short = circuit[:heur_depth]
    heur = outcome_averaged_dm(short, L, spec, "heuristic", max_branches=2 ** (heur_depth * L))
    ref = conv if FULL else outcome_averaged_dm(short, L, spec, "conventional")
    d_heur = max(np.abs(heur - ref).max(), np.abs(heur - dense_dm_evolution(short, L, minimal_kraus(spec))).max())
    ok = d_fixed <= 1e-10 and d_heur <= 1e-10
    report(
        5, ok,
        f"L=6 T=4 conventional vs spin-optimized vs channel {d_fixed:.1e}; heuristic (T={heur_depth}) {d_heur:.1e}",
    )


@pytest.mark.slow
def test_criterion_06_engine_cross_check():
    full = TruncationPolicy(chi_max=4096)
    worst = 0.0
    same = True
    cases = [(12, "conventional", 2.0), (12, "spin_optimized", 2.0), (12, "heuristic", 1.0)]
    for L, mode, total_time in cases:
        cfg = MFIMConfig(L=L, gamma=0.3, dt=0.05, total_time=total_time)
        for seed in (1, 2):
            dense = run_mfim_trajectory_exact(cfg, seed=seed, unraveling=mode, renyi_indices=(1.0, 2.0))
            run = run_mfim_mps_trajectory(cfg, full, seed=seed, mode=mode, renyi_indices=(1.0, 2.0))
            same &= run.outcomes == dense.outcomes
            for n in (1.0, 2.0):
                worst = max(worst, np.abs(run.entropies[n] - np.array(dense.extra["series"][n])).max())
    report(6, same and worst <= 1e-8, f"identical outcomes: {same}, max entropy difference {worst:.1e}")


def ruc_sweep(unraveling, ps, sizes=(8, 12, 16), n_traj=200, seed=7):
    samples = {}
    for a, L in enumerate(sizes):
        for b, p in enumerate(ps):
            cfg = RucConfig(L=L, p=p, unraveling=unraveling, renyi_indices=(1.0,))
            base = (a * len(ps) + b) * n_traj
            samples[(L, p, 1.0)] = [run_ruc_trajectory(cfg, seed, base + k).i3[1.0] for k in range(n_traj)]
    return DataTable.from_samples(samples)


@pytest.mark.slow
def test_criterion_07_ruc_transition():
    tables = {
        "conventional": ruc_sweep("conventional", [0.10, 0.14, 0.18, 0.22, 0.26]),
        "spin_optimized": ruc_sweep("spin_optimized", [0.03, 0.06, 0.09, 0.12, 0.15]),
    }
    for name, t in tables.items():
        for L, p, m, se in zip(t.L, t.rate, t.mean, t.std_error):
            print(f"{name} L={L} p={p:.2f} I_3={m:.4f} +- {se:.4f}")
    conv, spin = (curve_crossings(t) for t in tables.values())
    ok = all(0.12 <= x <= 0.22 for *_, x in conv) and all(0.05 <= x <= 0.13 for *_, x in spin)
    fmt = ", ".join
    report(
        7, ok,
        "vN I_3 crossings conventional ["
        + fmt(f"{a}/{b}: {x:.3f}" for a, b, x in conv)
        + "] spin-optimized ["
        + fmt(f"{a}/{b}: {x:.3f}" for a, b, x in spin)
        + "]",
    )


@pytest.mark.slow
def test_criterion_08_heuristic_dominance():
    # I_3 is negative on the volume-law side, so "lower" is read as smaller magnitude
    n_traj = 100
    stats = {}
    for mode in ("conventional", "heuristic"):
        cfg = RucConfig(L=12, p=0.12, unraveling=mode, renyi_indices=(1.0,))
        recs = [run_ruc_trajectory(cfg, 11, k) for k in range(n_traj)]
        i3 = np.abs([r.i3[1.0] for r in recs])
        s = np.array([r.entropies[1.0] for r in recs])
        stats[mode] = [(x.mean(), x.std(ddof=1) / np.sqrt(n_traj)) for x in (i3, s)]
    ok = True
    parts = []
    for k, name in enumerate(("|I_3|", "S_half")):
        (mh, eh), (mc, ec) = stats["heuristic"][k], stats["conventional"][k]
        margin = 3 * math.hypot(eh, ec)
        ok &= mh <= mc - margin
        parts.append(f"{name} heuristic {mh:.3f} vs conventional {mc:.3f} (3 SE = {margin:.3f})")
    report(8, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_09_mfim_bond_dimension():
    def late_entropy(gamma, chi, total_time, n_traj):
        cfg = MFIMConfig(L=48, gamma=gamma, dt=0.05, total_time=total_time)
        vals = []
        for k in range(n_traj):
            run = run_mfim_mps_trajectory(cfg, TruncationPolicy(chi_max=chi), seed=9, stream=k, mode="spin_optimized")
            e = run.entropies[1.0]
            vals.append(e[len(e) // 2:].mean())
        return float(np.mean(vals))

    s32, s64 = late_entropy(0.3, 32, 20.0, 2), late_entropy(0.3, 64, 20.0, 2)
    w16, w64 = late_entropy(0.02, 16, 40.0, 2), late_entropy(0.02, 64, 40.0, 2)
    rel = abs(s64 - s32) / s64
    ok = rel < 0.02 and w64 > 1.1 * w16
    report(
        9, ok,
        f"gamma=0.3: S(32)={s32:.3f} S(64)={s64:.3f} rel diff {rel:.2%}; "
        f"gamma=0.02: S(16)={w16:.3f} S(64)={w64:.3f} ratio {w64 / w16:.2f}",
    )


def test_criterion_10_trotter_consistency():
    gamma = 0.3
    dts = np.array([0.1, 0.05, 0.025])
    dist = [choi_distance(first_order_dephasing_ops(gamma, dt), minimal_kraus(ChannelSpec(ChannelKind.DEPHASING, 2 * gamma * dt))) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(dist), 1)[0]
    cfg = MFIMConfig(L=8, gamma=0.0, dt=0.05, total_time=1.0)
    mps = init_product_mps(8)
    rng = make_rng(0)
    for step in range(20):
        trotter_step_mfim(mps, cfg, TruncationPolicy(chi_max=4096), rng, "conventional", step=step)
    exact = expm(-1j * mfim_hamiltonian_dense(cfg)) @ zero_state(8).reshape(-1)
    fid = abs(np.vdot(exact, mps.to_dense().reshape(-1))) ** 2
    ok = abs(slope - 2) <= 0.2 and fid >= 1 - 5e-3
    report(10, ok, f"Choi distance exponent {slope:.3f}; Trotter fidelity {fid:.5f}")


@pytest.mark.slow
def test_criterion_11_collapse_coverage():
    hits = np.zeros((100, 2), dtype=bool)
    for rep in range(100):
        res = fss_collapse(synthetic_table(np.random.default_rng(1000 + rep)), n_boot=200, seed=rep)
        hits[rep] = res.p_c_ci[0] <= 0.15 <= res.p_c_ci[1], res.nu_ci[0] <= 1.3 <= res.nu_ci[1]
    both = int(hits.all(axis=1).sum())
    report(
        11, both >= 95,
        f"(p_c, nu) = (0.15, 1.3) inside both 95% CIs in {both}/100 repetitions "
        f"(p_c alone {hits[:, 0].sum()}, nu alone {hits[:, 1].sum()})",
    )
