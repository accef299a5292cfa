"""Adaptive, state-dependent choice of the unraveling basis for one noisy qubit.

Given the reduced density matrix of the qubit about to decohere, pick the
rotation of the minimal Kraus set that minimizes the outcome-averaged von
Neumann entropy of that qubit. For a globally pure trajectory state this is the
average entanglement between the qubit and the rest of the system.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .channels import (
    ChannelSpec,
    KrausSet,
    N_SU4_PARAMS,
    check_density_matrix,
    minimal_kraus,
    rotate_kraus,
    su2_matrices,
    su2_matrix,
    su4_matrix,
    SU2Params,
)
from .numerics import herm_eig

P_MIN = 1e-12
TIE_TOL = 1e-10
GRID = 24
N_REFINE = 3
N_STARTS_SU4 = 8


@dataclass(frozen=True)
class LocalDM:
    rho: np.ndarray

    def __post_init__(self):
        rho = check_density_matrix(self.rho)
        if rho.shape != (2, 2):
            raise ValueError("LocalDM must be a single-qubit density matrix")
        object.__setattr__(self, "rho", rho)


@dataclass(frozen=True)
class HeuristicChoice:
    rotation: np.ndarray
    objective: float


def _entropy_from_eigs(w):
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def outcome_average_entropy(kset: KrausSet, dm) -> float:
    """sum_a p_a S(K_a rho K_a^+ / p_a), natural log; negligible outcomes drop out."""
    rho = dm.rho if isinstance(dm, LocalDM) else np.asarray(dm, dtype=complex)
    total = 0.0
    for k in kset.ops:
        out = k @ rho @ k.conj().T
        p = out.trace().real
        if p < P_MIN:
            continue
        w = herm_eig(out / p).eigenvalues
        total += p * _entropy_from_eigs(np.clip(w, 0, None))
    return total


def _binary_entropy(lam):
    lam = np.clip(lam, 0.0, 0.5)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(lam * np.log(lam) + (1 - lam) * np.log1p(-lam))
    return np.where(lam > 0, h, 0.0)


def average_entropy_qubit(ops, rho) -> np.ndarray:
    """Vectorized objective for qubit Kraus operators of shape (..., N, 2, 2).

    Uses det(K rho K^+) = |det K|^2 det(rho): each branch's spectrum follows from
    its trace and determinant alone.
    """
    ops = np.asarray(ops)
    rho = np.asarray(rho)
    kr = ops @ rho
    p = np.einsum("...ij,...ij->...", kr, ops.conj()).real
    detk = ops[..., 0, 0] * ops[..., 1, 1] - ops[..., 0, 1] * ops[..., 1, 0]
    detr = max((rho[0, 0] * rho[1, 1] - rho[0, 1] * rho[1, 0]).real, 0.0)
    good = p > P_MIN
    ps = np.where(good, p, 1.0)
    x = np.clip(1 - 4 * np.abs(detk) ** 2 * detr / ps**2, 0.0, 1.0)
    lam = 0.5 * (1 - np.sqrt(x))
    return np.sum(np.where(good, p * _binary_entropy(lam), 0.0), axis=-1)


def _branch_entropy(k00, k01, k10, k11, r00, r01, r10, r11, detr):
    m00 = k00 * r00 + k01 * r10
    m01 = k00 * r01 + k01 * r11
    m10 = k10 * r00 + k11 * r10
    m11 = k10 * r01 + k11 * r11
    p = (m00 * k00.conjugate() + m01 * k01.conjugate() + m10 * k10.conjugate() + m11 * k11.conjugate()).real
    if p <= P_MIN:
        return 0.0
    dk = k00 * k11 - k01 * k10
    x = 1.0 - 4.0 * (dk.real * dk.real + dk.imag * dk.imag) * detr / (p * p)
    lam = 0.5 * (1.0 - math.sqrt(min(max(x, 0.0), 1.0)))
    if lam <= 0.0:
        return 0.0
    return -p * (lam * math.log(lam) + (1.0 - lam) * math.log1p(-lam))


def _su2_objective(x, b, r):
    """Scalar objective at su2(theta, phi, 0); ``b`` and ``r`` are flattened python complex tuples."""
    c, s = math.cos(x[0]), math.sin(x[0])
    e = complex(math.cos(x[1]), math.sin(x[1]))
    u00, u01, u10, u11 = e * c, 1j * s / e, 1j * e * s, c / e
    r00, r01, r10, r11, detr = r
    total = 0.0
    for a0, a1 in ((u00, u01), (u10, u11)):
        total += _branch_entropy(
            a0 * b[0] + a1 * b[4], a0 * b[1] + a1 * b[5], a0 * b[2] + a1 * b[6], a0 * b[3] + a1 * b[7],
            r00, r01, r10, r11, detr,
        )
    return total


def _pick(candidates, best_val, n):
    """Tie-break among near-optimal rotations: closest to identity in Frobenius norm.

    Permuting or rephasing the rows of a rotation only relabels the outcomes, so
    every such copy of a candidate competes too, rephased to a non-negative real
    diagonal. This fixes the labeling of an optimum regardless of which of its
    equivalent copies the optimizer reached.
    """
    eye = np.eye(n)
    perms = [np.eye(n)[list(pm)] for pm in itertools.permutations(range(n))]
    near = []
    for k, (u, v) in enumerate(candidates):
        if v > best_val + TIE_TOL:
            continue
        for j, pm in enumerate(perms):
            w = pm @ u
            d = np.diag(w)
            phase = np.where(np.abs(d) > 0, np.conj(d) / np.maximum(np.abs(d), 1e-300), 1.0)
            w = phase[:, None] * w
            near.append((np.linalg.norm(w - eye), k, j, w, v))
    *_, u, v = min(near, key=lambda t: t[:3])
    return HeuristicChoice(u, float(v))


def optimize_local_basis(spec: ChannelSpec, dm, seed=0) -> HeuristicChoice:
    """Rotation of ``minimal_kraus(spec)`` minimizing the outcome-averaged qubit entropy."""
    rho = dm.rho if isinstance(dm, LocalDM) else np.asarray(dm, dtype=complex)
    base = minimal_kraus(spec).ops
    n = len(base)
    ident_val = float(average_entropy_qubit(base, rho))
    candidates = [(np.eye(n, dtype=complex), ident_val)]

    if n == 2:
        # psi only rephases the rows, which leaves every branch state unchanged
        theta = np.linspace(0, np.pi / 2, GRID)
        phi = np.linspace(0, 2 * np.pi, GRID, endpoint=False)
        tt, ff = np.meshgrid(theta, phi, indexing="ij")
        us = su2_matrices(tt, ff)
        vals = average_entropy_qubit(np.einsum("...ab,bij->...aij", us, base), rho)
        flat = vals.ravel()
        if flat.max() - flat.min() < TIE_TOL:
            return _pick(candidates, ident_val, n)
        order = np.argsort(flat, kind="stable")[:N_REFINE]
        b = tuple(complex(v) for v in base.ravel())
        detr = max((rho[0, 0] * rho[1, 1] - rho[0, 1] * rho[1, 0]).real, 0.0)
        r = tuple(complex(v) for v in rho.ravel()) + (detr,)
        for k in order:
            x0 = np.array([tt.flat[k], ff.flat[k]])
            res = minimize(
                _su2_objective,
                x0,
                args=(b, r),
                method="Nelder-Mead",
                options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 600},
            )
            u = su2_matrix(SU2Params(res.x[0], res.x[1], 0.0))
            candidates.append((u, float(res.fun)))
    else:
        rng = np.random.default_rng(seed)

        def f(x):
            return float(average_entropy_qubit(np.einsum("ab,bij->aij", su4_matrix(x), base), rho))

        starts = [np.zeros(N_SU4_PARAMS)] + [rng.uniform(0, 2 * np.pi, N_SU4_PARAMS) for _ in range(N_STARTS_SU4)]
        for x0 in starts:
            res = minimize(f, x0, method="Nelder-Mead", options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 3000, "adaptive": True})
            candidates.append((su4_matrix(res.x), float(res.fun)))

    best_val = min(v for _, v in candidates)
    return _pick(candidates, best_val, n)


def heuristic_kraus(spec: ChannelSpec, rho, seed=0) -> KrausSet:
    choice = optimize_local_basis(spec, rho, seed)
    return rotate_kraus(minimal_kraus(spec), choice.rotation)
