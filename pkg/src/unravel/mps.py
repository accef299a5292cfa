"""Matrix-product-state trajectories for the noisy mixed-field Ising model.

Site tensors have shape (left bond, 2, right bond). The state is kept in
mixed canonical form around ``center``: tensors to the left are
left-orthonormal, tensors to the right right-orthonormal.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .analysis import renyi_entropy
from .channels import X, Z, ChannelKind, ChannelSpec, KrausSet
from .numerics import svd
from .sampling import kraus_probabilities, local_kraus, make_rng, sample_outcome


@dataclass(frozen=True)
class TruncationPolicy:
    chi_max: int = 64
    cutoff: float = 0.0
    track_discarded: bool = True

    def __post_init__(self):
        if self.chi_max < 1:
            raise ValueError("chi_max must be at least 1")
        if not 0.0 <= self.cutoff < 1.0:
            raise ValueError("cutoff must lie in [0, 1)")


@dataclass
class MFIMConfig:
    """H = J sum ZZ + hx sum X + hz sum Z with Z dephasing at rate gamma."""

    L: int
    gamma: float = 0.0
    dt: float = 0.05
    total_time: float = 1.0
    J: float = -1.0
    hx: float = 1.05
    hz: float = -0.5
    boundary: str = "open"

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("MFIM needs at least 2 sites")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.gamma < 0 or 2 * self.gamma * self.dt > 1:
            raise ValueError("need 0 <= 2*gamma*dt <= 1")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def p(self) -> float:
        return 2 * self.gamma * self.dt

    @property
    def n_steps(self) -> int:
        return int(round(self.total_time / self.dt))

    def bonds(self):
        b = [(i, i + 1) for i in range(self.L - 1)]
        if self.boundary == "periodic" and self.L > 2:
            b.append((self.L - 1, 0))
        return b


def bond_hamiltonian(config: MFIMConfig, i: int, j: int) -> np.ndarray:
    """Two-site term; single-site fields are shared among the bonds touching a site."""
    deg = np.zeros(config.L)
    for a, b in config.bonds():
        deg[a] += 1
        deg[b] += 1
    wi, wj = 1 / deg[i], 1 / deg[j]
    one = np.eye(2)
    return (
        config.J * np.kron(Z, Z)
        + config.hx * (wi * np.kron(X, one) + wj * np.kron(one, X))
        + config.hz * (wi * np.kron(Z, one) + wj * np.kron(one, Z))
    )


def trotter_layers(config: MFIMConfig):
    """Even-bond then odd-bond layers of exp(-i h_bond dt) gates, as lists of (i, j, U)."""
    even, odd = [], []
    for i, j in config.bonds():
        u = expm(-1j * config.dt * bond_hamiltonian(config, i, j))
        (even if i % 2 == 0 else odd).append((i, j, u))
    return [even, odd]


# -- MPS state --------------------------------------------------------------------


@dataclass
class MPSState:
    tensors: list
    center: int = 0
    schmidt_spectra: dict = field(default_factory=dict)
    discarded_weight: float = 0.0

    @property
    def L(self):
        return len(self.tensors)

    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self):
        return MPSState([t.copy() for t in self.tensors], self.center, dict(self.schmidt_spectra), self.discarded_weight)

    def to_dense(self) -> np.ndarray:
        if self.L > 20:
            raise ValueError("dense contraction limited to 20 sites")
        psi = self.tensors[0]
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=([-1], [0]))
        return psi.reshape((2,) * self.L)

    def norm(self) -> float:
        c = self.tensors[self.center]
        return float(np.sqrt(np.vdot(c, c).real))


def init_product_mps(L: int, kets=None) -> MPSState:
    if L < 2:
        raise ValueError("MPS needs at least 2 sites")
    if kets is None:
        kets = [np.array([1.0, 0.0])] * L
    elif np.ndim(kets) == 1:
        kets = [kets] * L
    tensors = []
    for k in kets:
        k = np.asarray(k, dtype=complex)
        tensors.append((k / np.linalg.norm(k)).reshape(1, 2, 1))
    return MPSState(tensors, 0, {b: np.array([1.0]) for b in range(L - 1)})


def _move_right(mps: MPSState):
    i = mps.center
    a = mps.tensors[i]
    dl, d, dr = a.shape
    q, r = np.linalg.qr(a.reshape(dl * d, dr))
    mps.tensors[i] = q.reshape(dl, d, -1)
    mps.tensors[i + 1] = np.tensordot(r, mps.tensors[i + 1], axes=([1], [0]))
    mps.center = i + 1


def _move_left(mps: MPSState):
    i = mps.center
    a = mps.tensors[i]
    dl, d, dr = a.shape
    q, r = np.linalg.qr(a.reshape(dl, d * dr).T)
    mps.tensors[i] = q.T.reshape(-1, d, dr)
    mps.tensors[i - 1] = np.tensordot(mps.tensors[i - 1], r.T, axes=([2], [0]))
    mps.center = i - 1


def move_center(mps: MPSState, site: int) -> MPSState:
    if not 0 <= site < mps.L:
        raise IndexError(f"site {site} out of range")
    while mps.center < site:
        _move_right(mps)
    while mps.center > site:
        _move_left(mps)
    return mps


def _truncate(s, policy: TruncationPolicy):
    w = s * s
    total = w.sum()
    w = w / total
    keep = min(policy.chi_max, len(s))
    if policy.cutoff > 0:
        keep = min(keep, max(1, int(np.sum(w >= policy.cutoff))))
    keep = max(keep, 1)
    return keep, float(w[keep:].sum())


def apply_two_site_gate(mps: MPSState, gate, i: int, policy: TruncationPolicy, direction: str = "right"):
    """Apply a 4x4 gate on sites (i, i+1); returns the discarded Schmidt weight.

    The center must sit on i or i+1. With ``direction="right"`` the center ends on
    i+1, otherwise on i.
    """
    if mps.center not in (i, i + 1):
        raise ValueError(f"center {mps.center} not on bond ({i}, {i + 1})")
    a, b = mps.tensors[i], mps.tensors[i + 1]
    dl, dr = a.shape[0], b.shape[2]
    theta = np.tensordot(a, b, axes=([2], [0]))  # (dl, s1, s2, dr)
    g = np.asarray(gate).reshape(2, 2, 2, 2)
    theta = np.tensordot(g, theta, axes=([2, 3], [1, 2]))  # (s1', s2', dl, dr)
    theta = theta.transpose(2, 0, 1, 3).reshape(dl * 2, 2 * dr)
    u, s, vh = svd(theta)
    keep, discarded = _truncate(s, policy)
    u, s, vh = u[:, :keep], s[:keep], vh[:keep]
    s = s / np.linalg.norm(s)
    if direction == "right":
        mps.tensors[i] = u.reshape(dl, 2, keep)
        mps.tensors[i + 1] = (s[:, None] * vh).reshape(keep, 2, dr)
        mps.center = i + 1
    else:
        mps.tensors[i] = (u * s[None, :]).reshape(dl, 2, keep)
        mps.tensors[i + 1] = vh.reshape(keep, 2, dr)
        mps.center = i
    mps.schmidt_spectra[i] = s.copy()
    mps.discarded_weight += discarded
    return discarded


def center_dm(mps: MPSState) -> np.ndarray:
    c = mps.tensors[mps.center]
    rho = np.einsum("asb,atb->st", c, c.conj())
    return rho / np.trace(rho).real


def apply_kraus_site_sampled(mps: MPSState, kset: KrausSet, site: int, rng):
    """Born-rule Kraus branch on ``site`` (center moved there first); returns the outcome."""
    move_center(mps, site)
    probs = kraus_probabilities(kset, center_dm(mps))
    alpha = sample_outcome(probs, rng)
    c = np.tensordot(kset.ops[alpha], mps.tensors[site], axes=([1], [1])).transpose(1, 0, 2)
    mps.tensors[site] = c / np.sqrt(np.vdot(c, c).real)
    # adjacent spectra are stale after a non-unitary update
    mps.schmidt_spectra.pop(site - 1, None)
    mps.schmidt_spectra.pop(site, None)
    return alpha


def schmidt_spectrum(mps: MPSState, bond: int) -> np.ndarray:
    """Squared Schmidt values across (bond, bond+1); recomputed if stale."""
    if bond in mps.schmidt_spectra:
        s = mps.schmidt_spectra[bond]
    else:
        move_center(mps, bond)
        c = mps.tensors[bond]
        s = np.linalg.svd(c.reshape(-1, c.shape[2]), compute_uv=False)
        s = s / np.linalg.norm(s)
        mps.schmidt_spectra[bond] = s
    lam = s * s
    return lam / lam.sum()


def half_chain_entropy(mps: MPSState, n=1.0) -> float:
    return renyi_entropy(schmidt_spectrum(mps, mps.L // 2 - 1), n)


def _gate_sweep(mps, layer, policy):
    disc = 0.0
    for i, j, u in sorted(layer, key=lambda t: t[0]):
        if j != i + 1:
            raise ValueError("MPS engine supports nearest-neighbour open-chain bonds only")
        move_center(mps, i)
        disc += apply_two_site_gate(mps, u, i, policy, "right")
    return disc


def trotter_step_mfim(mps: MPSState, config: MFIMConfig, policy: TruncationPolicy, rng, mode="spin_optimized",
                      layers=None, step: int = 0, outcomes=None):
    """One first-order step: even bonds, odd bonds, then dephasing on sites 0..L-1."""
    if config.boundary != "open":
        raise ValueError("MPS runs use open boundaries")
    layers = trotter_layers(config) if layers is None else layers
    disc = 0.0
    for layer in layers:
        disc += _gate_sweep(mps, layer, policy)
    spec = ChannelSpec(ChannelKind.DEPHASING, config.p)
    if config.gamma > 0 or mode == "heuristic":
        fixed = None if mode == "heuristic" else local_kraus(spec, mode)
        for site in range(config.L):
            move_center(mps, site)
            if fixed is None:
                kset = local_kraus(spec, mode, center_dm(mps), (step << 16) | site)
            else:
                kset = fixed
            alpha = apply_kraus_site_sampled(mps, kset, site, rng)
            if outcomes is not None:
                outcomes.append((step, site, alpha))
    return disc


@dataclass
class MPSRun:
    times: np.ndarray
    entropies: dict
    discarded: np.ndarray
    outcomes: list
    saturation: float
    wall_time: float
    final: MPSState = None


def saturation_metric(series) -> float:
    """Relative change between the time averages of the third and fourth quarters."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 4:
        return float("nan")
    q3 = x[n // 2: 3 * n // 4].mean()
    q4 = x[3 * n // 4:].mean()
    scale = max(abs(q3), abs(q4), 1e-12)
    return float(abs(q4 - q3) / scale)


def run_mfim_mps_trajectory(config: MFIMConfig, policy: TruncationPolicy, seed: int, stream: int = 0,
                            mode="spin_optimized", renyi_indices=(1.0,), n_steps=None) -> MPSRun:
    t0 = time.perf_counter()
    rng = make_rng(seed, stream, 1)
    layers = trotter_layers(config)
    mps = init_product_mps(config.L)
    steps = config.n_steps if n_steps is None else n_steps
    ent = {n: [] for n in renyi_indices}
    disc = []
    outcomes = []
    for step in range(steps):
        disc.append(trotter_step_mfim(mps, config, policy, rng, mode, layers, step, outcomes))
        for n in renyi_indices:
            ent[n].append(half_chain_entropy(mps, n))
    first = renyi_indices[0]
    return MPSRun(
        times=config.dt * np.arange(1, steps + 1),
        entropies={n: np.array(v) for n, v in ent.items()},
        discarded=np.cumsum(disc),
        outcomes=outcomes,
        saturation=saturation_metric(ent[first]),
        wall_time=time.perf_counter() - t0,
        final=mps,
    )


def entropy_column(n) -> str:
    from .analysis import index_label

    return "entropy_n" + index_label(n).replace("/", "_")
