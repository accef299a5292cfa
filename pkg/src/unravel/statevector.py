"""Dense pure-state trajectory engine.

States are complex arrays of shape ``(2,) * L``; axis ``k`` is qubit ``k`` and
qubit 0 is the most significant bit of the flattened amplitude index.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import RENYI_INDICES, quarter_blocks, renyi_entropy, tripartite_i3
from .channels import ChannelKind, ChannelSpec, KrausSet
from .numerics import qr_unitary
from .sampling import DegenerateState, kraus_probabilities, local_kraus, make_rng, sample_outcome

MAX_QUBITS = 26
MAX_RDM_SITES = 13
MAX_BRANCHES = 2**24
MAX_ADAPTIVE_BRANCHES = 2**14  # each adaptive branch runs its own local optimization


def zero_state(L: int) -> np.ndarray:
    if not 1 <= L <= MAX_QUBITS:
        raise ValueError(f"dense engine supports 1..{MAX_QUBITS} qubits, got {L}")
    psi = np.zeros((2,) * L, dtype=complex)
    psi[(0,) * L] = 1.0
    return psi


def product_state(kets) -> np.ndarray:
    psi = np.array(1.0, dtype=complex)
    for k in kets:
        psi = np.multiply.outer(psi, np.asarray(k, dtype=complex))
    return psi


def haar_two_qubit(rng: np.random.Generator) -> np.ndarray:
    g = (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))) / np.sqrt(2)
    return qr_unitary(g)


def _check_sites(psi, *sites):
    L = psi.ndim
    for s in sites:
        if not 0 <= s < L:
            raise IndexError(f"site {s} out of range for {L} qubits")
    if len(set(sites)) != len(sites):
        raise ValueError("sites must be distinct")


def apply_one_qubit(psi, op, i) -> np.ndarray:
    _check_sites(psi, i)
    op = np.asarray(op)
    v = psi.reshape(2**i, 2, -1)
    out = np.empty_like(v)
    if op[0, 1] == 0 and op[1, 0] == 0:
        np.multiply(v[:, 0, :], op[0, 0], out=out[:, 0, :])
        np.multiply(v[:, 1, :], op[1, 1], out=out[:, 1, :])
    else:
        out[:, 0, :] = op[0, 0] * v[:, 0, :] + op[0, 1] * v[:, 1, :]
        out[:, 1, :] = op[1, 0] * v[:, 0, :] + op[1, 1] * v[:, 1, :]
    return out.reshape(psi.shape)


def apply_two_qubit(psi, u, i, j) -> np.ndarray:
    """Apply a 4x4 gate; its first tensor factor acts on qubit ``i``."""
    _check_sites(psi, i, j)
    u = np.asarray(u, dtype=complex)
    if j == i + 1:
        a = 2**i
        b = psi.size // (4 * a)
        if b == 1:
            return (psi.reshape(a, 4) @ u.T).reshape(psi.shape)
        return np.matmul(u, psi.reshape(a, 4, b)).reshape(psi.shape)
    g = u.reshape(2, 2, 2, 2)
    out = np.tensordot(g, psi, axes=([2, 3], [i, j]))
    return np.moveaxis(out, (0, 1), (i, j))


def reduced_dm(psi, sites) -> np.ndarray:
    sites = list(sites)
    if len(sites) > MAX_RDM_SITES:
        raise ValueError(f"reduced density matrix limited to {MAX_RDM_SITES} sites")
    _check_sites(psi, *sites)
    rest = [k for k in range(psi.ndim) if k not in sites]
    m = np.transpose(psi, sites + rest).reshape(2 ** len(sites), -1)
    return m @ m.conj().T


def local_dm(psi, i) -> np.ndarray:
    v = psi.reshape(2**i, 2, -1)
    x0, x1 = v[:, 0, :], v[:, 1, :]
    r01 = np.vdot(x1, x0)
    return np.array([[np.vdot(x0, x0).real, r01], [np.conj(r01), np.vdot(x1, x1).real]])


def entanglement_spectrum(psi, sites) -> np.ndarray:
    """Eigenvalues of the reduced density matrix on ``sites`` via an SVD of the bipartition."""
    sites = sorted(sites)
    rest = [k for k in range(psi.ndim) if k not in sites]
    m = np.transpose(psi, sites + rest).reshape(2 ** len(sites), -1)
    s = np.linalg.svd(m, compute_uv=False)
    lam = s * s
    return lam / lam.sum()


def entropy(psi, sites, n=1.0) -> float:
    if len(sites) == 0 or len(sites) == psi.ndim:
        return 0.0
    return renyi_entropy(entanglement_spectrum(psi, sites), n)


def i3_regions(L):
    a, b, c, d = quarter_blocks(L)
    return {"A": a, "B": b, "C": c, "AB": a + b, "AC": a + c, "BC": b + c, "D": d}


def state_i3(psi, n=1.0) -> float:
    regions = i3_regions(psi.ndim)
    return tripartite_i3({k: entropy(psi, v, n) for k, v in regions.items()})


def apply_kraus_sampled(psi, kset: KrausSet, site, rng):
    """Born-rule branch of a Kraus set on one qubit; returns (new state, outcome)."""
    probs = kraus_probabilities(kset, local_dm(psi, site))
    alpha = sample_outcome(probs, rng)
    new = apply_one_qubit(psi, kset.ops[alpha], site)
    return new / np.sqrt(probs[alpha]), alpha


# -- random unitary circuits ------------------------------------------------------


@dataclass
class RucConfig:
    L: int
    p: float
    layers: int | None = None
    unraveling: str = "conventional"
    boundary: str = "periodic"
    channel_kind: str = "dephasing"
    renyi_indices: tuple = RENYI_INDICES

    def __post_init__(self):
        if self.L % 2 or self.L < 2:
            raise ValueError("RUC needs an even number of qubits")
        if self.layers is None:
            self.layers = 4 * self.L
        if self.layers < 1:
            raise ValueError("need at least one layer")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        ChannelSpec(ChannelKind(self.channel_kind), self.p)

    @property
    def spec(self):
        return ChannelSpec(ChannelKind(self.channel_kind), self.p)


@dataclass
class TrajectoryRecord:
    seed: int
    stream: int
    outcomes: list
    entropies: dict
    i3: dict
    wall_time: float
    extra: dict = field(default_factory=dict)


def brick_bonds(L, layer, boundary="periodic"):
    if layer % 2 == 0:
        return [(i, i + 1) for i in range(0, L - 1, 2)]
    bonds = [(i, i + 1) for i in range(1, L - 1, 2)]
    if boundary == "periodic" and L > 2:
        bonds.append((L - 1, 0))
    return bonds


def sample_ruc_circuit(L, layers, boundary, rng):
    """A brick-layer circuit realization: list of layers, each a list of (i, j, U)."""
    return [[(i, j, haar_two_qubit(rng)) for i, j in brick_bonds(L, t, boundary)] for t in range(layers)]


def _heuristic_seed(step, site):
    return (step << 16) | site


def run_circuit(psi, circuit, spec, unraveling, rng, outcomes=None):
    """Evolve one trajectory through gates, with the channel unraveled on every site after each layer."""
    fixed = None if unraveling == "heuristic" else local_kraus(spec, unraveling)
    L = psi.ndim
    for t, layer in enumerate(circuit):
        for i, j, u in layer:
            psi = apply_two_qubit(psi, u, i, j)
        if spec.p == 0 and unraveling != "heuristic":
            continue
        for site in range(L):
            kset = fixed if fixed is not None else local_kraus(spec, unraveling, local_dm(psi, site), _heuristic_seed(t, site))
            psi, alpha = apply_kraus_sampled(psi, kset, site, rng)
            if outcomes is not None:
                outcomes.append((t, site, alpha))
    return psi


def trajectory_observables(psi, indices):
    L = psi.ndim
    half = list(range(L // 2))
    ent = {n: entropy(psi, half, n) for n in indices}
    i3 = {}
    if L % 4 == 0:
        regions = i3_regions(L)
        spectra = {k: entanglement_spectrum(psi, v) for k, v in regions.items()}
        for n in indices:
            i3[n] = tripartite_i3({k: renyi_entropy(s, n) for k, s in spectra.items()})
    return ent, i3


def run_ruc_trajectory(config: RucConfig, seed: int, stream: int = 0) -> TrajectoryRecord:
    """One trajectory with a freshly drawn circuit; final-state entropies and I_3."""
    t0 = time.perf_counter()
    circuit = sample_ruc_circuit(config.L, config.layers, config.boundary, make_rng(seed, stream, 0))
    rng = make_rng(seed, stream, 1)
    outcomes = []
    psi = run_circuit(zero_state(config.L), circuit, config.spec, config.unraveling, rng, outcomes)
    ent, i3 = trajectory_observables(psi, config.renyi_indices)
    return TrajectoryRecord(seed, stream, outcomes, ent, i3, time.perf_counter() - t0)


# -- mixed-field Ising model --------------------------------------------------------


def mfim_hamiltonian_dense(config) -> np.ndarray:
    from .channels import X as PX, Z as PZ

    L = config.L
    dim = 2**L
    h = np.zeros((dim, dim), dtype=complex)

    def op_on(ops):
        m = np.array([[1.0]], dtype=complex)
        for k in range(L):
            m = np.kron(m, ops.get(k, np.eye(2)))
        return m

    for i, j in config.bonds():
        h += config.J * op_on({i: PZ, j: PZ})
    for k in range(L):
        h += config.hx * op_on({k: PX}) + config.hz * op_on({k: PZ})
    return h


def mfim_energy(psi, config) -> float:
    v = psi.reshape(-1)
    return float((v.conj() @ mfim_hamiltonian_dense(config) @ v).real)


def run_mfim_trajectory_exact(config, seed: int, stream: int = 0, unraveling="spin_optimized", renyi_indices=(1.0,), n_steps=None):
    """Trotterized noisy MFIM on the dense engine with the gate sequence of ``mps``.

    Returns a TrajectoryRecord whose ``extra`` holds the per-step half-chain
    entropy series (``series``) and the final state (``state``).
    """
    from .mps import trotter_layers

    if config.L > 24:
        raise ValueError("dense MFIM engine is limited to L <= 24")
    t0 = time.perf_counter()
    rng = make_rng(seed, stream, 1)
    spec = ChannelSpec(ChannelKind.DEPHASING, config.p)
    fixed = None if unraveling == "heuristic" else local_kraus(spec, unraveling)
    layers = trotter_layers(config)
    psi = zero_state(config.L)
    half = list(range(config.L // 2))
    series = {n: [] for n in renyi_indices}
    outcomes = []
    steps = config.n_steps if n_steps is None else n_steps
    for step in range(steps):
        for layer in layers:
            for i, j, u in layer:
                psi = apply_two_qubit(psi, u, i, j)
        if config.gamma > 0 or unraveling == "heuristic":
            for site in range(config.L):
                kset = fixed if fixed is not None else local_kraus(spec, unraveling, local_dm(psi, site), _heuristic_seed(step, site))
                psi, alpha = apply_kraus_sampled(psi, kset, site, rng)
                outcomes.append((step, site, alpha))
        for n in renyi_indices:
            series[n].append(entropy(psi, half, n))
    ent = {n: v[-1] if v else 0.0 for n, v in series.items()}
    rec = TrajectoryRecord(seed, stream, outcomes, ent, {}, time.perf_counter() - t0)
    rec.extra = {"series": series, "state": psi}
    return rec


# -- exact enumeration over outcome strings --------------------------------------------


def _apply_one_batch(psis, op, i):
    # psis has a leading batch axis
    return np.moveaxis(np.tensordot(op, psis, axes=([1], [i + 1])), 0, i + 1)


def _apply_two_batch(psis, u, i, j):
    g = np.asarray(u).reshape(2, 2, 2, 2)
    out = np.tensordot(g, psis, axes=([2, 3], [i + 1, j + 1]))
    return np.moveaxis(out, (0, 1), (i + 1, j + 1))


def enumerate_branches(circuit, L, spec, unraveling, visit, max_batch=4096, psi0=None, max_branches=None):
    """Depth-first enumeration of every outcome string of a fixed circuit.

    ``visit(states)`` receives batches of unnormalized final branch states
    ``K_m |psi>`` (norm^2 = p_m). Zero-probability branches are dropped.
    """
    n_apps = len(circuit) * L if (spec.p > 0 or unraveling == "heuristic") else 0
    fixed = None if unraveling == "heuristic" else local_kraus(spec, unraveling)
    n_out = 2 if fixed is None else fixed.n
    cap = max_branches or (MAX_ADAPTIVE_BRANCHES if fixed is None else MAX_BRANCHES)
    if n_out**n_apps > cap:
        raise TooLarge(f"{n_out}^{n_apps} outcome strings exceed the enumeration cap of {cap}")
    ops = []
    for t, layer in enumerate(circuit):
        ops.extend(("gate", (i, j, u)) for i, j, u in layer)
        if n_apps:
            ops.extend(("chan", (t, s)) for s in range(L))
    start = (zero_state(L) if psi0 is None else psi0)[None]

    def run(psis, k):
        while k < len(ops):
            kind, arg = ops[k]
            if kind == "gate":
                psis = _apply_two_batch(psis, arg[2], arg[0], arg[1])
            else:
                t, s = arg
                if fixed is None:
                    children = []
                    for psi in psis:
                        norm2 = np.vdot(psi, psi).real
                        kset = local_kraus(spec, unraveling, local_dm(psi, s) / norm2, _heuristic_seed(t, s))
                        children.extend(apply_one_qubit(psi, kop, s) for kop in kset.ops)
                    psis = np.array(children)
                else:
                    psis = np.concatenate([_apply_one_batch(psis, kop, s) for kop in fixed.ops])
                flat = psis.reshape(len(psis), -1)
                norms = np.einsum("bi,bi->b", flat.conj(), flat).real
                psis = psis[norms > 1e-300]
                if len(psis) == 0:
                    return
                if len(psis) > max_batch:
                    for chunk in range(0, len(psis), max_batch):
                        run(psis[chunk:chunk + max_batch], k + 1)
                    return
            k += 1
        visit(psis)

    run(start, 0)


class TooLarge(ValueError):
    pass


def outcome_averaged_dm(circuit, L, spec, unraveling, psi0=None, max_branches=None) -> np.ndarray:
    """sum_m K_m |psi><psi| K_m^+ accumulated over all enumerated outcome strings."""
    acc = np.zeros((2**L, 2**L), dtype=complex)

    def visit(psis):
        v = psis.reshape(len(psis), -1)
        acc[...] += v.T @ v.conj()

    enumerate_branches(circuit, L, spec, unraveling, visit, psi0=psi0, max_branches=max_branches)
    return acc


def quasi_entropy_enumerated(circuit, L, spec, unraveling, sites, n=2.0) -> float:
    """Quasi-entropy (1/(1-n)) log(sum_m p_m^n tr rho_{A,m}^n / sum_m p_m^n) of one circuit.

    At n = 1 the replica limit, the probability-weighted von Neumann entropy, is returned.
    """
    n = float(n)
    sites = sorted(sites)
    num = [0.0]
    den = [0.0]

    def visit(psis):
        for psi in psis:
            pm = np.vdot(psi, psi).real
            if pm <= 0:
                continue
            lam = entanglement_spectrum(psi / np.sqrt(pm), sites) if 0 < len(sites) < L else np.array([1.0])
            if n == 1.0:
                num[0] += pm * renyi_entropy(lam, 1.0)
                den[0] += pm
            else:
                num[0] += pm**n * np.sum(lam**n)
                den[0] += pm**n

    enumerate_branches(circuit, L, spec, unraveling, visit)
    if n == 1.0:
        return num[0] / den[0]
    return math.log(num[0] / den[0]) / (1 - n)


def quasi_entropy_dilation(circuit, L, spec, unraveling, sites, n=2) -> float:
    """Independent route for integer n >= 2: purify every channel with an ancilla register.

    Each application appends a fresh ancilla via the Stinespring isometry; the
    joint reduced state on A plus the (dephased) ancillas gives
    sum_m p_m^n tr rho_{A,m}^n, and the dephased ancilla marginal gives
    sum_m p_m^n.
    """
    from .channels import dilation_isometry

    if unraveling == "heuristic":
        raise ValueError("the adaptive unraveling has no fixed dilation")
    kset = local_kraus(spec, unraveling)
    v = dilation_isometry(kset).reshape(2, kset.n, 2)  # (out, ancilla, in)
    psi = zero_state(L)
    n_anc = 0
    for layer in circuit:
        for i, j, u in layer:
            psi = apply_two_qubit(psi, u, i, j)
        for s in range(L):
            out = np.tensordot(v, psi, axes=([2], [s]))  # (out, anc, rest...)
            out = np.moveaxis(out, 0, s + 1)  # (anc, system..., previous ancillas...)
            psi = np.moveaxis(out, 0, -1)
            n_anc += 1
    sys_rest = [k for k in range(L) if k not in sites]
    anc_axes = list(range(L, L + n_anc))
    a = len(sites)
    # amplitudes as matrix (A, ancillas) x (rest of system)
    m = np.transpose(psi, list(sites) + anc_axes + sys_rest)
    da, dm = 2**a, int(np.prod(psi.shape[L:])) if n_anc else 1
    m = m.reshape(da, dm, -1)
    # measured ancillas: block-diagonal in the ancilla index
    rho_blocks = np.einsum("amr,bmr->mab", m, m.conj())  # (anc outcome, A, A) = p_m rho_{A,m}
    num = sum(np.trace(np.linalg.matrix_power(blk, int(n))).real for blk in rho_blocks)
    pm = np.einsum("maa->m", rho_blocks).real
    den = np.sum(pm ** int(n))
    return math.log(num / den) / (1 - n)
