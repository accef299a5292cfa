"""Kraus decompositions of single-qubit decoherence channels and their unravelings.

Three channel kinds ship: dephasing, amplitude damping and depolarizing. Each
has a *conventional* unraveling, a *minimal* one (fewest Kraus operators) and
a spin-model *optimized* one related to the minimal set by a unitary rotation
of the Kraus index, ``K'_a = sum_b U[a, b] K_b``.
"""

import enum
import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .numerics import ATOL, LinAlgError, dagger, herm_eig, is_unitary

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)
S01 = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|
S10 = np.array([[0, 0], [1, 0]], dtype=complex)  # |1><0|

# real rotation (1/sqrt2)[[1, 1], [-1, 1]], i.e. su2(pi/4, pi/4, -pi/4)
HADAMARD_LIKE = np.array([[1, 1], [-1, 1]], dtype=complex) / np.sqrt(2)


class ChannelKind(str, enum.Enum):
    DEPHASING = "dephasing"
    AMPLITUDE_DAMPING = "amplitude_damping"
    DEPOLARIZING = "depolarizing"


@dataclass(frozen=True)
class ChannelSpec:
    kind: ChannelKind
    p: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        if not (0.0 <= self.p <= 1.0) or not np.isfinite(self.p):
            raise ValueError(f"decoherence rate must lie in [0, 1], got {self.p}")


@dataclass(frozen=True, eq=False)
class KrausSet:
    """Ordered Kraus operators, stored as an array of shape (N, d, d)."""

    ops: np.ndarray

    def __post_init__(self):
        ops = np.asarray(self.ops, dtype=complex)
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2] or ops.shape[0] < 1:
            raise ValueError(f"Kraus ops must have shape (N, d, d), got {ops.shape}")
        ops.setflags(write=False)
        object.__setattr__(self, "ops", ops)

    @property
    def n(self) -> int:
        return self.ops.shape[0]

    @property
    def dim(self) -> int:
        return self.ops.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self.ops[i]

    def completeness_residual(self) -> float:
        s = np.einsum("aji,ajk->ik", self.ops.conj(), self.ops)
        return float(np.max(np.abs(s - np.eye(self.dim))))

    def is_complete(self, atol: float = ATOL) -> bool:
        return self.completeness_residual() <= atol


@dataclass(frozen=True)
class SU2Params:
    theta: float
    phi: float
    psi: float


def _spec(spec_or_kind, p=None) -> ChannelSpec:
    if isinstance(spec_or_kind, ChannelSpec):
        return spec_or_kind
    return ChannelSpec(ChannelKind(spec_or_kind), p)


def minimal_kraus(spec: ChannelSpec) -> KrausSet:
    """Kraus set with the fewest operators; zero operators are kept at p=0."""
    spec = _spec(spec)
    p = spec.p
    if spec.kind is ChannelKind.DEPHASING:
        ops = [np.sqrt(1 - p / 2) * I2, np.sqrt(p / 2) * Z]
    elif spec.kind is ChannelKind.AMPLITUDE_DAMPING:
        ops = [P0 + np.sqrt(1 - p) * P1, np.sqrt(p) * S01]
    else:
        c = np.sqrt(p / 4)
        ops = [np.sqrt(1 - 3 * p / 4) * I2, c * X, c * Y, c * Z]
    return KrausSet(np.array(ops))


def conventional_kraus(spec: ChannelSpec) -> KrausSet:
    """Computational-basis unraveling (projective measurement / reset)."""
    spec = _spec(spec)
    p = spec.p
    if spec.kind is ChannelKind.DEPHASING:
        ops = [np.sqrt(1 - p) * I2, np.sqrt(p) * P0, np.sqrt(p) * P1]
    elif spec.kind is ChannelKind.AMPLITUDE_DAMPING:
        ops = [P0 + np.sqrt(1 - p) * P1, np.sqrt(p) * S01]
    else:
        c = np.sqrt(p / 2)
        ops = [np.sqrt(1 - p) * I2, c * P0, c * S01, c * S10, c * P1]
    return KrausSet(np.array(ops))


def rotate_kraus(kset: KrausSet, rotation) -> KrausSet:
    u = np.asarray(rotation, dtype=complex)
    if u.shape != (kset.n, kset.n):
        raise ValueError(f"rotation of shape {u.shape} does not match {kset.n} Kraus operators")
    return KrausSet(np.einsum("ab,bij->aij", u, kset.ops))


def su2_matrix(params: SU2Params) -> np.ndarray:
    t, f, s = params.theta, params.phi, params.psi
    c, sn = np.cos(t), np.sin(t)
    return np.array(
        [
            [np.exp(1j * (s + f)) * c, 1j * np.exp(1j * (s - f)) * sn],
            [1j * np.exp(-1j * (s - f)) * sn, np.exp(-1j * (s + f)) * c],
        ]
    )


def su2_matrices(theta, phi, psi=0.0) -> np.ndarray:
    """Vectorized ``su2_matrix``; broadcasts the angles, returns shape (..., 2, 2)."""
    theta, phi, psi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (theta, phi, psi)))
    c, sn = np.cos(theta), np.sin(theta)
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(1j * (psi + phi)) * c
    out[..., 0, 1] = 1j * np.exp(1j * (psi - phi)) * sn
    out[..., 1, 0] = 1j * np.exp(-1j * (psi - phi)) * sn
    out[..., 1, 1] = np.exp(-1j * (psi + phi)) * c
    return out


# -- SU(4) parameterization -------------------------------------------------

# Two-level (Givens) planes in application order; each carries a mixing angle and
# a relative phase. Together with three diagonal phases this gives 6*2 + 3 = 15
# real parameters, the dimension of SU(4).
GIVENS_PLANES_4 = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
N_SU4_PARAMS = 15


def su4_matrix(params) -> np.ndarray:
    """Unitary ``D @ G_5 @ ... @ G_0`` from 15 angles.

    ``params[2k], params[2k+1]`` are the mixing angle and phase of the Givens
    rotation in plane ``GIVENS_PLANES_4[k]``; ``params[12:15]`` are diagonal
    phases on levels 0..2 with level 3 fixed so that det = 1 up to the Givens
    contribution (each Givens block is itself in SU(2)).
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (N_SU4_PARAMS,):
        raise ValueError(f"expected {N_SU4_PARAMS} parameters, got {params.shape}")
    u = np.eye(4, dtype=complex)
    for k, (i, j) in enumerate(GIVENS_PLANES_4):
        a, b = params[2 * k], params[2 * k + 1]
        g = np.eye(4, dtype=complex)
        g[i, i] = np.cos(a)
        g[i, j] = -np.exp(-1j * b) * np.sin(a)
        g[j, i] = np.exp(1j * b) * np.sin(a)
        g[j, j] = np.cos(a)
        u = g @ u
    phases = np.append(params[12:15], -np.sum(params[12:15]))
    return np.exp(1j * phases)[:, None] * u


@lru_cache(maxsize=None)
def load_stored_rotation(kind: str) -> np.ndarray:
    """Read a stored optimized rotation from the packaged parameter file."""
    name = f"{ChannelKind(kind).value}_rotation.json"
    text = resources.files("unravel.data").joinpath(name).read_text()
    return rotation_from_json(text)[1]


def rotation_to_json(kind, unitary) -> str:
    u = np.asarray(unitary, dtype=complex)
    return json.dumps(
        {"kind": ChannelKind(kind).value, "unitary_re": u.real.tolist(), "unitary_im": u.imag.tolist()},
        indent=2,
    )


def rotation_from_json(text: str):
    obj = json.loads(text)
    u = np.array(obj["unitary_re"], dtype=float) + 1j * np.array(obj["unitary_im"], dtype=float)
    if not is_unitary(u, atol=1e-8):
        raise ValueError("stored rotation is not unitary")
    return ChannelKind(obj["kind"]), u


def optimized_rotation(kind) -> np.ndarray:
    """Rotation of the minimal set that minimizes the spin-model critical rate."""
    kind = ChannelKind(kind)
    if kind is ChannelKind.DEPOLARIZING:
        return load_stored_rotation(kind.value)
    return HADAMARD_LIKE


def spin_optimized_kraus(spec: ChannelSpec) -> KrausSet:
    spec = _spec(spec)
    return rotate_kraus(minimal_kraus(spec), optimized_rotation(spec.kind))


def choi_matrix(kset: KrausSet) -> np.ndarray:
    vecs = kset.ops.reshape(kset.n, -1)
    return np.einsum("ai,aj->ij", vecs, vecs.conj())


def channel_equivalence(a: KrausSet, b: KrausSet, atol: float = 1e-8) -> bool:
    if a.dim != b.dim:
        raise ValueError("Kraus sets act on different dimensions")
    return float(np.linalg.norm(choi_matrix(a) - choi_matrix(b))) <= atol


def check_density_matrix(rho, atol: float = ATOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if abs(np.trace(rho) - 1) > atol:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.3g} != 1")
    try:
        w = herm_eig(rho).eigenvalues
    except LinAlgError as exc:
        raise ValueError(f"invalid density matrix: {exc}") from exc
    if w[0] < -atol:
        raise ValueError(f"density matrix has negative eigenvalue {w[0]:.3g}")
    return rho


def apply_channel_dm(kset: KrausSet, rho) -> np.ndarray:
    rho = check_density_matrix(rho)
    if rho.shape[0] != kset.dim:
        raise ValueError("density matrix dimension does not match the channel")
    return np.einsum("aij,jk,alk->il", kset.ops, rho, kset.ops.conj())


def dilation_isometry(kset: KrausSet) -> np.ndarray:
    """Stinespring isometry V = sum_a K_a (x) |a>, shape (d*N, d), system index major."""
    d, n = kset.dim, kset.n
    return np.transpose(kset.ops, (1, 0, 2)).reshape(d * n, d)


def trace_ancilla(big_rho, d: int, n: int) -> np.ndarray:
    return np.einsum("iaja->ij", np.asarray(big_rho).reshape(d, n, d, n))


def first_order_dephasing_ops(gamma: float, dt: float) -> np.ndarray:
    """Lowest-order Kraus pair of a dt-step of Z dephasing at rate gamma.

    Complete only to O(dt^2), so a raw operator array is returned rather than a
    KrausSet.
    """
    return np.array([(1 - dt * gamma / 2) * I2, np.sqrt(gamma * dt) * Z])


def choi_distance(a, b) -> float:
    ka = a.ops if isinstance(a, KrausSet) else np.asarray(a, dtype=complex)
    kb = b.ops if isinstance(b, KrausSet) else np.asarray(b, dtype=complex)
    va, vb = ka.reshape(len(ka), -1), kb.reshape(len(kb), -1)
    ca = np.einsum("ai,aj->ij", va, va.conj())
    cb = np.einsum("ai,aj->ij", vb, vb.conj())
    return float(np.linalg.norm(ca - cb))


def make_kraus(spec: ChannelSpec, unraveling: str) -> KrausSet:
    """Kraus set for a named unraveling: conventional, minimal or spin_optimized."""
    if unraveling == "conventional":
        return conventional_kraus(spec)
    if unraveling == "minimal":
        return minimal_kraus(spec)
    if unraveling == "spin_optimized":
        return spin_optimized_kraus(spec)
    raise ValueError(f"unknown fixed unraveling {unraveling!r}")
