"""Random streams and Born-rule outcome selection shared by both trajectory engines."""

import numpy as np

from .channels import ChannelSpec, KrausSet, make_kraus

UNRAVELINGS = ("conventional", "minimal", "spin_optimized", "heuristic")


class DegenerateState(RuntimeError):
    """Every Kraus branch has (numerically) zero probability."""


def make_rng(master_seed: int, stream_id: int = 0, substream: int = 0) -> np.random.Generator:
    """Counter-based Philox stream keyed by (master_seed, stream_id, substream)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_id), int(substream)))
    return np.random.Generator(np.random.Philox(ss))


def kraus_probabilities(kset: KrausSet, rho_local) -> np.ndarray:
    kr = kset.ops @ rho_local
    return np.einsum("aij,aij->a", kr, kset.ops.conj()).real


def sample_outcome(probs, rng: np.random.Generator) -> int:
    """Draw an outcome index; consumes exactly one uniform."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    total = probs.sum()
    u = rng.random()
    if total < 1e-14:
        raise DegenerateState(f"outcome probabilities sum to {total:.3g}")
    cum = np.cumsum(probs / total)
    alpha = int(np.searchsorted(cum, u, side="right"))
    alpha = min(alpha, len(probs) - 1)
    while probs[alpha] == 0.0:  # only reachable through rounding at cum == 1
        alpha -= 1
    return alpha


def local_kraus(spec: ChannelSpec, unraveling: str, rho_local=None, seed=0) -> KrausSet:
    """Kraus set to apply on one site; the heuristic mode needs the site's density matrix."""
    if unraveling == "heuristic":
        from .heuristic import heuristic_kraus

        return heuristic_kraus(spec, rho_local, seed)
    return make_kraus(spec, unraveling)
