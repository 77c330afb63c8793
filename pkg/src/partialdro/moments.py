"""Partition-structured moment data: a mean vector plus one second-moment
matrix per block of a partition of the coordinates.

Indices are 0-based internally; JSON I/O uses 1-based block indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotStrictlyFeasible, NotSymmetric

SYM_TOL = 1e-8
DEFAULT_PD_TOL = 1e-9


@dataclass(frozen=True)
class Partition:
    """Ordered partition of {0, ..., n-1} into disjoint nonempty blocks."""

    n: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n <= 0:
            raise DimensionMismatch("dimension must be positive")
        seen: set[int] = set()
        for blk in self.blocks:
            if len(blk) == 0:
                raise DimensionMismatch("empty block in partition")
            for i in blk:
                if not 0 <= i < self.n:
                    raise DimensionMismatch(f"index {i} outside 0..{self.n - 1}")
                if i in seen:
                    raise DimensionMismatch(f"index {i} appears in two blocks")
                seen.add(i)
        if len(seen) != self.n:
            raise DimensionMismatch("blocks do not cover all indices")

    @property
    def R(self) -> int:
        return len(self.blocks)

    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @staticmethod
    def singletons(n: int) -> "Partition":
        return Partition(n, tuple((i,) for i in range(n)))

    @staticmethod
    def pairs(n: int) -> "Partition":
        """Consecutive pairs {0,1}, {2,3}, ...; n must be even."""
        if n % 2 != 0:
            raise DimensionMismatch(f"pair partition needs even n, got {n}")
        return Partition(n, tuple((2 * r, 2 * r + 1) for r in range(n // 2)))

    @staticmethod
    def full(n: int) -> "Partition":
        return Partition(n, (tuple(range(n)),))


@dataclass(frozen=True)
class MomentSpec:
    """Mean mu over all coordinates and second-moment matrix pi[r] per block."""

    partition: Partition
    mu: np.ndarray
    pi: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.partition.n

    def mu_block(self, r: int) -> np.ndarray:
        return self.mu[list(self.partition.blocks[r])]

    def covariance_block(self, r: int) -> np.ndarray:
        mr = self.mu_block(r)
        return self.pi[r] - np.outer(mr, mr)


def validate(partition: Partition, mu, pi, pd_tol: float = DEFAULT_PD_TOL) -> MomentSpec:
    """Check dimensions, symmetrize the block second moments, and certify
    that every centered covariance block is strictly positive definite.

    ``pd_tol`` bounds the smallest eigenvalue from below; pass a negative
    value to admit singular (but still PSD) blocks, e.g. perfectly
    correlated pairs.
    """
    mu = np.asarray(mu, dtype=float).reshape(-1)
    n = partition.n
    if mu.shape != (n,):
        raise DimensionMismatch(f"mu has length {mu.shape[0]}, expected {n}")
    if not np.all(np.isfinite(mu)):
        raise DimensionMismatch("mu has non-finite entries")
    if len(pi) != partition.R:
        raise DimensionMismatch(f"{len(pi)} second-moment blocks for {partition.R} partition blocks")
    sym = []
    for r, blk in enumerate(partition.blocks):
        P = np.asarray(pi[r], dtype=float)
        k = len(blk)
        if P.shape != (k, k):
            raise DimensionMismatch(f"pi[{r}] has shape {P.shape}, expected ({k}, {k})")
        if not np.all(np.isfinite(P)):
            raise DimensionMismatch(f"pi[{r}] has non-finite entries")
        asym = np.max(np.abs(P - P.T)) if k > 1 else 0.0
        if asym > SYM_TOL:
            raise NotSymmetric(f"pi[{r}] asymmetric by {asym:.2e}")
        P = (P + P.T) / 2.0
        mr = mu[list(blk)]
        cov = P - np.outer(mr, mr)
        lam_min = float(np.linalg.eigvalsh(cov)[0])
        if lam_min <= pd_tol:
            raise NotStrictlyFeasible(
                f"block {r}: min eigenvalue of pi - mu mu' is {lam_min:.3e} <= {pd_tol:.1e}; "
                "the moment set has no strictly feasible distribution"
            )
        sym.append(P)
    return MomentSpec(partition=partition, mu=mu, pi=tuple(sym))


def shift_second_moment(spec: MomentSpec, s) -> MomentSpec:
    """Moment spec of the shifted vector c - s: mean mu - s and per block
    pi[r] - s^r mu^r' - mu^r s^r' + s^r s^r'.  Centered covariances are
    unchanged, so validity carries over; no re-validation is performed.
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    if s.shape != (spec.n,):
        raise DimensionMismatch(f"shift has length {s.shape[0]}, expected {spec.n}")
    if not np.all(np.isfinite(s)):
        raise DimensionMismatch("shift has non-finite entries")
    new_pi = []
    for r, blk in enumerate(spec.partition.blocks):
        idx = list(blk)
        sr = s[idx]
        mr = spec.mu[idx]
        new_pi.append(spec.pi[r] - np.outer(sr, mr) - np.outer(mr, sr) + np.outer(sr, sr))
    return MomentSpec(partition=spec.partition, mu=spec.mu - s, pi=tuple(new_pi))


def paired_from_correlation(n: int, mu, var, rho: float,
                            pd_tol: float = DEFAULT_PD_TOL) -> MomentSpec:
    """Spec with consecutive-pair blocks where adjoining coordinates (1,2),
    (3,4), ... have correlation ``rho``.  |rho| = 1 requires pd_tol < 0."""
    mu = np.asarray(mu, dtype=float) * np.ones(n)
    var = np.asarray(var, dtype=float) * np.ones(n)
    part = Partition.pairs(n)
    pi = []
    for i in range(0, n, 2):
        sd = np.sqrt(var[i : i + 2])
        cov = np.array([[var[i], rho * sd[0] * sd[1]], [rho * sd[0] * sd[1], var[i + 1]]])
        pi.append(cov + np.outer(mu[i : i + 2], mu[i : i + 2]))
    return validate(part, mu, pi, pd_tol=pd_tol)


def singleton_spec(mu, var, pd_tol: float = DEFAULT_PD_TOL) -> MomentSpec:
    """Mean-variance spec: singleton blocks with pi[i] = var_i + mu_i^2."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    var = np.asarray(var, dtype=float) * np.ones(mu.shape[0])
    part = Partition.singletons(mu.shape[0])
    pi = [np.array([[var[i] + mu[i] ** 2]]) for i in range(mu.shape[0])]
    return validate(part, mu, pi, pd_tol=pd_tol)


# ---------------------------------------------------------------------------
# JSON I/O (1-based block indices on the wire)


def to_json(spec: MomentSpec) -> str:
    return json.dumps(
        {
            "n": spec.n,
            "blocks": [[i + 1 for i in blk] for blk in spec.partition.blocks],
            "mu": spec.mu.tolist(),
            "pi": [P.tolist() for P in spec.pi],
        }
    )


def from_json(text: str, pd_tol: float = DEFAULT_PD_TOL) -> MomentSpec:
    data = json.loads(text)
    part = Partition(int(data["n"]), tuple(tuple(i - 1 for i in blk) for blk in data["blocks"]))
    return validate(part, data["mu"], [np.asarray(P) for P in data["pi"]], pd_tol=pd_tol)
