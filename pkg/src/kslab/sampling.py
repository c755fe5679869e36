"""Mask distributions and the distribution-level weighting quantities.

Masks are drawn from a variable-density Bernoulli law: each index is
included independently with probability ``min(cap, s * (1 - d_j)^degree)``
where ``d_j`` is the distance from the k-space center normalized so the
farthest index has d = 0.5 (keeping every probability strictly positive),
a block of ``n_center`` central indices is always sampled, and the scale
``s`` is found by bisection so the acceleration factor q / sum(probs) hits
its target within 1%.

For accelerated densities (target > 1) the cap is 1 - 1e-3 rather than 1:
only the forced center is sampled with certainty. Without the cap, a
weakly accelerated second-level density (e.g. the 2-D default) saturates a
region to probability exactly 1, violating the mask requirement that the
second level leaves every undersampled index reachable and making the
density-compensation weight undefined there. At target 1 (no acceleration)
every probability is exactly 1.

Two distribution-level diagonals drive the self-supervised loss theory:

* ``compute_k``:  k_j = (1 - p_j) / (1 - ptilde_j * p_j), the probability
  that index j was unsampled in the first level given that it is missing
  from the second-level data.
* ``compute_P``:  P_jj = (1 - p_j ptilde_j) / (p_j (1 - ptilde_j)), the
  density-compensation weight applied on Omega \\ Lambda. The two satisfy
  P_jj * (1 - k_j) = 1 identically.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ValidationError
from .kspace import SamplingMask, _mask_unchecked

COLUMN_POLYNOMIAL = "column_polynomial"
BERNOULLI2D_POLYNOMIAL = "bernoulli2d_polynomial"

_BISECT_ITERS = 60
_ACCEL_RTOL = 0.01
_PROB_CAP = 1.0 - 1e-3  # off-center ceiling for accelerated densities


def default_n_center(q: int) -> int:
    """Desk-scale stand-in for a fully sampled central band of k-space."""
    return max(2, q // 16)


@dataclass(frozen=True)
class MaskDistribution:
    """Variable-density Bernoulli mask law.

    kind : "column_polynomial" or "bernoulli2d_polynomial"
    q : total number of k-space indices
    target_accel : desired q / sum(probs)
    n_center : count of always-sampled central indices (central columns for
        the 2-D column kind)
    degree : polynomial decay exponent of the density
    shape : (nx, ny) for the flattened 2-D mode, None for 1-D
    """

    kind: str
    q: int
    target_accel: float
    n_center: int
    degree: float = 8.0
    shape: tuple | None = None

    def __post_init__(self):
        if self.kind not in (COLUMN_POLYNOMIAL, BERNOULLI2D_POLYNOMIAL):
            raise ConfigError(f"unknown mask kind {self.kind!r}")
        if self.q < 1:
            raise ConfigError("q must be >= 1")
        if self.shape is not None:
            nx, ny = self.shape
            if nx * ny != self.q:
                raise ConfigError(f"shape {self.shape} does not flatten to q={self.q}")
        if self.kind == BERNOULLI2D_POLYNOMIAL and self.shape is None:
            raise ConfigError("bernoulli2d_polynomial requires a 2-D shape")
        if self.n_center < 0 or self.n_center > self._n_sites():
            raise ConfigError(f"n_center must be in [0, {self._n_sites()}]")
        if self.target_accel < 1.0:
            raise ConfigError("target_accel must be >= 1")
        if self.n_center > 0 and self.target_accel > self._n_sites() / self.n_center + 1e-12:
            raise ConfigError(
                f"target_accel {self.target_accel} unattainable with "
                f"{self.n_center} always-sampled indices out of {self._n_sites()}"
            )

    def _n_sites(self) -> int:
        # Sites carrying independent inclusion decisions: columns for the
        # 2-D column kind, individual indices otherwise.
        if self.kind == COLUMN_POLYNOMIAL and self.shape is not None:
            return self.shape[1]
        return self.q

    def _site_distances(self) -> np.ndarray:
        if self.kind == BERNOULLI2D_POLYNOMIAL:
            nx, ny = self.shape
            cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
            gx, gy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
            return np.hypot(gx - cx, gy - cy).ravel()
        n = self._n_sites()
        return np.abs(np.arange(n) - (n - 1) / 2.0)

    def site_probs(self) -> np.ndarray:
        """Per-site inclusion probabilities (per column in the 2-D column kind).

        The bisection result is cached per distribution; the returned array
        is read-only and shared.
        """
        return _site_probs_cached(self)

    def _site_probs_impl(self) -> np.ndarray:
        dist = self._site_distances()
        n = dist.shape[0]
        center = np.zeros(n, dtype=bool)
        if self.n_center > 0:
            order = np.lexsort((np.arange(n), dist))
            center[order[: self.n_center]] = True
        dmax = dist.max()
        d = dist / (2.0 * dmax) if dmax > 0 else dist
        weight = (1.0 - d) ** self.degree
        cap = 1.0 if self.target_accel == 1.0 else _PROB_CAP

        def probs_at(s):
            p = np.minimum(cap, s * weight)
            p[p >= 1.0 - 1e-9] = 1.0  # reachable only when cap is 1
            p[center] = 1.0
            return p

        def accel_at(s):
            return n / probs_at(s).sum()

        hi = 4.0 / weight.min()
        if accel_at(hi) > self.target_accel:
            raise ConfigError("density scale bracket failed; target_accel too low")
        lo = 0.0
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            if accel_at(mid) > self.target_accel:
                lo = mid
            else:
                hi = mid
        probs = probs_at(hi)
        got = n / probs.sum()
        if abs(got - self.target_accel) > _ACCEL_RTOL * self.target_accel:
            raise ConfigError(
                f"density scaling missed target acceleration: {got} vs {self.target_accel}"
            )
        if np.any(probs <= 0.0):
            raise ConfigError("density scaling produced a zero probability")
        return probs

    def probs(self) -> np.ndarray:
        """Length-q per-index inclusion probabilities."""
        return _index_probs_cached(self)

    def draw(self, rng: np.random.Generator) -> SamplingMask:
        """Draw one mask. Column-kind 2-D masks decide per column and broadcast."""
        site = self.site_probs()
        picked = rng.random(site.shape[0]) < site
        if self.kind == COLUMN_POLYNOMIAL and self.shape is not None:
            nx, ny = self.shape
            member = np.broadcast_to(picked, (nx, ny)).ravel()
            return _mask_unchecked(member, self.probs())
        return _mask_unchecked(picked, site)


@lru_cache(maxsize=64)
def _site_probs_cached(dist: MaskDistribution) -> np.ndarray:
    probs = dist._site_probs_impl()
    probs.setflags(write=False)
    return probs


@lru_cache(maxsize=64)
def _index_probs_cached(dist: MaskDistribution) -> np.ndarray:
    site = dist.site_probs()
    if dist.kind == COLUMN_POLYNOMIAL and dist.shape is not None:
        nx, ny = dist.shape
        site = np.broadcast_to(site, (nx, ny)).ravel().copy()
        site.setflags(write=False)
    return site


def build_density(dist: MaskDistribution) -> np.ndarray:
    """Probability vector of the distribution (length q)."""
    return dist.probs()


def draw_mask(probs, rng: np.random.Generator) -> SamplingMask:
    """Independent Bernoulli draw from an explicit probability vector."""
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs <= 0.0) or np.any(probs > 1.0):
        raise ValidationError("draw_mask requires probabilities in (0, 1]")
    member = rng.random(probs.shape[0]) < probs
    return SamplingMask(member, probs)


def validate_mask_conditions(p, ptilde) -> None:
    """Check the first/second-level mask requirements.

    Requires p_j > 0 everywhere and ptilde_j < 1 wherever p_j < 1; the
    self-supervision identities below are only valid under these conditions.
    """
    p = np.asarray(p, dtype=np.float64)
    pt = np.asarray(ptilde, dtype=np.float64)
    if p.shape != pt.shape:
        raise ValidationError(f"probability vectors disagree in length: {p.shape} vs {pt.shape}")
    bad = np.nonzero(p <= 0.0)[0]
    if bad.size:
        raise ValidationError(f"p must be positive everywhere; p[{bad[0]}] = {p[bad[0]]}")
    bad = np.nonzero((p < 1.0) & (pt >= 1.0))[0]
    if bad.size:
        raise ValidationError(
            f"ptilde must be < 1 wherever p < 1; index {bad[0]} has "
            f"p = {p[bad[0]]}, ptilde = {pt[bad[0]]}"
        )


def compute_k(p, ptilde) -> np.ndarray:
    """k_j = (1 - p_j) / (1 - ptilde_j p_j), entrywise in [0, 1).

    Fully sampled indices (p_j = 1) give k_j = 0 regardless of ptilde_j.
    """
    validate_mask_conditions(p, ptilde)
    p = np.asarray(p, dtype=np.float64)
    pt = np.asarray(ptilde, dtype=np.float64)
    k = np.zeros_like(p)
    free = p < 1.0
    k[free] = (1.0 - p[free]) / (1.0 - pt[free] * p[free])
    return k


def compute_P(p, ptilde) -> np.ndarray:
    """Density-compensation diagonal P_jj = (1 - p_j ptilde_j) / (p_j (1 - ptilde_j)).

    At indices with p_j = ptilde_j = 1 the weight is never applied (the
    index is almost surely absent from Omega \\ Lambda), so 1 is returned
    there. Satisfies P_jj (1 - k_j) = 1 wherever the weight is defined.
    """
    validate_mask_conditions(p, ptilde)
    p = np.asarray(p, dtype=np.float64)
    pt = np.asarray(ptilde, dtype=np.float64)
    out = np.ones_like(p)
    used = pt < 1.0
    denom = p[used] * (1.0 - pt[used])
    bad = np.nonzero(denom == 0.0)[0]
    if bad.size:
        j = np.nonzero(used)[0][bad[0]]
        raise ValidationError(f"P weight undefined at index {j}: p={p[j]}, ptilde={pt[j]}")
    out[used] = (1.0 - p[used] * pt[used]) / denom
    return out
