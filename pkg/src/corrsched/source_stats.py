"""Jointly Gaussian source model with exponential distance correlation.

All entropies are differential entropies in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateModelError

LOG2_2PIE = math.log2(2 * math.pi * math.e)
PD_TOLERANCE = 1e-12  # relative to the source variance


@dataclass(frozen=True)
class SourceModel:
    variance: float = 10.0
    theta: float = 100.0
    mean: float = 0.0

    def __post_init__(self):
        if not self.variance > 0:
            raise ConfigurationError("variance must be positive", key="source_model.variance")
        if not self.theta > 0:
            raise ConfigurationError("theta must be positive", key="source_model.theta")

    def correlation(self, distance):
        return np.exp(-np.asarray(distance, dtype=float) / self.theta)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    entries: np.ndarray
    member_ids: tuple[int, ...]
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "_pos", {sid: k for k, sid in enumerate(self.member_ids)})

    def indices(self, ids):
        try:
            return [self._pos[i] for i in ids]
        except KeyError as exc:
            raise KeyError(f"source {exc.args[0]} not in covariance matrix") from None

    def submatrix(self, ids):
        idx = self.indices(ids)
        return self.entries[np.ix_(idx, idx)]


def covariance(positions, model, member_ids=None, topo=None):
    """Covariance ``sigma^2 exp(-d_ij / theta)`` for the given source positions.

    Distances are wrapped when a topology is supplied, Euclidean otherwise.
    """
    if not model.theta > 0:
        raise ConfigurationError("theta must be positive", key="source_model.theta")
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if topo is not None:
        from .geometry import pairwise_wrapped_distances
        d = pairwise_wrapped_distances(pts, pts, topo.wrap_vectors)
        d = np.minimum(d, d.T)  # remove last-bit asymmetry of the wrap search
    else:
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    entries = model.variance * np.exp(-d / model.theta)
    if member_ids is None:
        member_ids = range(len(pts))
    return CovarianceMatrix(entries, tuple(int(i) for i in member_ids), model.variance)


def log2_det(matrix, variance=None):
    """log2 of the determinant of a symmetric PD matrix via Cholesky.

    Raises DegenerateModelError when a Cholesky pivot falls below
    ``PD_TOLERANCE * variance``.
    """
    m = np.asarray(matrix, dtype=float)
    if m.size == 0:
        return 0.0
    scale = float(variance) if variance is not None else float(np.max(np.diag(m)))
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise DegenerateModelError("covariance submatrix is not positive definite") from None
    pivots = np.diag(chol) ** 2
    if pivots.min() < PD_TOLERANCE * scale:
        raise DegenerateModelError(
            f"covariance submatrix is numerically singular (pivot {pivots.min():.3e})")
    return float(np.sum(np.log2(pivots)))


def joint_entropy(subset, cov):
    """``h(S) = 1/2 log2((2 pi e)^|S| det(Sigma_S))``."""
    ids = list(subset)
    if not ids:
        raise ValueError("joint_entropy needs a non-empty subset")
    return 0.5 * (len(ids) * LOG2_2PIE + log2_det(cov.submatrix(ids), cov.variance))


def conditional_entropy(s_set, given, cov):
    """``h(S | T)`` by the chain rule; an empty ``given`` returns ``h(S)``."""
    s_ids, g_ids = list(s_set), list(given)
    if set(s_ids) & set(g_ids):
        raise ValueError("conditional_entropy needs disjoint sets")
    if not g_ids:
        return joint_entropy(s_ids, cov)
    return joint_entropy(s_ids + g_ids, cov) - joint_entropy(g_ids, cov)


def equicorrelated_covariance(n, distance, model):
    """Covariance of ``n`` sources that are pairwise ``distance`` apart."""
    rho = float(model.correlation(distance))
    entries = model.variance * (rho * np.ones((n, n)) + (1 - rho) * np.eye(n))
    return CovarianceMatrix(entries, tuple(range(n)), model.variance)
