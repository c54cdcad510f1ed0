"""Inter-cell interference coordination with interference power profiles.

A cell (the *owner*) protects its own receiver by publishing, for each
neighbouring cell (the *target*), a per-subband cap on the interference the
target's users may cause at the owner's base station.  Caps are ``P_h``
inside a contiguous high-interference window (HIR) and ``P_l`` elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class CellUtility:
    cell_id: int
    value: float  # worst (largest) distortion in the cell over the last period
    period: int = 0


@dataclass(frozen=True)
class IPP:
    owner_cell: int
    target_neighbor: int
    c_bw: int
    p_h: float
    p_l: float  # adapted low cap
    c_hir: float  # adapted HIR width, kept real-valued
    f_start: int
    c_hir_floor: int
    p_l_floor: float

    @property
    def hir_width(self):
        return int(min(max(math.floor(self.c_hir + 0.5), 0), self.c_bw))

    def caps(self):
        """Per-subband received-interference cap in W."""
        caps = np.full(self.c_bw, self.p_l, dtype=float)
        idx = (self.f_start + np.arange(self.hir_width)) % self.c_bw
        caps[idx] = self.p_h
        return caps

    def cap(self, channel):
        return float(self.caps()[channel])


def hir_offset(cell_type, c_bw):
    return (cell_type - 1) * (c_bw // 3)


def initial_ipp(cell_type, c_bw, c_hir, p_h, p_l, owner_cell=0, target_neighbor=0):
    """Design profile of a cell of the given type (1, 2 or 3)."""
    if not 0 <= c_hir <= c_bw:
        raise ConfigurationError(f"C_HIR={c_hir} must lie in [0, C_bw={c_bw}]", key="icon.c_hir")
    if p_l > p_h:
        raise ConfigurationError("P_l must not exceed P_h", key="icon.p_l")
    if cell_type not in (1, 2, 3):
        raise ConfigurationError(f"cell type {cell_type} not in 1..3")
    return IPP(owner_cell, target_neighbor, int(c_bw), float(p_h), float(p_l), float(c_hir),
               hir_offset(cell_type, c_bw), int(c_hir), float(p_l))


def _utility_value(u):
    return u.value if isinstance(u, CellUtility) else float(u)


def adapt_ipp(ipp, u_owner, u_target, alpha=0.2, beta=0.2):
    """One adaptation step of the profile ``ipp`` (owned by ``ipp.owner_cell``).

    With ``x = (U_owner - U_target) / ((U_owner + U_target) / 2)``::

        C_hir <- max(C_hir - alpha * x * C_bw, C_hir_design)   (<= C_bw)
        P_l   <- max(P_l   - beta  * x * P_h,  P_l_design)     (<= P_h)

    Utilities are worst-case distortions (larger is worse), so a target
    cell doing worse than the owner gets a looser profile.  A zero
    normaliser leaves the profile unchanged.
    """
    if not (0 <= alpha <= 1 and 0 <= beta <= 1):
        raise ConfigurationError("adaptation steps must lie in [0, 1]")
    uo, ut = _utility_value(u_owner), _utility_value(u_target)
    mean = (uo + ut) / 2
    if mean == 0 or not math.isfinite(mean):
        return ipp
    x = (uo - ut) / mean
    c_hir = min(max(ipp.c_hir - alpha * x * ipp.c_bw, ipp.c_hir_floor), ipp.c_bw)
    p_l = min(max(ipp.p_l - beta * x * ipp.p_h, ipp.p_l_floor), ipp.p_h)
    return replace(ipp, c_hir=c_hir, p_l=p_l)


def power_limit(source, channel, neighbor_ipps, topo=None):
    """Largest power keeping ``source`` within every neighbour's cap on ``channel``."""
    limit = math.inf
    for ipp in neighbor_ipps:
        if ipp.owner_cell == source.cell_id:
            continue
        limit = min(limit, ipp.cap(channel) / source.gains[ipp.owner_cell])
    return limit


def transmit_power(p_max, p_min_cfg, p_max_cfg):
    """``max(min(p_max, P_MAX), P_MIN)``."""
    if p_min_cfg > p_max_cfg:
        raise ConfigurationError("P_MIN must not exceed P_MAX")
    out = np.maximum(np.minimum(p_max, p_max_cfg), p_min_cfg)
    return float(out) if np.ndim(out) == 0 else out


def achievable_rate(p_star, gain_own, noise_psd, bandwidth, interference):
    """Shannon rate on one subband for one (unit-length) frame."""
    sinr = np.asarray(p_star) * gain_own / (noise_psd * bandwidth + np.asarray(interference))
    out = bandwidth * np.log2(1.0 + sinr)
    return float(out) if np.ndim(out) == 0 else out


def interference_contributions(topo, assign, powers):
    """Received power at every base station from every cell's active user.

    ``assign`` is ``(K, C)`` global source ids (one per cell and channel),
    ``powers`` the ``(N, C)`` transmit power table.  Returns ``(K, K, C)``
    with ``[k, u, c]`` = power from cell ``u``'s user on ``c`` at BS ``k``;
    the diagonal ``k == u`` is zeroed.
    """
    assign = np.asarray(assign)
    K, C = assign.shape
    chans = np.arange(C)[None, :]
    p_act = powers[assign, chans]  # (K_u, C)
    g_act = topo.gains[assign]  # (K_u, C, K_k)
    contrib = np.einsum("uc,uck->kuc", p_act, g_act)
    contrib[np.arange(K), np.arange(K), :] = 0.0
    return contrib


def measure_interference(topo, assign, powers):
    """Total interference ``P^I[k, c]`` from users outside cell ``k``."""
    return interference_contributions(topo, assign, powers).sum(axis=1)


class IconState:
    """All profiles of the network, keyed by ``(owner, target)``.

    ``mode`` is ``"reuse1"`` (no caps), ``"static"`` or ``"adaptive"``.
    """

    def __init__(self, topo, mode, c_bw, c_hir=21, p_h=1.0, p_l=0.1, alpha=0.2, beta=0.2):
        if mode not in ("reuse1", "static", "adaptive"):
            raise ConfigurationError(f"unknown inter-cell mode {mode!r}", key="icon.mode")
        self.topo, self.mode, self.c_bw = topo, mode, int(c_bw)
        self.alpha, self.beta = alpha, beta
        self.ipps = {}
        if mode != "reuse1":
            for cell in topo.cells:
                for nb in cell.neighbors:
                    self.ipps[(cell.id, nb)] = initial_ipp(cell.cell_type, c_bw, c_hir, p_h, p_l,
                                                           owner_cell=cell.id, target_neighbor=nb)

    def caps(self, owner, target):
        if self.mode == "reuse1":
            return np.full(self.c_bw, np.inf)
        return self.ipps[(owner, target)].caps()

    def cap_tensor(self):
        """``(K_owner, K_target, C)`` caps; +inf where no profile applies."""
        K = self.topo.num_cells
        out = np.full((K, K, self.c_bw), np.inf)
        for (owner, target), ipp in self.ipps.items():
            out[owner, target] = ipp.caps()
        return out

    def power_limits(self):
        """``p_max[i, c]`` for every source: min over neighbour caps / gain."""
        topo = self.topo
        N = topo.num_sources
        limits = np.full((N, self.c_bw), np.inf)
        if self.mode == "reuse1":
            return limits
        for cell in topo.cells:
            ids = np.array(cell.source_ids)
            for nb in cell.neighbors:
                caps = self.ipps[(nb, cell.id)].caps()
                limits[ids] = np.minimum(limits[ids], caps[None, :] / topo.gains[ids, nb][:, None])
        return limits

    def adapt(self, utilities):
        """Every owner updates the profile it imposes on each neighbour."""
        if self.mode != "adaptive":
            return False
        u = np.asarray(utilities, dtype=float)
        self.ipps = {(o, t): adapt_ipp(ipp, u[o], u[t], self.alpha, self.beta)
                     for (o, t), ipp in self.ipps.items()}
        return True
