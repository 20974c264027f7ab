"""Barotropic stiffened-gas two-fluid EOS and the pressure-equilibrium closure.

Each fluid obeys p_k(rho_k) = p_k0 + c_k^2 (rho_k - rho_k0).  Given the
mixture density rho and mass fraction Y of fluid 1, the volume fraction
alpha is the unique root in (0,1) of p1(rho*Y/alpha) = p2(rho*(1-Y)/(1-alpha)),
which reduces to a quadratic after clearing denominators.  All functions
broadcast over numpy arrays and accept plain scalars.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from amrfv.errors import ConfigError, EosError

__all__ = [
    "EPS_Y",
    "FluidPair",
    "State",
    "solve_alpha",
    "mixture_pressure",
    "wood_sound_speed",
    "to_primitive",
    "from_primitive",
    "free_energy",
    "density_from_pressure",
    "state_from_pressure_alpha",
]

# mass/volume fractions are kept strictly inside (0,1)
EPS_Y = 1e-9


@dataclass(frozen=True)
class FluidPair:
    """Stiffened-gas constants for both fluids plus the relaxation factor."""

    p1_0: float
    rho1_0: float
    c1: float
    p2_0: float
    rho2_0: float
    c2: float
    theta: float = 1.05

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ConfigError("sound speeds must be positive")
        if self.rho1_0 <= 0 or self.rho2_0 <= 0:
            raise ConfigError("reference densities must be positive")
        if self.theta <= 1:
            raise ConfigError("relaxation factor theta must exceed 1")

    @property
    def A1(self) -> float:
        return self.p1_0 - self.c1**2 * self.rho1_0

    @property
    def A2(self) -> float:
        return self.p2_0 - self.c2**2 * self.rho2_0

    def p1(self, rho1):
        return self.p1_0 + self.c1**2 * (np.asarray(rho1) - self.rho1_0)

    def p2(self, rho2):
        return self.p2_0 + self.c2**2 * (np.asarray(rho2) - self.rho2_0)


@dataclass(frozen=True)
class State:
    """One conservative state; convenience wrapper over an array row."""

    rho: float
    rhoY: float
    mom: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.rhoY, *self.mom], dtype=np.float64)

    @staticmethod
    def from_array(w) -> "State":
        w = np.asarray(w, dtype=np.float64)
        return State(float(w[0]), float(w[1]), tuple(float(v) for v in w[2:]))


def _clamp_Y(Y):
    return np.clip(Y, EPS_Y, 1.0 - EPS_Y)


def _equilibrium_gap(alpha, m1, m2, fp):
    """p1 branch minus p2 branch; strictly decreasing in alpha.

    Grouped as (p1_0 - p2_0) + c1^2 (m1/a - rho1_0) - c2^2 (m2/(1-a) - rho2_0)
    so nearly-equal reference pressures cancel exactly instead of eating the
    precision of the c^2-scaled terms.
    """
    return (
        (fp.p1_0 - fp.p2_0)
        + fp.c1**2 * (m1 / alpha - fp.rho1_0)
        - fp.c2**2 * (m2 / (1.0 - alpha) - fp.rho2_0)
    )


def solve_alpha(rho, Y, fp: FluidPair):
    """Volume fraction of fluid 1 from the pressure-equilibrium closure."""
    rho = np.asarray(rho, dtype=np.float64)
    scalar = rho.ndim == 0 and np.ndim(Y) == 0
    rho, Y = np.broadcast_arrays(np.atleast_1d(rho), np.atleast_1d(np.asarray(Y, dtype=np.float64)))
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise EosError("non-positive or non-finite density")
    Yc = _clamp_Y(Y)
    m1 = rho * Yc
    m2 = rho * (1.0 - Yc)
    c1sq = fp.c1**2
    c2sq = fp.c2**2
    # (A2-A1) a^2 + (A1-A2 - c1^2 m1 - c2^2 m2) a + c1^2 m1 = 0 with
    # A_k = p_k0 - c_k^2 rho_k0; A2-A1 expanded term by term to avoid
    # cancelling two large reference pressures
    aq = (fp.p2_0 - fp.p1_0) - c2sq * fp.rho2_0 + c1sq * fp.rho1_0
    bq = -aq - c1sq * m1 - c2sq * m2
    cq = c1sq * m1
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = -cq / bq
        disc = bq * bq - 4.0 * aq * cq
        sq = np.sqrt(np.maximum(disc, 0.0))
        qq = -0.5 * (bq + np.where(bq >= 0, sq, -sq))
        r1 = qq / aq
        r2 = cq / qq
        quad = np.where((r2 > 0.0) & (r2 < 1.0), r2, r1)
    tiny = np.abs(aq) < 1e-14 * np.abs(bq)
    alpha = np.clip(np.where(tiny, lin, quad), EPS_Y, 1.0 - EPS_Y)
    # Newton polish; the gap is monotone so this converges quadratically
    for _ in range(2):
        gap = _equilibrium_gap(alpha, m1, m2, fp)
        slope = -c1sq * m1 / alpha**2 - c2sq * m2 / (1.0 - alpha) ** 2
        step = gap / slope
        alpha = np.clip(alpha - step, EPS_Y, 1.0 - EPS_Y)
    gap = _equilibrium_gap(alpha, m1, m2, fp)
    scale = np.maximum(np.abs(fp.A1 + c1sq * m1 / alpha), np.abs(fp.A2 + c2sq * m2 / (1.0 - alpha)))
    scale = np.maximum(scale, c1sq * m1 / alpha + c2sq * m2 / (1.0 - alpha))
    bad = np.abs(gap) > 1e-12 * scale
    if np.any(bad):
        alpha = np.ascontiguousarray(alpha)
        flat_a = alpha.reshape(-1)
        flat_m1 = np.ascontiguousarray(m1).reshape(-1)
        flat_m2 = np.ascontiguousarray(m2).reshape(-1)
        for i in np.flatnonzero(np.ascontiguousarray(bad).reshape(-1)):
            flat_a[i] = _bisect(flat_m1[i], flat_m2[i], fp)
    return float(alpha.reshape(-1)[0]) if scalar else alpha


def _bisect(m1, m2, fp, iters=200):
    lo, hi = EPS_Y * 1e-6, 1.0 - EPS_Y * 1e-6
    flo = _equilibrium_gap(lo, m1, m2, fp)
    fhi = _equilibrium_gap(hi, m1, m2, fp)
    if not (flo > 0 > fhi):
        raise EosError(
            f"no admissible volume fraction for m1={m1}, m2={m2} (unphysical parameters)"
        )
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _equilibrium_gap(mid, m1, m2, fp) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mixture_pressure(rho, Y, fp: FluidPair, alpha=None):
    """Equilibrium pressure p = p1(rho*Y/alpha)."""
    if alpha is None:
        alpha = solve_alpha(rho, Y, fp)
    rho = np.asarray(rho, dtype=np.float64)
    Yc = _clamp_Y(np.asarray(Y, dtype=np.float64))
    return fp.p1(rho * Yc / alpha)


def wood_sound_speed(rho, Y, fp: FluidPair, alpha=None):
    """Mixture sound speed: 1/(rho c)^2 = Y/(rho1 c1)^2 + (1-Y)/(rho2 c2)^2."""
    if alpha is None:
        alpha = solve_alpha(rho, Y, fp)
    rho = np.asarray(rho, dtype=np.float64)
    Yc = _clamp_Y(np.asarray(Y, dtype=np.float64))
    rho1 = rho * Yc / alpha
    rho2 = rho * (1.0 - Yc) / (1.0 - alpha)
    inv = Yc / (rho1 * fp.c1) ** 2 + (1.0 - Yc) / (rho2 * fp.c2) ** 2
    return 1.0 / (rho * np.sqrt(inv))


def to_primitive(W):
    """Conservative [rho, rho Y, rho u...] -> primitive [m1, m2, u...]."""
    W = np.asarray(W, dtype=np.float64)
    rho = W[..., 0]
    Yc = _clamp_Y(W[..., 1] / rho)
    V = np.empty_like(W)
    V[..., 0] = rho * Yc
    V[..., 1] = rho * (1.0 - Yc)
    V[..., 2:] = W[..., 2:] / rho[..., None]
    return V


def from_primitive(V):
    """Primitive [m1, m2, u...] -> conservative [rho, rho Y, rho u...]."""
    V = np.asarray(V, dtype=np.float64)
    rho = V[..., 0] + V[..., 1]
    W = np.empty_like(V)
    W[..., 0] = rho
    W[..., 1] = V[..., 0]
    W[..., 2:] = V[..., 2:] * rho[..., None]
    return W


def free_energy(rho, Y, fp: FluidPair, rho_ref=None, rel_tol=1e-9, max_panels=1024):
    """F(rho, Y) = integral of P(r, Y)/r^2 dr from rho_ref, by adaptive quadrature.

    Composite Gauss-Legendre with panel doubling until two successive
    refinements agree to ``rel_tol``.
    """
    rho = np.asarray(rho, dtype=np.float64)
    scalar = rho.ndim == 0 and np.ndim(Y) == 0
    rho, Y = np.broadcast_arrays(np.atleast_1d(rho), np.atleast_1d(np.asarray(Y, dtype=np.float64)))
    if rho_ref is None:
        rho_ref = 0.5 * min(fp.rho1_0, fp.rho2_0)
    if np.any(rho <= 0) or rho_ref <= 0:
        raise EosError("free energy requires positive densities")
    nodes, weights = np.polynomial.legendre.leggauss(12)
    nodes = 0.5 * (nodes + 1.0)  # onto [0, 1]
    weights = 0.5 * weights

    def integral(npanels):
        # panel-local nodes in [0,1], then scaled onto each [rho_ref, rho]
        t = (np.arange(npanels)[:, None] + nodes[None, :]).reshape(-1) / npanels
        w = np.tile(weights, npanels) / npanels
        r = rho_ref + (rho[..., None] - rho_ref) * t
        p = mixture_pressure(r, np.broadcast_to(Y[..., None], r.shape), fp)
        return (rho - rho_ref) * np.sum(w * p / r**2, axis=-1)

    npanels = 8
    prev = integral(npanels)
    while npanels < max_panels:
        npanels *= 2
        cur = integral(npanels)
        err = np.abs(cur - prev)
        if np.all(err <= rel_tol * np.maximum(np.abs(cur), 1e-30)):
            return float(cur.reshape(-1)[0]) if scalar else cur
        prev = cur
    raise EosError("free-energy quadrature did not converge")


def density_from_pressure(p, Y, fp: FluidPair):
    """Mixture density at pressure p and mass fraction Y (equilibrium)."""
    p = np.asarray(p, dtype=np.float64)
    Yc = _clamp_Y(np.asarray(Y, dtype=np.float64))
    rho1 = fp.rho1_0 + (p - fp.p1_0) / fp.c1**2
    rho2 = fp.rho2_0 + (p - fp.p2_0) / fp.c2**2
    if np.any(rho1 <= 0) or np.any(rho2 <= 0):
        raise EosError("pressure below vacuum for one fluid")
    return 1.0 / (Yc / rho1 + (1.0 - Yc) / rho2)


def state_from_pressure_alpha(p, alpha, u, fp: FluidPair):
    """Conservative state rows from (p, alpha, velocity) at equilibrium.

    ``alpha`` may be an array; ``u`` is a (dim,) vector or (N, dim) array.
    """
    p = np.asarray(p, dtype=np.float64)
    alpha = np.clip(np.asarray(alpha, dtype=np.float64), EPS_Y, 1.0 - EPS_Y)
    rho1 = fp.rho1_0 + (p - fp.p1_0) / fp.c1**2
    rho2 = fp.rho2_0 + (p - fp.p2_0) / fp.c2**2
    if np.any(rho1 <= 0) or np.any(rho2 <= 0):
        raise EosError("pressure below vacuum for one fluid")
    rho = alpha * rho1 + (1.0 - alpha) * rho2
    rhoY = alpha * rho1
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        u = np.broadcast_to(u, rho.shape + u.shape)
    W = np.empty(rho.shape + (2 + u.shape[-1],), dtype=np.float64)
    W[..., 0] = rho
    W[..., 1] = rhoY
    W[..., 2:] = rho[..., None] * u
    return W
