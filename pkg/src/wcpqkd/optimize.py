"""Pulse-intensity optimization over the secure operating window.

For each fibre length the gain G(mu) rises from negative (dark counts
dominate the error rate at small mu), peaks, and falls negative again
(multi-photon pulses hand the eavesdropper too much).  The search brackets
the maximum on a log-spaced grid, refines it with golden-section search in
log mu, and locates the two G = 0 crossings by bisection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .link import ChannelParams, DetectorParams, SourceParams
from .rates import RateParams, gain_to_bps, secure_gain, sifted_gain

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class EmptyWindow(Exception):
    """No pulse intensity in the search bounds yields a positive secure gain."""


@dataclass(frozen=True)
class OptimizeConfig:
    mu_bounds: tuple[float, float] = (1e-5, 1.0)
    rel_tol: float = 1e-4
    grid_points: int = 200

    def __post_init__(self):
        lo, hi = self.mu_bounds
        if not 0 < lo < hi <= 1:
            raise ValueError(f"mu_bounds must satisfy 0 < lo < hi <= 1, got {self.mu_bounds}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be > 0, got {self.rel_tol}")
        if self.grid_points < 3:
            raise ValueError(f"grid_points must be >= 3, got {self.grid_points}")


@dataclass(frozen=True)
class SecureWindow:
    """Secure intensity interval [mu_min, mu_max] with the gain maximum inside."""
    mu_min: float
    mu_max: float
    mu_opt: float
    g_max: float


@dataclass(frozen=True)
class RatePoint:
    """One row of a rate-vs-length table; value fields are None beyond the
    maximum secure length."""
    length_km: float
    mu_opt: float | None
    sifted_bps: float | None
    secure_bps: float | None
    qber: float | None
    secure: bool


def _gain(mu, length_km, detector, alpha, rate_params):
    src = SourceParams(mu=mu, clock_rate=1.0)
    ch = ChannelParams(length_km=length_km, attenuation_db_per_km=alpha)
    return secure_gain(src, ch, detector, rate_params).secure_gain


def _golden_max(f, lo, hi, rel_tol):
    """Golden-section maximum of f on [lo, hi] in log space.

    Ties resolve toward the smaller argument (ranges shrink from the right
    on ties), the conservative choice for the pulse intensity.
    """
    a, b = math.log(lo), math.log(hi)
    c = b - (b - a) * INV_PHI
    d = a + (b - a) * INV_PHI
    fc, fd = f(math.exp(c)), f(math.exp(d))
    # stop when the bracket width in log space is below the relative tolerance
    while (b - a) > rel_tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - (b - a) * INV_PHI
            fc = f(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + (b - a) * INV_PHI
            fd = f(math.exp(d))
    x = math.exp((a + b) / 2.0)
    return x, f(x)


def _bisect_root(f, lo, hi, rel_tol, max_iter=50):
    """Root of f on [lo, hi] (f(lo), f(hi) of opposite sign), log-space bisection."""
    flo = f(lo)
    for _ in range(max_iter):
        if hi / lo - 1.0 <= rel_tol:
            break
        mid = math.sqrt(lo * hi)
        fm = f(mid)
        if (flo <= 0.0) == (fm <= 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return math.sqrt(lo * hi)


def optimize_mu(length_km: float, detector: DetectorParams,
                channel_alpha: float = 0.21,
                rate_params: RateParams = RateParams(),
                cfg: OptimizeConfig = OptimizeConfig()) -> SecureWindow:
    """Locate the secure window and the gain-maximizing intensity at one length.

    Coarse log-grid bracketing, golden-section refinement of the maximum,
    bisection for the window edges.  Raises EmptyWindow when the gain is
    nowhere positive in the bounds.  Unimodality is taken from the grid: if
    the grid shows several local maxima the global grid argmax is still the
    refinement bracket, so only a local guarantee is lost.
    """
    lo, hi = cfg.mu_bounds
    mus = np.geomspace(lo, hi, cfg.grid_points)
    f = lambda mu: _gain(mu, length_km, detector, channel_alpha, rate_params)
    gains = np.array([f(mu) for mu in mus])

    i_best = int(np.argmax(gains))
    if gains[i_best] <= 0.0:
        raise EmptyWindow(
            f"no secure intensity in [{lo}, {hi}] at {length_km} km (max gain {gains[i_best]:.3e})")

    b_lo = mus[max(i_best - 1, 0)]
    b_hi = mus[min(i_best + 1, len(mus) - 1)]
    mu_opt, g_opt = _golden_max(f, b_lo, b_hi, cfg.rel_tol)
    if g_opt < gains[i_best]:
        mu_opt, g_opt = float(mus[i_best]), float(gains[i_best])

    positive = gains > 0.0
    # lower crossing: last non-positive grid point left of the maximum
    mu_min = lo
    left = np.nonzero(~positive[: i_best + 1])[0]
    if left.size:
        j = left[-1]
        mu_min = _bisect_root(f, mus[j], mus[j + 1], cfg.rel_tol)
    # upper crossing: first non-positive grid point right of the maximum
    mu_max = hi
    right = np.nonzero(~positive[i_best:])[0]
    if right.size:
        j = i_best + right[0]
        mu_max = _bisect_root(f, mus[j - 1], mus[j], cfg.rel_tol)

    return SecureWindow(mu_min=mu_min, mu_max=mu_max, mu_opt=mu_opt, g_max=g_opt)


def max_secure_length(detector: DetectorParams, alpha: float = 0.21,
                      rate_params: RateParams = RateParams(),
                      cfg: OptimizeConfig = OptimizeConfig(),
                      length_cap_km: float = 4096.0) -> float:
    """Largest fibre length with a non-empty secure window, to 0.1 km.

    Doubles an upper bracket until the window closes, then bisects.  With
    noiseless detectors the window never closes and the search returns
    length_cap_km (the intensity bounds are then the only limit).
    """
    def secure(l):
        try:
            return optimize_mu(l, detector, alpha, rate_params, cfg).g_max > 0.0
        except EmptyWindow:
            return False

    if not secure(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while secure(hi):
        lo = hi
        hi *= 2.0
        if hi >= length_cap_km:
            if secure(length_cap_km):
                return length_cap_km
            hi = length_cap_km
            break
    while hi - lo > 0.1:
        mid = (lo + hi) / 2.0
        if secure(mid):
            lo = mid
        else:
            hi = mid
    return lo


def rate_curve(lengths, detector: DetectorParams, alpha: float = 0.21,
               rate_params: RateParams = RateParams(),
               clock_rate: float = 2e6,
               cfg: OptimizeConfig = OptimizeConfig()) -> list[RatePoint]:
    """Optimal-intensity rates per fibre length: the data behind the
    sifted/secure rate curves and the QBER inset."""
    if not len(lengths):
        raise ValueError("lengths must be non-empty")
    rows = []
    for l in lengths:
        if l < 0:
            raise ValueError(f"lengths must be >= 0, got {l}")
        try:
            win = optimize_mu(l, detector, alpha, rate_params, cfg)
        except EmptyWindow:
            rows.append(RatePoint(length_km=float(l), mu_opt=None, sifted_bps=None,
                                  secure_bps=None, qber=None, secure=False))
            continue
        src = SourceParams(mu=win.mu_opt, clock_rate=clock_rate)
        ch = ChannelParams(length_km=l, attenuation_db_per_km=alpha)
        bd = secure_gain(src, ch, detector, rate_params)
        rows.append(RatePoint(
            length_km=float(l),
            mu_opt=win.mu_opt,
            sifted_bps=gain_to_bps(sifted_gain(bd.detect_prob), clock_rate),
            secure_bps=gain_to_bps(bd.secure_gain, clock_rate),
            qber=bd.qber,
            secure=True,
        ))
    return rows


def contour_grid(mu_grid, length_grid, detector: DetectorParams,
                 alpha: float = 0.21,
                 rate_params: RateParams = RateParams()) -> np.ndarray:
    """Gain matrix G[i, j] over mu_grid x length_grid.

    Insecure cells carry the flagged negative continuation.  Cells are
    independent, so the result does not depend on evaluation order.
    """
    mu_grid = np.asarray(mu_grid, dtype=float)
    length_grid = np.asarray(length_grid, dtype=float)
    for name, grid in (("mu_grid", mu_grid), ("length_grid", length_grid)):
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError(f"{name} must be a non-empty 1-d grid")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError(f"{name} must be strictly increasing")
    out = np.empty((mu_grid.size, length_grid.size))
    for i, mu in enumerate(mu_grid):
        for j, l in enumerate(length_grid):
            out[i, j] = _gain(mu, l, detector, alpha, rate_params)
    return out
