"""Non-resonant momentum sets, isoenergetic curves, smooth extension.

The non-resonant set is mapped on a k grid by thresholding the plane-wave
weight and the kinetic resonance gap of the branch solve.  Isoenergetic
curves are traced as radius-vs-angle roots of lambda_n(kappa*nu) = lambda
along rays; directions whose search runs into resonant momenta are excluded
from the direction set.  The branch correction lambda_n - |k|^2 is extended
across resonant holes by multiplying with a mollified indicator of the
non-resonant region and adding |k|^2 back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import brentq

from .bloch import BlochContext, DispersionBranch, ResonantFlag, solve_branch, sweep_branch


@dataclass(frozen=True, eq=False)
class NonResonantMask:
    """Boolean non-resonant map over a k rectangle with per-cell diagnostics."""

    branch: DispersionBranch
    mask: np.ndarray
    threshold: float
    gap_min: float
    level: int

    @property
    def fraction(self) -> float:
        return float(np.mean(self.mask))

    def remask(self, threshold: float | None = None, gap_min: float | None = None):
        """Re-threshold the same branch data; monotone in both parameters."""
        th = self.threshold if threshold is None else threshold
        gm = self.gap_min if gap_min is None else gap_min
        mask = (~self.branch.resonant) & (self.branch.weight >= th) & (self.branch.gap > gm)
        return NonResonantMask(self.branch, mask, th, gm, self.level)


def build_mask(
    ctx: BlochContext,
    kx_centers: np.ndarray,
    ky_centers: np.ndarray,
    threshold: float = 0.9,
    gap_min: float = 0.5,
    workers: int = 1,
) -> NonResonantMask:
    if len(kx_centers) == 0 or len(ky_centers) == 0:
        raise ValueError("empty quasimomentum rectangle")
    branch = sweep_branch(ctx, kx_centers, ky_centers, threshold, workers=workers)
    mask = (~branch.resonant) & (branch.weight >= threshold) & (branch.gap > gap_min)
    return NonResonantMask(branch, mask, threshold, gap_min, ctx.level)


def build_mask_rect(
    ctx: BlochContext,
    k_rect: tuple[float, float, float, float],
    resolution: tuple[int, int],
    threshold: float = 0.9,
    gap_min: float = 0.5,
    workers: int = 1,
) -> NonResonantMask:
    """Rectangle (kx0, kx1, ky0, ky1) sampled at cell centers."""
    kx0, kx1, ky0, ky1 = k_rect
    nx, ny = resolution
    if nx < 1 or ny < 1 or kx1 <= kx0 or ky1 <= ky0:
        raise ValueError("empty quasimomentum rectangle")
    hx, hy = (kx1 - kx0) / nx, (ky1 - ky0) / ny
    kx = kx0 + hx * (np.arange(nx) + 0.5)
    ky = ky0 + hy * (np.arange(ny) + 0.5)
    return build_mask(ctx, kx, ky, threshold, gap_min, workers=workers)


# ---------------------------------------------------------------------------
# isoenergetic curves
# ---------------------------------------------------------------------------


class NoRoot:
    """Direction excluded from the level set: no non-resonant radius found."""

    def __init__(self, phi: float, reason: str):
        self.phi = phi
        self.reason = reason

    def __repr__(self):
        return f"NoRoot(phi={self.phi:.4f}, {self.reason})"


def isoenergetic_radius(
    ctx: BlochContext,
    lam: float,
    phi: float,
    bracket: tuple[float, float] | None = None,
    threshold: float = 0.9,
    rtol: float = 1e-12,
):
    """Radius kappa with lambda_n(kappa*nu) = lam along direction angle phi.

    Bracketed root search on the branch eigenvalue; any resonant momentum
    met during the search excludes the direction.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    root_lam = float(np.sqrt(lam))
    if bracket is None:
        bracket = (0.5 * root_lam, 1.5 * root_lam)
    lo, hi = bracket
    if not (0.0 < lo < hi):
        raise ValueError(f"invalid bracket {bracket}")
    nu = np.array([np.cos(phi), np.sin(phi)])

    class _Resonant(Exception):
        pass

    def f(kappa: float) -> float:
        got = solve_branch(ctx, kappa * nu, threshold)
        if isinstance(got, ResonantFlag):
            raise _Resonant()
        return got.lam - lam

    try:
        flo, fhi = f(lo), f(hi)
        if flo > 0 or fhi < 0:
            return NoRoot(phi, f"bracket does not straddle the level: [{flo:.3g}, {fhi:.3g}]")
        kappa = brentq(f, lo, hi, xtol=rtol * root_lam, rtol=4 * np.finfo(float).eps)
    except _Resonant:
        return NoRoot(phi, "resonant momentum inside bracket")
    residual = f(kappa)
    if abs(residual) > 1e-8 * lam:
        return NoRoot(phi, f"root residual {residual:.3e} too large")
    return float(kappa)


@dataclass(frozen=True, eq=False)
class IsoenergeticCurve:
    lam: float
    phi: np.ndarray
    kappa: np.ndarray  # NaN where not a member
    member: np.ndarray
    level: int

    @property
    def max_deviation(self) -> float:
        """max over member directions of |kappa - sqrt(lambda)|."""
        if not np.any(self.member):
            return np.nan
        return float(np.max(np.abs(self.kappa[self.member] - np.sqrt(self.lam))))


def trace_isoenergetic(
    ctx: BlochContext,
    lam: float,
    phi_samples: int,
    threshold: float = 0.9,
) -> IsoenergeticCurve:
    phis = 2.0 * np.pi * np.arange(phi_samples) / phi_samples
    kappa = np.full(phi_samples, np.nan)
    member = np.zeros(phi_samples, dtype=bool)
    for i, phi in enumerate(phis):
        got = isoenergetic_radius(ctx, lam, float(phi), threshold=threshold)
        if isinstance(got, NoRoot):
            continue
        kappa[i] = got
        member[i] = True
    return IsoenergeticCurve(lam, phis, kappa, member, ctx.level)


def direction_set_measure(curve: IsoenergeticCurve) -> float:
    """Lebesgue measure estimate of the direction set: member fraction x 2*pi."""
    if len(curve.phi) < 360:
        raise ValueError("need at least 360 direction samples")
    return 2.0 * np.pi * float(np.mean(curve.member))


def curve_derivative(curve: IsoenergeticCurve) -> np.ndarray:
    """Central finite differences d(kappa)/d(phi) over consecutive members.

    Entries where the three-point stencil leaves the member set are NaN.
    """
    n = len(curve.phi)
    if n < 3:
        raise ValueError("need at least 3 direction samples")
    out = np.full(n, np.nan)
    h = 2.0 * np.pi / n
    for i in range(n):
        im, ip = (i - 1) % n, (i + 1) % n
        if curve.member[im] and curve.member[i] and curve.member[ip]:
            out[i] = (curve.kappa[ip] - curve.kappa[im]) / (2.0 * h)
    return out


# ---------------------------------------------------------------------------
# smooth extension across resonant holes
# ---------------------------------------------------------------------------


def bump_kernel(radius_cells: float) -> np.ndarray:
    """Compactly supported polynomial bump (1-|u|^2)^4, unit mass."""
    r = int(np.ceil(radius_cells))
    xs = np.arange(-r, r + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    u2 = (xx**2 + yy**2) / radius_cells**2
    ker = np.where(u2 < 1.0, (1.0 - np.minimum(u2, 1.0)) ** 4, 0.0)
    return ker / ker.sum()


def _disc(radius_cells: float) -> np.ndarray:
    r = int(np.ceil(radius_cells))
    xs = np.arange(-r, r + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    return xx**2 + yy**2 <= radius_cells**2


def blend_correction(
    mask: np.ndarray, correction: np.ndarray, blend_cells: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mollify a correction defined on mask-true cells.

    Returns (blended correction, blend weights).  Weights are the bump
    convolution of the mask indicator, forced to exactly 1 on the mask
    eroded by the blend radius and exactly 0 outside its dilation; the
    blended field reproduces the input values on the eroded region exactly.
    """
    if blend_cells < 1.0:
        raise ValueError("blend width below grid spacing")
    ker = bump_kernel(blend_cells)
    disc = _disc(blend_cells)
    ind = mask.astype(float)
    weights = ndimage.convolve(ind, ker, mode="constant", cval=0.0)
    eroded = ndimage.binary_erosion(mask, structure=disc, border_value=0)
    dilated = ndimage.binary_dilation(mask, structure=disc, border_value=0)
    weights[eroded] = 1.0
    weights[~dilated] = 0.0
    np.clip(weights, 0.0, 1.0, out=weights)
    filled = np.where(mask, correction, 0.0)
    blended = weights * filled
    blended[eroded] = filled[eroded]  # bitwise agreement on the eroded core
    return blended, weights


@dataclass(frozen=True, eq=False)
class ExtendedDispersion:
    """lambda_ext = |k|^2 + blended correction on the mask rectangle."""

    kx: np.ndarray
    ky: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    eroded: np.ndarray
    blend_cells: float

    def derivative_bounds(self, max_order: int = 4) -> dict[int, float]:
        """sup of forward differences of (lambda_ext - |k|^2) per total order."""
        kx2 = self.kx[:, None] ** 2 + self.ky[None, :] ** 2
        corr = self.values - kx2
        hx = self.kx[1] - self.kx[0] if len(self.kx) > 1 else 1.0
        hy = self.ky[1] - self.ky[0] if len(self.ky) > 1 else 1.0
        out: dict[int, float] = {}
        for order in range(1, max_order + 1):
            worst = 0.0
            for mx in range(order + 1):
                my = order - mx
                d = corr
                for _ in range(mx):
                    d = np.diff(d, axis=0) / hx
                for _ in range(my):
                    d = np.diff(d, axis=1) / hy
                if d.size:
                    worst = max(worst, float(np.max(np.abs(d))))
            out[order] = worst
        return out


def extend_dispersion(mask: NonResonantMask, blend_cells: float) -> ExtendedDispersion:
    if not np.any(mask.mask):
        raise ValueError("mask has no non-resonant cells")
    branch = mask.branch
    kx2 = branch.kx[:, None] ** 2 + branch.ky[None, :] ** 2
    corr = np.where(mask.mask, branch.lam - kx2, 0.0)
    corr = np.nan_to_num(corr)
    blended, weights = blend_correction(mask.mask, corr, blend_cells)
    values = kx2 + blended
    eroded = ndimage.binary_erosion(mask.mask, structure=_disc(blend_cells), border_value=0)
    # exact branch values on the eroded core, same floats
    values[eroded] = branch.lam[eroded]
    return ExtendedDispersion(
        kx=branch.kx,
        ky=branch.ky,
        values=values,
        weights=weights,
        eroded=eroded,
        blend_cells=blend_cells,
    )
