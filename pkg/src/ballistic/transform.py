"""Discrete eigenfunction transforms, mollified cutoffs, wave packets.

The momentum grid is the dual grid of the simulation box, so the packet
synthesis

    Psi0(x) = (dk / 2*pi) * sum_k phat(k) eta(k) Psi_n(k, x),
    Psi_n(k, x) = exp(i<k,x>) * (1 + sum_{r!=0} C_r(k) exp(i<p_r,x>)),

is exact on the torus: every p_r of a commensurate approximant is itself a
box wavenumber, so synthesis is frequency-space assembly followed by one
inverse FFT.  The forward transform is the matching inner product
(2*pi)^(-1) (F, Psi_n(k)) evaluated by frequency shifts.  Profiles carry
the transform normalization: with V = 0 the pair reduces bit-for-bit to
the unitary discrete Fourier transform, sum_k dk |phat|^2 = ||F||^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .bloch import BlochContext, solve_branch, ResonantFlag
from .fields import WaveField, dk_cell, dx_cell, k_axes
from .nonresonant import bump_kernel, _disc
from .potentials import LimitPeriodicPotential, truncate

AVAILABILITY_FLOOR = 0.5


class EmptyPacketError(ValueError):
    pass


# ---------------------------------------------------------------------------
# branch data on a window of the box dual grid
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BranchWindow:
    """Dispersion data on a contiguous window of box wavenumbers.

    ii/jj are the global FFT indices of the window rows/columns (wrapped),
    kx/ky the signed wavenumbers there.  offsets holds the approximant
    lattice as integer index shifts of the box grid, offsets[0] = (0, 0);
    coeffs[.., r] are eigenvector coefficients in the C_0 = 1 gauge.
    """

    box: tuple[float, float]
    resolution: tuple[int, int]
    ii: np.ndarray
    jj: np.ndarray
    kx: np.ndarray
    ky: np.ndarray
    available: np.ndarray
    mask: np.ndarray
    lam: np.ndarray
    grad: np.ndarray
    weight: np.ndarray
    gap: np.ndarray
    offsets: np.ndarray
    coeffs: np.ndarray
    level: int

    @property
    def shape(self):
        return self.available.shape

    def coupling_sup(self) -> float:
        """sum over r != 0 of sup_k |C_r| on available cells (closeness budget)."""
        if self.offsets.shape[0] <= 1:
            return 0.0
        c = np.abs(self.coeffs[..., 1:])
        c = np.where(self.available[..., None], c, 0.0)
        return float(np.sum(np.max(c.reshape(-1, c.shape[-1]), axis=0)))


def _window_indices(box, resolution, center, radius):
    kx_full, ky_full = k_axes(box, resolution)
    dkx = 2.0 * np.pi / box[0]
    dky = 2.0 * np.pi / box[1]
    i0 = int(np.round(center[0] / dkx - radius / dkx))
    i1 = int(np.round(center[0] / dkx + radius / dkx))
    j0 = int(np.round(center[1] / dky - radius / dky))
    j1 = int(np.round(center[1] / dky + radius / dky))
    if i1 - i0 + 1 > resolution[0] or j1 - j0 + 1 > resolution[1]:
        raise ValueError("window larger than the dual grid")
    ii = np.arange(i0, i1 + 1) % resolution[0]
    jj = np.arange(j0, j1 + 1) % resolution[1]
    kx = np.arange(i0, i1 + 1) * dkx
    ky = np.arange(j0, j1 + 1) * dky
    ny_x = np.pi * resolution[0] / box[0]
    ny_y = np.pi * resolution[1] / box[1]
    if np.max(np.abs(kx)) >= ny_x or np.max(np.abs(ky)) >= ny_y:
        raise ValueError("window reaches the Nyquist boundary")
    return ii, jj, kx, ky


def free_branch_window(box, resolution, center=(0.0, 0.0), radius=None) -> BranchWindow:
    """Exact free dispersion |k|^2 on a window (whole grid by default)."""
    if radius is None:
        n1, n2 = resolution
        ii = np.arange(n1)
        jj = np.arange(n2)
        kx, ky = k_axes(box, resolution)
    else:
        ii, jj, kx, ky = _window_indices(box, resolution, center, radius)
    wx, wy = len(ii), len(jj)
    lam = kx[:, None] ** 2 + ky[None, :] ** 2
    grad = np.zeros((wx, wy, 2))
    grad[..., 0] = 2.0 * kx[:, None]
    grad[..., 1] = 2.0 * ky[None, :]
    ones = np.ones((wx, wy))
    return BranchWindow(
        box=tuple(box),
        resolution=tuple(resolution),
        ii=ii,
        jj=jj,
        kx=kx,
        ky=ky,
        available=ones.astype(bool),
        mask=ones.astype(bool),
        lam=lam,
        grad=grad,
        weight=ones,
        gap=np.full((wx, wy), np.inf),
        offsets=np.zeros((1, 2), dtype=int),
        coeffs=np.ones((wx, wy, 1), dtype=complex),
        level=0,
    )


def solve_branch_window(
    ctx: BlochContext,
    potential: LimitPeriodicPotential,
    box,
    resolution,
    center,
    radius,
    threshold: float = 0.9,
    gap_min: float = 0.5,
    workers: int = 1,
) -> BranchWindow:
    """Branch solves on every box-dual cell within `radius` of `center`.

    Requires the box to be commensurate with the approximant periods so the
    approximant lattice embeds in the box dual grid.
    """
    d1, d2 = truncate(potential, ctx.level).period_at(ctx.level)
    rep1, rep2 = box[0] / d1, box[1] / d2
    if abs(rep1 - round(rep1)) > 1e-9 or abs(rep2 - round(rep2)) > 1e-9:
        raise ValueError(f"box {box} incommensurate with approximant period {(d1, d2)}")
    rep1, rep2 = int(round(rep1)), int(round(rep2))

    offsets = np.array([(m1 * rep1, m2 * rep2) for m1, m2 in ctx.lattice.labels], dtype=int)
    ii, jj, kx, ky = _window_indices(box, resolution, center, radius)
    wx, wy = len(ii), len(jj)
    nmodes = len(ctx.lattice.labels)

    # first-order extension data used inside resonant holes: the true
    # eigenvector there is a degenerate mixture, not a perturbation of the
    # plane wave, so holes carry the smooth continuation from outside
    # (resonant denominators dropped) exactly as the blended extension does.
    index = ctx.lattice.index_of()
    w_row = np.zeros(nmodes, dtype=complex)
    for off, v in ctx.mode_offsets.items():
        j = index.get(off)
        if j is not None:
            w_row[j] = v

    available = np.zeros((wx, wy), dtype=bool)
    mask = np.zeros((wx, wy), dtype=bool)
    lam = np.full((wx, wy), np.nan)
    grad = np.zeros((wx, wy, 2))
    weight = np.zeros((wx, wy))
    gap = np.zeros((wx, wy))
    coeffs = np.zeros((wx, wy, nmodes), dtype=complex)
    for a in range(wx):
        for b in range(wy):
            kvec = np.array([kx[a], ky[b]])
            got = solve_branch(ctx, kvec, threshold=0.0)
            weight[a, b] = got.weight
            gap[a, b] = got.gap
            available[a, b] = True
            if got.weight >= threshold and got.gap > gap_min:
                mask[a, b] = True
                lam[a, b] = got.lam
                grad[a, b] = got.grad
                coeffs[a, b] = got.rel_coefficients
            else:
                kk2 = float(kvec @ kvec)
                denom = kk2 - np.sum((ctx.lattice.points + kvec[None, :]) ** 2, axis=1)
                safe = np.abs(denom) > max(gap_min, 1e-9)
                c = np.zeros(nmodes, dtype=complex)
                c[safe] = w_row[safe] / denom[safe]
                c[0] = 1.0
                lam[a, b] = kk2 + float(np.real(np.sum(np.conj(w_row[safe]) * c[safe])))
                grad[a, b] = 2.0 * kvec
                coeffs[a, b] = c
    return BranchWindow(
        box=tuple(box),
        resolution=tuple(resolution),
        ii=ii,
        jj=jj,
        kx=kx,
        ky=ky,
        available=available,
        mask=mask,
        lam=lam,
        grad=grad,
        weight=weight,
        gap=gap,
        offsets=offsets,
        coeffs=coeffs,
        level=ctx.level,
    )


# ---------------------------------------------------------------------------
# mollified cutoff
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class CutoffFunction:
    """Smooth indicator: 1 on the base mask, 0 outside its delta-neighborhood."""

    eta: np.ndarray
    delta_cells: float
    mask: np.ndarray

    def sup_gradient(self, dk: tuple[float, float]) -> float:
        gx = np.diff(self.eta, axis=0) / dk[0]
        gy = np.diff(self.eta, axis=1) / dk[1]
        gmax = 0.0
        if gx.size:
            gmax = max(gmax, float(np.max(np.abs(gx))))
        if gy.size:
            gmax = max(gmax, float(np.max(np.abs(gy))))
        return gmax


def build_eta_delta(mask: np.ndarray, delta_cells: float) -> CutoffFunction:
    """Convolve the delta/2-dilated indicator with a bump of radius delta/2.

    The result is exactly 1 on the mask, supported inside the
    delta-dilation, with gradients O(1/delta).
    """
    if delta_cells < 2.0:
        raise ValueError("delta must be at least 2 grid cells")
    half = delta_cells / 2.0
    dilated_half = ndimage.binary_dilation(mask, structure=_disc(half + 0.5), border_value=0)
    ker = bump_kernel(half)
    eta = ndimage.convolve(dilated_half.astype(float), ker, mode="constant", cval=0.0)
    dilated_full = ndimage.binary_dilation(mask, structure=_disc(delta_cells), border_value=0)
    eta[mask] = 1.0
    eta[~dilated_full] = 0.0
    np.clip(eta, 0.0, 1.0, out=eta)
    return CutoffFunction(eta=eta, delta_cells=delta_cells, mask=mask.copy())


# ---------------------------------------------------------------------------
# momentum profiles
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class MomentumProfile:
    """Complex amplitudes phat(k) on the window of the dual grid."""

    values: np.ndarray
    window: BranchWindow

    def decay_bounds(self, jmax: int = 6) -> dict[int, float]:
        kk = np.hypot(self.window.kx[:, None], self.window.ky[None, :])
        return {
            j: float(np.max(kk**j * np.abs(self.values))) for j in range(jmax + 1)
        }

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * dk_cell(self.window.box))


def gaussian_profile(window: BranchWindow, center, sigma: float) -> MomentumProfile:
    kx, ky = window.kx, window.ky
    d2 = (kx[:, None] - center[0]) ** 2 + (ky[None, :] - center[1]) ** 2
    return MomentumProfile(np.exp(-d2 / (4.0 * sigma**2)).astype(complex), window)


def ring_profile(window: BranchWindow, k_min: float, k_max: float) -> MomentumProfile:
    """Smooth radial bump supported on k_min <= |k| <= k_max."""
    kk = np.hypot(window.kx[:, None], window.ky[None, :])
    mid = 0.5 * (k_min + k_max)
    halfw = 0.5 * (k_max - k_min)
    u = (kk - mid) / halfw
    vals = np.where(np.abs(u) < 1.0, np.exp(-1.0 / np.maximum(1.0 - u**2, 1e-300)), 0.0)
    return MomentumProfile(vals.astype(complex), window)


@dataclass(eq=False)
class WavepacketSpec:
    profile: MomentumProfile
    cutoff: CutoffFunction
    level: int

    def __post_init__(self):
        if self.profile.values.shape != self.cutoff.eta.shape:
            raise ValueError("profile and cutoff must share the k window")


# ---------------------------------------------------------------------------
# synthesis / analysis
# ---------------------------------------------------------------------------


def _scatter(window: BranchWindow, f: np.ndarray) -> np.ndarray:
    """Spread f(k) * C_r(k) onto the global dual grid at k + p_r."""
    n1, n2 = window.resolution
    g = np.zeros((n1, n2), dtype=complex)
    wx, wy = window.shape
    gi = np.broadcast_to(window.ii[:, None], (wx, wy))
    gj = np.broadcast_to(window.jj[None, :], (wx, wy))
    for r in range(window.offsets.shape[0]):
        amp = f * window.coeffs[..., r]
        if not np.any(amp):
            continue
        oi = (gi + window.offsets[r, 0]) % n1
        oj = (gj + window.offsets[r, 1]) % n2
        np.add.at(g, (oi.ravel(), oj.ravel()), amp.ravel())
    return g


def synthesize(
    spec: WavepacketSpec, window: BranchWindow, normalize: bool = True
) -> tuple[WaveField, float]:
    """Assemble the packet in frequency space; returns (field, pre-norm).

    With normalize=True the returned field has unit L2 norm and the second
    element is the norm before scaling.
    """
    f = spec.profile.values * spec.cutoff.eta
    support = np.abs(f) > 0
    if not np.any(support):
        raise EmptyPacketError("empty packet: profile * cutoff vanishes")
    if np.any(support & ~window.available):
        raise ValueError("profile support reaches cells without dispersion data")
    g = _scatter(window, f)
    n1, n2 = window.resolution
    scale = dk_cell(window.box) / (2.0 * np.pi)
    values = scale * (n1 * n2) * np.fft.ifft2(g)
    field = WaveField(values, window.box, time=0.0)
    prenorm = field.norm()
    if normalize:
        return field.normalized(), prenorm
    return field, prenorm


def analyze(field: WaveField, window: BranchWindow) -> MomentumProfile:
    """Forward transform (2*pi)^(-1) (F, Psi_n(k)) on the window cells."""
    if field.resolution != window.resolution or field.box != window.box:
        raise ValueError("field grid does not match the window's box grid")
    fd = np.fft.fft2(field.values)
    wx, wy = window.shape
    gi = np.broadcast_to(window.ii[:, None], (wx, wy))
    gj = np.broadcast_to(window.jj[None, :], (wx, wy))
    n1, n2 = window.resolution
    acc = np.zeros((wx, wy), dtype=complex)
    for r in range(window.offsets.shape[0]):
        oi = (gi + window.offsets[r, 0]) % n1
        oj = (gj + window.offsets[r, 1]) % n2
        acc += np.conj(window.coeffs[..., r]) * fd[oi, oj]
    scale = dx_cell(window.box, window.resolution) / (2.0 * np.pi)
    vals = scale * acc
    vals = np.where(window.available, vals, 0.0)
    return MomentumProfile(vals, window)


def parseval_defect(field: WaveField, window: BranchWindow, selector: np.ndarray) -> float:
    """| ||E F||^2 - sum_selector dk |(T F)(k)|^2 | for E = synth o analyze."""
    prof = analyze(field, window)
    f = np.where(selector, prof.values, 0.0)
    momentum_mass = float(np.sum(np.abs(f) ** 2) * dk_cell(window.box))
    if momentum_mass == 0.0:
        return 0.0
    g = _scatter(window, f)
    n1, n2 = window.resolution
    scale = dk_cell(window.box) / (2.0 * np.pi)
    values = scale * (n1 * n2) * np.fft.ifft2(g)
    ef = WaveField(values, window.box)
    return abs(ef.norm() ** 2 - momentum_mass)


@dataclass(frozen=True)
class ClosenessEstimate:
    operator_norm: float  # randomized ||S_n - S_0|| estimate
    upper_bound: float  # rigorous sum_r sup|C_r| bound
    iterations: int


def fourier_closeness(
    window: BranchWindow,
    selector: np.ndarray,
    seed: int = 0,
    iterations: int = 20,
) -> ClosenessEstimate:
    """Power iteration on (S_n - S_0)* (S_n - S_0) over the selector cells."""
    if not np.any(selector):
        raise ValueError("empty window selector")
    dk = dk_cell(window.box)
    dxdy = dx_cell(window.box, window.resolution)
    n1, n2 = window.resolution
    wx, wy = window.shape
    gi = np.broadcast_to(window.ii[:, None], (wx, wy))
    gj = np.broadcast_to(window.jj[None, :], (wx, wy))

    def apply_d(f):
        g = np.zeros((n1, n2), dtype=complex)
        for r in range(1, window.offsets.shape[0]):
            amp = f * window.coeffs[..., r]
            oi = (gi + window.offsets[r, 0]) % n1
            oj = (gj + window.offsets[r, 1]) % n2
            np.add.at(g, (oi.ravel(), oj.ravel()), amp.ravel())
        return (dk / (2.0 * np.pi)) * (n1 * n2) * np.fft.ifft2(g)

    def apply_d_star(field_vals):
        fd = np.fft.fft2(field_vals)
        acc = np.zeros((wx, wy), dtype=complex)
        for r in range(1, window.offsets.shape[0]):
            oi = (gi + window.offsets[r, 0]) % n1
            oj = (gj + window.offsets[r, 1]) % n2
            acc += np.conj(window.coeffs[..., r]) * fd[oi, oj]
        return np.where(selector, (dxdy / (2.0 * np.pi)) * acc, 0.0)

    if window.offsets.shape[0] <= 1:
        return ClosenessEstimate(0.0, 0.0, iterations)

    rng = np.random.default_rng(seed)
    v = rng.standard_normal((wx, wy)) + 1j * rng.standard_normal((wx, wy))
    v = np.where(selector, v, 0.0)
    v /= np.sqrt(np.sum(np.abs(v) ** 2) * dk)
    mu = 0.0
    for _ in range(iterations):
        w = apply_d(v)
        v_next = apply_d_star(w)
        mu = float(np.sum(np.abs(w) ** 2) * dxdy)  # ||D v||^2 with ||v|| = 1
        nrm = np.sqrt(np.sum(np.abs(v_next) ** 2) * dk)
        if nrm == 0:
            return ClosenessEstimate(0.0, _upper_bound(window, selector), iterations)
        v = v_next / nrm
    return ClosenessEstimate(float(np.sqrt(mu)), _upper_bound(window, selector), iterations)


def _upper_bound(window: BranchWindow, selector: np.ndarray) -> float:
    if window.offsets.shape[0] <= 1:
        return 0.0
    c = np.abs(window.coeffs[..., 1:])
    c = np.where((selector & window.available)[..., None], c, 0.0)
    return float(np.sum(np.max(c.reshape(-1, c.shape[-1]), axis=0)))


# ---------------------------------------------------------------------------
# ballistic constants
# ---------------------------------------------------------------------------


def c1_constant(profile: MomentumProfile, mask: np.ndarray) -> float:
    """(1/160) * sum over mask cells of dk |k|^2 |phat(k)|^2."""
    kk2 = profile.window.kx[:, None] ** 2 + profile.window.ky[None, :] ** 2
    dens = np.where(mask, np.abs(profile.values) ** 2, 0.0)
    return float(np.sum(kk2 * dens) * dk_cell(profile.window.box)) / 160.0


def group_velocity_constant(
    profile: MomentumProfile, cutoff: CutoffFunction | None = None
) -> float:
    """sum dk |grad lambda|^2 |phat eta|^2: the tight ballistic coefficient.

    Expects the profile on the transform normalization of the unit-norm
    packet, so this is the packet's mean squared group velocity.  Pass the
    cutoff only if the profile does not already carry it.
    """
    w = profile.window
    vals = profile.values if cutoff is None else profile.values * cutoff.eta
    dens = np.abs(vals) ** 2
    g2 = np.where(w.available, np.sum(w.grad**2, axis=-1), 0.0)
    return float(np.sum(g2 * dens) * dk_cell(w.box))


def effective_profile(spec: WavepacketSpec, prenorm: float) -> MomentumProfile:
    """Transform-normalized profile of the unit-norm synthesized packet."""
    return MomentumProfile(spec.profile.values * spec.cutoff.eta / prenorm, spec.profile.window)
