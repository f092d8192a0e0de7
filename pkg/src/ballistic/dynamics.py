"""Time propagation on the torus and transport measurements.

Propagation is Strang-split spectral stepping: half a kinetic phase in
frequency space, a full potential phase in real space, half a kinetic
phase.  Each step is exactly unitary up to transform round-off.  The torus
stands in for the plane only while the packet stays away from the boundary;
a wrap sentinel (mass at minimal-image distance beyond 45% of the box)
gates every transport claim.  Moments use minimal-image displacements about
the packet's initial centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import WaveField, dx_cell, k_axes
from .potentials import PotentialField
from .transform import (
    BranchWindow,
    WavepacketSpec,
    c1_constant,
    effective_profile,
    group_velocity_constant,
    synthesize,
)

WRAP_FRACTION = 0.45
WRAP_MASS = 1e-6


class PropagationError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class CoverageError(ValueError):
    def __init__(self, required_tmax: float):
        super().__init__(f"series must cover [0, {required_tmax:g}]")
        self.required_tmax = required_tmax


class PreAsymptoticError(ValueError):
    pass


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------


def _kinetic_sq(field: WaveField) -> np.ndarray:
    kx, ky = k_axes(field.box, field.resolution)
    return kx[:, None] ** 2 + ky[None, :] ** 2


def default_dt(field: WaveField, amp_floor: float = 1e-12) -> float:
    """0.2 / max |k|^2 over the packet's occupied wavenumbers."""
    spec = np.abs(np.fft.fft2(field.values))
    occupied = spec > amp_floor * spec.max()
    k2 = _kinetic_sq(field)
    lam_max = float(np.max(k2[occupied])) if np.any(occupied) else float(np.max(k2))
    return 0.2 / max(lam_max, 1e-12)


def wrap_risk(field: WaveField, center) -> bool:
    dx, dy = field.displacements(center)
    outer = (np.abs(dx)[:, None] > WRAP_FRACTION * field.box[0]) | (
        np.abs(dy)[None, :] > WRAP_FRACTION * field.box[1]
    )
    dens = np.abs(field.values) ** 2
    mass = float(np.sum(dens[outer]) / np.sum(dens))
    return mass >= WRAP_MASS


@dataclass(eq=False)
class PropagationResult:
    snapshots: list[WaveField]
    wrap_flags: list[bool]
    dt: float
    steps_per_sample: int


def _strang_step(values, half_kin, pot_phase):
    out = np.fft.ifft2(half_kin * np.fft.fft2(values))
    if pot_phase is not None:
        out = out * pot_phase
    return np.fft.ifft2(half_kin * np.fft.fft2(out))


def propagate(
    psi: WaveField,
    potential: PotentialField | None,
    dt: float,
    steps: int,
    sample_every: int = 1,
    wrap_center=None,
) -> PropagationResult:
    """Strang-split evolution; snapshots every `sample_every` steps.

    Raises PropagationError on non-finite amplitudes.  Wrap risk is flagged
    per snapshot, never fatal.
    """
    if dt == 0:
        raise ValueError("dt must be nonzero")
    if potential is not None:
        if potential.samples.shape != psi.values.shape or potential.box != psi.box:
            raise ValueError("potential grid does not match the field grid")
        pot_phase = np.exp(-1j * dt * potential.samples)
    else:
        pot_phase = None
    half_kin = np.exp(-0.5j * dt * _kinetic_sq(psi))
    center = psi.centroid() if wrap_center is None else np.asarray(wrap_center)

    values = psi.values.copy()
    snaps = [WaveField(values.copy(), psi.box, psi.time)]
    flags = [wrap_risk(snaps[0], center)]
    for step in range(1, steps + 1):
        values = _strang_step(values, half_kin, pot_phase)
        if not np.all(np.isfinite(values)):
            raise PropagationError(step, "non-finite amplitudes")
        if step % sample_every == 0:
            snap = WaveField(values.copy(), psi.box, psi.time + step * dt)
            snaps.append(snap)
            flags.append(wrap_risk(snap, center))
    return PropagationResult(snaps, flags, dt, sample_every)


def propagate_reference(
    psi: WaveField, potential: PotentialField | None, dt: float, steps: int
) -> WaveField:
    """Independent 4th-order frequency-space integrator (triple-jump composition)."""
    w1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
    w0 = 1.0 - 2.0 * w1
    k2 = _kinetic_sq(psi)
    stages = []
    for w in (w1, w0, w1):
        half_kin = np.exp(-0.5j * w * dt * k2)
        pot = np.exp(-1j * w * dt * potential.samples) if potential is not None else None
        stages.append((half_kin, pot))
    values = psi.values.copy()
    for _ in range(steps):
        for half_kin, pot in stages:
            values = _strang_step(values, half_kin, pot)
    return WaveField(values, psi.box, psi.time + steps * dt)


def energy(field: WaveField, potential: PotentialField | None) -> float:
    """<psi, H psi> via the spectral kinetic term plus the potential quadrature."""
    n1, n2 = field.resolution
    fd = np.fft.fft2(field.values)
    kin = float(np.sum(_kinetic_sq(field) * np.abs(fd) ** 2)) * dx_cell(
        field.box, field.resolution
    ) / (n1 * n2)
    pot = 0.0
    if potential is not None:
        pot = float(
            np.sum(potential.samples * np.abs(field.values) ** 2)
            * dx_cell(field.box, field.resolution)
        )
    return kin + pot


# ---------------------------------------------------------------------------
# moments and means
# ---------------------------------------------------------------------------


def second_moment(field: WaveField, center=None) -> float:
    """sum |x - center|^2 |psi|^2 dx, minimal-image displacements.

    Defaults to the packet centroid as center.
    """
    c = field.centroid() if center is None else np.asarray(center, dtype=float)
    dx, dy = field.displacements(c)
    r2 = dx[:, None] ** 2 + dy[None, :] ** 2
    return float(np.sum(r2 * np.abs(field.values) ** 2) * dx_cell(field.box, field.resolution))


@dataclass(eq=False)
class MomentSeries:
    times: np.ndarray
    values: np.ndarray
    wrap: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.wrap = np.asarray(self.wrap, dtype=bool)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("second moments must be nonnegative")


def moment_series(result: PropagationResult, center) -> MomentSeries:
    times = np.array([s.time for s in result.snapshots])
    vals = np.array([second_moment(s, center) for s in result.snapshots])
    return MomentSeries(times, vals, np.array(result.wrap_flags), {"dt": result.dt})


def abel_mean(series: MomentSeries, T: float) -> tuple[float, float]:
    """(2/T) int_0^inf exp(-2t/T) f(t) dt, with a tail bound.

    Product trapezoid rule: f is replaced by its piecewise-linear
    interpolant and integrated against the exact exponential weight, so
    constant and linear f come out exactly.  The series must cover [0, 5T];
    the truncation remainder bound exp(-2 tmax/T) * f(tmax) * (T/2 + tmax)
    is returned as the error bar.
    """
    tmax = float(series.times[-1])
    if tmax < 5.0 * T:
        raise CoverageError(5.0 * T)
    s = 2.0 / T
    t0, t1 = series.times[:-1], series.times[1:]
    f0, f1 = series.values[:-1], series.values[1:]
    h = t1 - t0
    e0, e1 = np.exp(-s * t0), np.exp(-s * t1)
    # int_{t0}^{t1} e^{-s t} [f0 + (f1-f0)(t-t0)/h] dt
    seg = f0 * (e0 - e1) / s + (f1 - f0) / h * (e0 * (1.0 - (1.0 + s * h) * np.exp(-s * h)) / s**2)
    value = s * float(np.sum(seg))
    tail = math.exp(-s * tmax) * float(series.values[-1]) * (T / 2.0 + tmax)
    return value, tail


def cesaro_mean(series: MomentSeries, T: float) -> float:
    """T^(-1) int_0^T f(t) dt by trapezoid on the sample grid."""
    if series.times[-1] < T:
        raise CoverageError(T)
    cut = np.searchsorted(series.times, T)
    ts = np.concatenate([series.times[:cut], [T]])
    vs = np.concatenate(
        [series.values[:cut], [np.interp(T, series.times, series.values)]]
    )
    return float(np.trapezoid(vs, ts)) / T


def fit_exponent(T_values, means, moment_order: int = 2) -> tuple[float, float]:
    """Log-log slope of the averaged moment divided by the moment order.

    Returns (beta, band); the band is the 1-sigma slope error from the fit
    residuals, also divided by the order.
    """
    T_values = np.asarray(T_values, dtype=float)
    means = np.asarray(means, dtype=float)
    if len(T_values) < 5:
        raise ValueError("need at least 5 T values")
    if T_values.max() / T_values.min() < 10.0 * (1.0 - 1e-9):
        raise ValueError("T values must span at least one decade")
    if np.any(means <= 0):
        raise ValueError("nonpositive means cannot be fit in log space")
    x, y = np.log(T_values), np.log(means)
    coef, cov = np.polyfit(x, y, 1, cov=True)
    return float(coef[0]) / moment_order, float(np.sqrt(cov[0, 0])) / moment_order


# ---------------------------------------------------------------------------
# transport report
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TransportReport:
    T_values: np.ndarray
    abel: np.ndarray
    abel_err: np.ndarray
    cesaro: np.ndarray
    beta_abel: float
    beta_abel_band: float
    beta_cesaro: float
    beta_cesaro_band: float
    c1: float
    c_gv: float
    measured_coefficient: float
    predicted_coefficient: float  # c_gv / 2, the Abel-scale prediction
    moment_zero: float
    onset_T0: float | None
    floor_holds: bool
    trusted: bool
    prenorm: float
    mask_coverage: float
    series: MomentSeries

    def to_dict(self) -> dict:
        return {
            "schema": "transport-report/1",
            "T": [float(t) for t in self.T_values],
            "abel": [float(v) for v in self.abel],
            "abel_err": [float(v) for v in self.abel_err],
            "cesaro": [float(v) for v in self.cesaro],
            "beta_abel": self.beta_abel,
            "beta_abel_band": self.beta_abel_band,
            "beta_cesaro": self.beta_cesaro,
            "beta_cesaro_band": self.beta_cesaro_band,
            "c1": self.c1,
            "c_gv": self.c_gv,
            "measured_coefficient": self.measured_coefficient,
            "predicted_coefficient": self.predicted_coefficient,
            "moment_zero": self.moment_zero,
            "onset_T0": self.onset_T0,
            "floor_holds": self.floor_holds,
            "trusted": self.trusted,
            "prenorm": self.prenorm,
            "mask_coverage": self.mask_coverage,
        }


def ballistic_check(
    spec: WavepacketSpec,
    window: BranchWindow,
    potential_field: PotentialField | None,
    T_values,
    dt: float | None = None,
    sample_dt: float | None = None,
    horizon_factor: float = 6.0,
) -> TransportReport:
    """Synthesize, propagate, Abel-average, and test the quadratic floor.

    The report carries the literal lower-bound constant c1 (strict floor by
    construction) and the group-velocity coefficient whose half is the
    tight prediction for the fitted T^2 coefficient of the Abel means.
    """
    T_values = np.sort(np.asarray(T_values, dtype=float))
    packet, prenorm = synthesize(spec, window)
    eff = effective_profile(spec, prenorm)
    c1 = c1_constant(eff, window.mask)
    c_gv = group_velocity_constant(eff)

    amp = np.abs(eff.values)
    support = amp > 1e-9 * float(amp.max())
    speeds = np.where(window.available, np.linalg.norm(window.grad, axis=-1), 0.0)
    vmax = float(np.max(np.where(support, speeds, 0.0)))
    t_top = horizon_factor * float(T_values[-1])
    if 2.0 * vmax * float(T_values[-1]) >= 0.4 * min(window.box):
        raise ValueError(
            f"box too small: 2*max|grad lambda|*T_max = {2*vmax*T_values[-1]:.3g}"
            f" must stay below 0.4*min(L) = {0.4*min(window.box):.3g}"
        )

    if dt is None:
        dt = default_dt(packet)
    if sample_dt is None:
        sample_dt = float(T_values[0]) / 20.0
    sample_every = max(1, int(round(sample_dt / dt)))
    steps = int(np.ceil(t_top / dt / sample_every)) * sample_every

    center = packet.centroid()
    result = propagate(packet, potential_field, dt, steps, sample_every, wrap_center=center)
    series = moment_series(result, center)

    abel_vals, abel_errs, cesaro_vals = [], [], []
    for T in T_values:
        a, e = abel_mean(series, float(T))
        abel_vals.append(a)
        abel_errs.append(e)
        cesaro_vals.append(cesaro_mean(series, float(T)))
    abel_vals = np.array(abel_vals)
    abel_errs = np.array(abel_errs)
    cesaro_vals = np.array(cesaro_vals)

    m2_0 = float(series.values[0])
    beta_a, band_a = fit_exponent(T_values, np.maximum(abel_vals - m2_0, 1e-300))
    beta_c, band_c = fit_exponent(T_values, np.maximum(cesaro_vals - m2_0, 1e-300))

    # least squares a + B T^2 for the measured ballistic coefficient
    design = np.ones((len(T_values), 2))
    design[:, 1] = T_values**2
    coeffs, *_ = np.linalg.lstsq(design, abel_vals, rcond=None)
    measured = float(coeffs[1])

    floor = abel_vals >= c1 * T_values**2
    onset = None
    for i in range(len(T_values)):
        if np.all(floor[i:]):
            onset = float(T_values[i])
            break
    coverage = float(np.mean(window.mask[support])) if np.any(support) else 0.0

    return TransportReport(
        T_values=T_values,
        abel=abel_vals,
        abel_err=abel_errs,
        cesaro=cesaro_vals,
        beta_abel=beta_a,
        beta_abel_band=band_a,
        beta_cesaro=beta_c,
        beta_cesaro_band=band_c,
        c1=c1,
        c_gv=c_gv,
        measured_coefficient=measured,
        predicted_coefficient=c_gv / 2.0,
        moment_zero=m2_0,
        onset_T0=onset,
        floor_holds=onset is not None,
        trusted=not any(result.wrap_flags),
        prenorm=prenorm,
        mask_coverage=coverage,
        series=series,
    )


# ---------------------------------------------------------------------------
# stationary-phase front profile
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class FrontComparison:
    z_edges: np.ndarray
    measured: np.ndarray
    predicted: np.ndarray
    tail_cut: float
    tail_measured: float
    tail_predicted: float
    time: float


def front_profile(
    snapshot: WaveField,
    window: BranchWindow,
    eff_profile,
    center,
    bin_width: float = 1.0,
    tail_sigma: float = 3.0,
) -> FrontComparison:
    """Radial mass density in z = x/t against the group-velocity prediction.

    The predicted profile is the momentum density pushed forward through
    z = |grad lambda(k)|; the free-case inversion is k0(z) = z/2.
    """
    t = snapshot.time
    if t <= 0:
        raise PreAsymptoticError("need a positive-time snapshot")
    dens_k = np.abs(eff_profile.values) ** 2
    dens_k /= dens_k.sum()
    speeds = np.where(window.available, np.linalg.norm(window.grad, axis=-1), 0.0)
    mean_speed = float(np.sum(speeds * dens_k))
    m2_0_scale = math.sqrt(second_moment(snapshot, center)) / max(t, 1e-300)

    dx, dy = snapshot.displacements(center)
    z = np.hypot(dx[:, None], dy[None, :]) / t
    dens_x = np.abs(snapshot.values) ** 2
    dens_x = dens_x / dens_x.sum()
    spatial_width = math.sqrt(float(np.sum((z * t) ** 2 * dens_x)))
    if spatial_width > mean_speed * t:
        raise PreAsymptoticError(
            f"packet width {spatial_width:.3g} exceeds ballistic displacement"
            f" {mean_speed * t:.3g}"
        )

    zmax = max(float(z.max()), float(speeds.max())) + bin_width
    edges = np.arange(0.0, zmax + bin_width, bin_width)
    measured, _ = np.histogram(z.ravel(), bins=edges, weights=dens_x.ravel())
    predicted, _ = np.histogram(speeds.ravel(), bins=edges, weights=dens_k.ravel())

    k_support = np.hypot(window.kx[:, None], window.ky[None, :])
    kmax = float(np.max(np.where(dens_k > 0, k_support, 0.0)))
    sigma_z = m2_0_scale
    tail_cut = 2.0 * kmax + tail_sigma * sigma_z
    tail_measured = float(dens_x[z > tail_cut].sum())
    tail_predicted = float(dens_k[speeds > tail_cut].sum())
    return FrontComparison(
        z_edges=edges,
        measured=measured,
        predicted=predicted,
        tail_cut=tail_cut,
        tail_measured=tail_measured,
        tail_predicted=tail_predicted,
        time=t,
    )
