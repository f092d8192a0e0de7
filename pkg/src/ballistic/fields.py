"""Complex wave fields on a periodic box grid and their dual grids.

Conventions used throughout: the box is [0, L1) x [0, L2) sampled at N1 x N2
points, the dual grid carries angular wavenumbers 2*pi*fftfreq(N, L/N) in
FFT (wrapped) layout, and the momentum cell area is dk = (2*pi)^2/(L1*L2).
L2 norms are quadrature sums: ||F||^2 = sum |F|^2 dx dy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def x_axes(box, resolution):
    n1, n2 = resolution
    return np.arange(n1) * (box[0] / n1), np.arange(n2) * (box[1] / n2)


def k_axes(box, resolution):
    n1, n2 = resolution
    kx = 2.0 * np.pi * np.fft.fftfreq(n1, d=box[0] / n1)
    ky = 2.0 * np.pi * np.fft.fftfreq(n2, d=box[1] / n2)
    return kx, ky


def dk_cell(box) -> float:
    return (2.0 * np.pi) ** 2 / (box[0] * box[1])


def dx_cell(box, resolution) -> float:
    return (box[0] / resolution[0]) * (box[1] / resolution[1])


@dataclass(eq=False)
class WaveField:
    """Complex amplitude on the box grid with a time stamp."""

    values: np.ndarray
    box: tuple[float, float]
    time: float = 0.0

    @property
    def resolution(self) -> tuple[int, int]:
        return self.values.shape

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * dx_cell(self.box, self.resolution)))

    def normalized(self) -> "WaveField":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero field")
        return WaveField(self.values / n, self.box, self.time)

    def centroid(self) -> np.ndarray:
        """Torus centroid of |psi|^2 via the circular mean along each axis."""
        dens = np.abs(self.values) ** 2
        total = dens.sum()
        if total == 0:
            return np.array([0.0, 0.0])
        out = np.zeros(2)
        for axis, (length, n) in enumerate(zip(self.box, self.resolution)):
            theta = 2.0 * np.pi * np.arange(n) / n
            marg = dens.sum(axis=1 - axis)
            z = np.sum(marg * np.exp(1j * theta)) / total
            out[axis] = (length / (2.0 * np.pi)) * float(np.angle(z)) % length
        return out

    def displacements(self, center) -> tuple[np.ndarray, np.ndarray]:
        """Minimal-image displacement axes relative to a center point."""
        x, y = x_axes(self.box, self.resolution)
        dx = x - center[0]
        dy = y - center[1]
        dx = (dx + self.box[0] / 2) % self.box[0] - self.box[0] / 2
        dy = (dy + self.box[1] / 2) % self.box[1] - self.box[1] / 2
        return dx, dy
