"""Compiled RK4 integrator over a trigonometric interpolant.

Coefficients are the half spectrum ``c[comp, ky, kx]`` for ``kx = 0..nx/2``
with column weights 1 (kx = 0 and Nyquist) or 2 (interior), so that the real
part of the half sum reproduces the full interpolant used elsewhere.  The
Nyquist column is evaluated at ``kx = -nx/2`` to match numpy's ordering.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _powers(k, x, out):
    # out[i] = exp(2 pi i k[i] x) for integer k by a running product
    base = np.exp(2j * np.pi * x)
    kmax = 0
    for i in range(k.shape[0]):
        kmax = max(kmax, abs(int(k[i])))
    pos = np.empty(kmax + 1, dtype=np.complex128)
    pos[0] = 1.0
    for m in range(1, kmax + 1):
        pos[m] = pos[m - 1] * base
    for i in range(k.shape[0]):
        ki = int(k[i])
        out[i] = pos[ki] if ki >= 0 else np.conj(pos[-ki])


@njit(cache=True)
def _velocity(coeffs, kx, ky, x, y, ex, ey, out):
    _powers(kx, x, ex)
    _powers(ky, y, ey)
    ny = ky.shape[0]
    nx = kx.shape[0]
    for c in range(2):
        acc = 0.0
        for j in range(ny):
            row = 0.0 + 0.0j
            for i in range(nx):
                row += coeffs[c, j, i] * ex[i]
            z = row * ey[j]
            acc += z.real
        out[c] = acc


@njit(cache=True)
def rk4(coeffs, kx, ky, x0, y0, dt, nsteps):
    """Integrate from (x0, y0); returns lift samples and the velocity at each sample."""
    pts = np.empty((nsteps + 1, 2))
    vel = np.empty((nsteps + 1, 2))
    ex = np.empty(kx.shape[0], dtype=np.complex128)
    ey = np.empty(ky.shape[0], dtype=np.complex128)
    k1 = np.empty(2)
    k2 = np.empty(2)
    k3 = np.empty(2)
    k4 = np.empty(2)
    x, y = x0, y0
    pts[0, 0] = x
    pts[0, 1] = y
    for n in range(nsteps):
        _velocity(coeffs, kx, ky, x, y, ex, ey, k1)
        vel[n, 0] = k1[0]
        vel[n, 1] = k1[1]
        _velocity(coeffs, kx, ky, x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1], ex, ey, k2)
        _velocity(coeffs, kx, ky, x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1], ex, ey, k3)
        _velocity(coeffs, kx, ky, x + dt * k3[0], y + dt * k3[1], ex, ey, k4)
        x += dt * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0
        y += dt * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0
        pts[n + 1, 0] = x
        pts[n + 1, 1] = y
    _velocity(coeffs, kx, ky, x, y, ex, ey, k1)
    vel[nsteps, 0] = k1[0]
    vel[nsteps, 1] = k1[1]
    return pts, vel


def half_spectrum(values: np.ndarray):
    """Weighted half-spectrum coefficients and wavenumbers for :func:`rk4`."""
    ny, nx = values.shape[-2:]
    full = np.fft.fft2(values) / (nx * ny)
    half = full[..., : nx // 2 + 1].copy()
    half[..., 1 : nx // 2] *= 2.0
    kx = np.arange(nx // 2 + 1, dtype=float)
    kx[-1] = -nx // 2
    ky = np.fft.fftfreq(ny, 1.0 / ny)
    return np.ascontiguousarray(half), kx, ky
