"""Closed-form ground truth for embedded tori.

The axisymmetric shell: in R^3 with cylindrical (r, phi, z),

    rho = (r - R0)^2 + (z / kappa)^2,    B = grad rho x grad phi + F(rho) grad phi.

B is divergence free, tangent to the level tori and has curl(B).n = 0 on them.
The level torus rho = c^2 is charted by ``x = phi / 2pi``, ``y = theta / 2pi``
with ``r = R0 + c cos(theta)``, ``z = kappa c sin(theta)``.  With
``R = R0 + c cos(theta)`` and ``Q = cos^2 + sin^2 / kappa^2`` every quantity
below is derived by hand and used as an independent reference.

The perturbed family replaces the shell by level sets of
``rho = s exp(-eps p(theta, phi))`` (s the distance to the core circle) with
``B = grad rho x grad(phi + lam theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def _cyl(q):
    x, y, z = q
    r = np.hypot(x, y)
    rhat = np.stack([x / r, y / r, np.zeros_like(r)])
    phat = np.stack([-y / r, x / r, np.zeros_like(r)])
    zhat = np.stack([np.zeros_like(r), np.zeros_like(r), np.ones_like(r)])
    return r, z, rhat, phat, zhat


@dataclass(frozen=True)
class AxisymmetricShell:
    R0: float = 3.0
    kappa: float = 1.5
    F0: float = 1.0
    F1: float = 0.5

    def F(self, rho):
        return self.F0 * (1.0 + self.F1 * rho)

    # ambient callbacks -------------------------------------------------------

    def rho(self, q):
        r, z, *_ = _cyl(q)
        return (r - self.R0) ** 2 + (z / self.kappa) ** 2

    def grad_rho(self, q):
        r, z, rhat, _, zhat = _cyl(q)
        return 2 * (r - self.R0) * rhat + (2 * z / self.kappa ** 2) * zhat

    def field(self, q):
        r, z, rhat, phat, zhat = _cyl(q)
        grad_phi = phat / r
        return np.cross(self.grad_rho(q), grad_phi, axis=0) + self.F(self.rho(q)) * grad_phi

    def divergence(self, q):
        return np.zeros(np.shape(q)[1:])

    def unit_gradient(self, q):
        g = self.grad_rho(q)
        return g / np.linalg.norm(g, axis=0)

    def immersion_map(self, c: float):
        def T(x, y):
            phi, th = TWO_PI * x, TWO_PI * y
            R = self.R0 + c * np.cos(th)
            return np.stack([R * np.cos(phi), R * np.sin(phi), self.kappa * c * np.sin(th)])

        return T

    # closed forms on the level torus rho = c^2, as functions of chart y ------

    def _RQ(self, c, y):
        th = TWO_PI * y
        R = self.R0 + c * np.cos(th)
        Q = np.cos(th) ** 2 + np.sin(th) ** 2 / self.kappa ** 2
        return th, R, Q

    def metric(self, c, y):
        th, R, Q = self._RQ(c, y)
        return TWO_PI ** 2 * R ** 2, 0.0 * R, TWO_PI ** 2 * c ** 2 * self.kappa ** 2 * Q

    def tangential(self, c, y):
        th, R, Q = self._RQ(c, y)
        return self.F(c * c) / (TWO_PI * R ** 2), 1.0 / (np.pi * self.kappa * R)

    def u(self, c, y):
        th, R, Q = self._RQ(c, y)
        return -math.log(2 * c) - 0.5 * np.log(Q)

    def normal_derivative(self, c, y):
        th, R, Q = self._RQ(c, y)
        k = self.kappa
        return (2.0 / (k * R)) * np.cos(th) * np.sin(th) * (1 - 1 / k ** 2) / Q

    def J0(self, c):
        return 1.0 / math.sqrt(self.R0 ** 2 - c ** 2)

    def eta_periods(self, c):
        """Periods of ``e^u * X^flat`` over (gamma1, gamma2)."""
        return -TWO_PI, np.pi * self.kappa * self.F(c * c) * self.J0(c)

    def winding_vector(self, c):
        """Raw vector (-int_g2 eta, int_g1 eta) with eta = e^u * X^flat."""
        p1, p2 = self.eta_periods(c)
        return -p2, p1

    def rotation_ratio(self, c):
        """Toroidal advance per poloidal turn of a field line (dx/dy)."""
        return self.kappa * self.F(c * c) * self.J0(c) / 2.0

    def alpha_periods(self, c):
        """Periods of X^flat over (gamma1, gamma2)."""
        k, J0 = self.kappa, self.J0(c)
        M = J0 / k ** 2 + (1 - 1 / k ** 2) * (self.R0 ** 2 * J0 - self.R0) / c ** 2
        return TWO_PI * self.F(c * c), 4 * np.pi * c * c * k * M

    def frequency(self, c):
        """Chart frequency ``Pi^{-1} e_1`` for alpha = X^flat, beta = e^u * X^flat."""
        a1, a2 = self.alpha_periods(c)
        b1, b2 = self.eta_periods(c)
        det = a1 * b2 - a2 * b1
        return np.array([b2, -b1]) / det


@dataclass(frozen=True)
class PerturbedTorus:
    """Level set ``rho = r0`` of ``rho = s exp(-eps p(theta, phi))`` with a tangent field.

    ``modes`` lists ``(m, n, amplitude, phase)`` for
    ``p = sum amplitude cos(m theta + n phi + phase)``.
    """

    R0: float = 3.0
    r0: float = 1.0
    eps: float = 0.1
    lam: float = 0.7
    modes: tuple = ((1, 1, 1.0, 0.3), (2, -1, 0.5, 1.1))

    def _p(self, th, ph):
        p = np.zeros(np.broadcast(th, ph).shape)
        pt = np.zeros_like(p)
        pp = np.zeros_like(p)
        for m, n, a, s in self.modes:
            arg = m * th + n * ph + s
            p += a * np.cos(arg)
            pt -= a * m * np.sin(arg)
            pp -= a * n * np.sin(arg)
        return p, pt, pp

    def _coords(self, q):
        r, z, rhat, phat, zhat = _cyl(q)
        ph = np.arctan2(q[1], q[0])
        d = r - self.R0
        s = np.hypot(d, z)
        th = np.arctan2(z, d)
        shat = (d * rhat + z * zhat) / s
        that = (-z * rhat + d * zhat) / s
        return r, s, th, ph, shat, that, phat

    def rho(self, q):
        r, s, th, ph, *_ = self._coords(q)
        p, _, _ = self._p(th, ph)
        return s * np.exp(-self.eps * p)

    def grad_rho(self, q):
        r, s, th, ph, shat, that, phat = self._coords(q)
        p, pt, pp = self._p(th, ph)
        e = np.exp(-self.eps * p)
        return e * (shat - self.eps * pt * that - self.eps * s * pp * phat / r)

    def unit_gradient(self, q):
        g = self.grad_rho(q)
        return g / np.linalg.norm(g, axis=0)

    def field(self, q):
        r, s, th, ph, shat, that, phat = self._coords(q)
        grad_psi = phat / r + self.lam * that / s
        return np.cross(self.grad_rho(q), grad_psi, axis=0)

    def immersion_map(self):
        def T(x, y):
            ph, th = TWO_PI * x, TWO_PI * y
            p, _, _ = self._p(th, ph)
            s = self.r0 * np.exp(self.eps * p)
            R = self.R0 + s * np.cos(th)
            return np.stack([R * np.cos(ph), R * np.sin(ph), s * np.sin(th)])

        return T


def random_perturbed_torus(rng: np.random.Generator, eps: float = 0.1) -> PerturbedTorus:
    modes = []
    for _ in range(3):
        m = int(rng.integers(0, 4))
        n = int(rng.integers(-3, 4))
        if m == 0 and n == 0:
            m = 1
        modes.append((m, n, float(rng.uniform(0.3, 1.0)), float(rng.uniform(0, TWO_PI))))
    return PerturbedTorus(eps=eps, lam=float(rng.uniform(0.3, 1.5)), modes=tuple(modes))
