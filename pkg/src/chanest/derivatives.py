"""Trigonometric-polynomial derivatives of the concentrated objective.

Fix one path and one of its coordinates.  With the path's own contribution
removed, write the unit-gain field as alpha(v) = ramp(v) (x) base, where
ramp carries the varying coordinate.  The conjugated data inner product
then collapses to a short spectrum

    g(v) = sum_i c_i exp(-j*v*i),   i = 0..D-1,

and since the regressor energy E = sum|alpha|^2 does not depend on v (unit
modulus ramps; for the tx angle this is exactly the pilot isotropy
condition), the concentrated objective is

    h(v) = (||r||^2 - |g(v)|^2 / E) / N0.

|g(v)|^2 is a real trigonometric polynomial whose coefficients are the
autocorrelation G_m = sum_i c_i conj(c_{i+m}), so

    dh/dv = -(1/(N0*E)) * sum_m  (j*m*G_m) exp(j*m*v),

a Hermitian series of order D-1 with zero mean coefficient.  Its real roots
on (-pi, pi] are exactly the stationary points of the coordinate slice,
which is what makes line-search-free exact coordinate descent possible.

Coordinate slices are built for omega1 (D=Nc), omega2 (D=Ns), the rx phase
psi = -pi*sin(phi) (D=Nr) and the tx phase chi = pi*sin(theta) (D=Nt; the
tx slice additionally requires isotropic pilots and is reported at the
order 2*Nt-2, zero-padded).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .likelihood import ISOTROPY_TOL, ResidualState
from .model import path_field

COORDS = ("omega1", "omega2", "psi", "chi")


class NonIsotropicPilotsError(ValueError):
    """Tx-angle derivative requested with pilots failing the isotropy condition."""


@dataclass
class TrigSeries:
    """Real-valued trigonometric polynomial sum_m coeffs[m] e^{j*m*psi}.

    coeffs has length 2M+1 and is indexed by m = -M..M (entry i holds
    m = i - M); Hermitian symmetry coeffs[-m] = conj(coeffs[m]) keeps the
    represented function real.
    """

    coeffs: np.ndarray

    @property
    def order(self):
        return (len(self.coeffs) - 1) // 2

    def coeff(self, m):
        return self.coeffs[m + self.order]

    def derivative(self):
        """Term-wise d/dpsi: coefficients j*m*coeffs[m]."""
        m = np.arange(-self.order, self.order + 1)
        return TrigSeries(coeffs=1j * m * self.coeffs)


def eval_series(series: TrigSeries, psi):
    """Evaluate the series at psi (scalar or array); returns the real part."""
    m = np.arange(-series.order, series.order + 1)
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 0:
        return float(np.dot(series.coeffs, np.exp(1j * m * float(psi))).real)
    return (np.exp(1j * np.outer(psi, m)) @ series.coeffs).real


def _autocorrelation(c):
    # G[m] = sum_i c[i] * conj(c[i+m]) for m = -(D-1)..D-1, ascending in m
    full = np.convolve(c, np.conj(c[::-1]))
    G = full[::-1]
    # exact Hermitian symmetry (the math guarantees it up to rounding)
    return 0.5 * (G + np.conj(G[::-1]))


def _derivative_series(c, scale):
    G = _autocorrelation(c)
    D = (len(G) + 1) // 2
    m = np.arange(-(D - 1), D)
    coeffs = (-1j * m / scale) * G
    coeffs[D - 1] = 0.0
    return TrigSeries(coeffs=coeffs)


@dataclass
class CoordinateSlice:
    """One coordinate's view of the concentrated objective.

    Bundles the inner-product spectrum c, the (coordinate-independent)
    regressor energy, the free-residual power and the derivative series,
    so root candidates can be scored in O(len(c)) instead of a full pass
    over the observation tensor.
    """

    coord: str
    c: np.ndarray           # g(v) = sum_i c[i] exp(-j*v*i)
    energy: float
    norm2_free: float       # ||y - other paths||^2
    n0: float
    conj_gain: bool         # tx slice stores the conjugate spectrum
    series: TrigSeries

    def gain_inner(self, value):
        g = np.dot(self.c, np.exp(-1j * value * np.arange(len(self.c))))
        return np.conj(g) if self.conj_gain else g

    def gain(self, value):
        """Optimal complex gain at this coordinate value."""
        return complex(self.gain_inner(value) / self.energy)

    def objective(self, value):
        """Concentrated objective at this coordinate value (others fixed)."""
        g = np.dot(self.c, np.exp(-1j * value * np.arange(len(self.c))))
        return float((self.norm2_free - abs(g) ** 2 / self.energy) / self.n0)

    def objective_many(self, values):
        values = np.asarray(values, dtype=float)
        g = np.exp(-1j * np.outer(values, np.arange(len(self.c)))) @ self.c
        return (self.norm2_free - np.abs(g) ** 2 / self.energy) / self.n0


def build_slice(state: ResidualState, pid, coord) -> CoordinateSlice:
    """Build a coordinate slice for one path from the frozen state.

    The path's own contribution is removed internally; the remaining paths
    and the other three coordinates stay at their current values.
    """
    rec = state._rec(pid)
    r = state.detached_residual(pid)
    pilot = state.pilots[rec.user]
    Nr = state.received.shape[2]
    w1, w2, psi, chi = rec.phases
    norm2_free = float(np.vdot(r, r).real)
    pad = 0

    if coord == "omega1":
        base = path_field(0.0, w2, psi, chi, pilot, Nr)
        c = np.einsum("ntu,ntu->n", np.conj(base), r)
        energy = float(np.vdot(base, base).real)
        conj_gain = False
    elif coord == "omega2":
        base = path_field(w1, 0.0, psi, chi, pilot, Nr)
        c = np.einsum("ntu,ntu->t", np.conj(base), r)
        energy = float(np.vdot(base, base).real)
        conj_gain = False
    elif coord == "psi":
        base = path_field(w1, w2, 0.0, chi, pilot, Nr)
        c = np.einsum("ntu,ntu->u", np.conj(base), r)
        energy = float(np.vdot(base, base).real)
        conj_gain = False
    elif coord == "chi":
        if state.pilot_isotropy(rec.user) > ISOTROPY_TOL:
            raise NonIsotropicPilotsError(
                "tx-angle derivative requires isotropic pilots "
                f"(deviation {state.pilot_isotropy(rec.user):.3e})"
            )
        Nc, Ns, Nt = pilot.shape
        # rx/delay/Doppler ramps only; the pilot beam pattern is the unknown
        ramp = (
            np.exp(1j * w1 * np.arange(Nc))[:, None]
            * np.exp(1j * w2 * np.arange(Ns))[None, :]
        )
        w = np.conj(ramp) * (r @ np.conj(np.exp(1j * psi * np.arange(Nr))))
        g_v = np.einsum("ntv,nt->v", np.conj(pilot), w)
        # store the conjugate spectrum so every slice shares one eval form
        c = np.conj(g_v)
        # isotropy makes the energy angle-independent: Nr * sum|pilot|^2
        energy = float(Nr * np.sum(np.abs(pilot) ** 2))
        conj_gain = True
        pad = Nt - 1  # report the series at order 2*Nt-2
    else:
        raise ValueError(f"unknown coordinate {coord!r}")

    if energy <= 0.0:
        from .likelihood import DegenerateRegressorError

        raise DegenerateRegressorError("regressor energy is zero (zero pilots)")

    series = _derivative_series(c, state.n0 * energy)
    if pad:
        series = TrigSeries(
            coeffs=np.pad(series.coeffs, (pad, pad), mode="constant")
        )
    return CoordinateSlice(
        coord=coord,
        c=c,
        energy=energy,
        norm2_free=norm2_free,
        n0=state.n0,
        conj_gain=conj_gain,
        series=series,
    )


def series_omega1(state: ResidualState, pid) -> TrigSeries:
    """d/d omega1 of the concentrated objective, order Nc-1."""
    return build_slice(state, pid, "omega1").series


def series_omega2(state: ResidualState, pid) -> TrigSeries:
    """d/d omega2 of the concentrated objective, order Ns-1."""
    return build_slice(state, pid, "omega2").series


def series_sinphi(state: ResidualState, pid) -> TrigSeries:
    """d/d psi of the concentrated objective, psi = -pi*sin(phi), order Nr-1.

    The chain rule factor d/d sin(phi) = -pi * d/d psi is left to callers;
    root finding happens directly in the psi domain.
    """
    return build_slice(state, pid, "psi").series


def series_sintheta(state: ResidualState, pid) -> TrigSeries:
    """d/d chi of the concentrated objective, chi = pi*sin(theta).

    Requires isotropic pilots (otherwise the energy term depends on the
    angle and the derivative is no longer a trigonometric polynomial).
    Reported at order 2*Nt-2; harmonics above Nt-1 vanish.
    """
    return build_slice(state, pid, "chi").series
