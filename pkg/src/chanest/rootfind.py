"""Real roots of trigonometric polynomials via companion-matrix eigenvalues.

Substituting z = e^{j*psi} turns a series of order M into the algebraic
polynomial p(z) = sum_m coeffs[m] z^{m+M} of degree 2M whose roots on the
unit circle are the series' real roots.  Eigenvalues of the companion
matrix (dense nonsymmetric solver, LAPACK balancing) give all roots; a
radial filter keeps near-circle candidates, Newton steps polish them on the
series itself, and a local sign-change check discards near-circle
eigenvalue pairs that do not actually cross zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .derivatives import CoordinateSlice, TrigSeries, build_slice, eval_series
from .model import wrap_phase

# relative threshold for trimming trailing (highest |m|) coefficients
TRIM_TOL = 1e-12
# default tolerance on | |z| - 1 | for keeping an eigenvalue
RADIAL_TOL = 1e-4
# angles closer than this are considered one root
DEDUPE_TOL = 1e-9
# half-width of the sign-change verification window
SIGN_WINDOW = 1e-6


@dataclass
class RootSet:
    """Real roots of one series on (-pi, pi], sorted ascending."""

    angles: np.ndarray
    residuals: np.ndarray           # |eval_series| at each angle
    flat: bool = False              # series was identically ~zero


def _trimmed_coeffs(series: TrigSeries):
    """Drop trailing near-zero harmonics; returns (coeffs, order) or None."""
    coeffs = series.coeffs
    M = series.order
    top = np.max(np.abs(coeffs))
    if top == 0.0:
        return None
    keep = np.abs(coeffs) > TRIM_TOL * top
    idx = np.nonzero(keep)[0]
    Mp = int(max(abs(idx[0] - M), abs(idx[-1] - M)))
    if Mp == 0:
        return None
    return coeffs[M - Mp : M + Mp + 1], Mp


def companion_roots(series: TrigSeries):
    """All complex roots of p(z) = sum_m coeffs[m] z^{m+M} (degree 2M').

    Trailing coefficients below 1e-12 of the largest are trimmed first;
    an (effectively) constant series yields no roots.
    """
    trimmed = _trimmed_coeffs(series)
    if trimmed is None:
        return np.empty(0, dtype=complex)
    p, Mp = trimmed
    d = 2 * Mp
    # monic normalization, companion matrix with last-column coefficients
    a = p / p[-1]
    C = np.zeros((d, d), dtype=complex)
    C[1:, :-1] = np.eye(d - 1)
    C[:, -1] = -a[:-1]
    return np.linalg.eigvals(C)


def _dedupe(angles):
    if len(angles) < 2:
        return angles
    out = [angles[0]]
    for a in angles[1:]:
        if a - out[-1] > DEDUPE_TOL:
            out.append(a)
    # (-pi, pi] is circular: the first and last entries can alias
    if len(out) > 1 and (out[0] + 2 * np.pi) - out[-1] <= DEDUPE_TOL:
        out.pop()
    return np.array(out)


def unit_circle_roots(series: TrigSeries, radial_tol=RADIAL_TOL) -> RootSet:
    """Real roots of the series: near-circle eigenvalues, polished and verified.

    Eigenvalues with ||z|-1| <= radial_tol are mapped to angles on
    (-pi, pi], deduplicated, polished by up to 5 Newton steps on the series
    and kept when the series actually crosses zero there (or lands at
    machine-level magnitude, covering tangential roots).
    """
    if radial_tol <= 0:
        raise ValueError("radial_tol must be positive")
    if _trimmed_coeffs(series) is None:
        return RootSet(
            angles=np.empty(0), residuals=np.empty(0), flat=True
        )
    roots = companion_roots(series)
    near = roots[np.abs(np.abs(roots) - 1.0) <= radial_tol]
    if near.size == 0:
        return RootSet(angles=np.empty(0), residuals=np.empty(0))

    angles = np.sort(wrap_phase(np.angle(near)))
    angles = _dedupe(angles)

    deriv = series.derivative()
    scale = 1.0 + float(np.max(np.abs(series.coeffs)))
    polished = []
    for psi in angles:
        x = float(psi)
        for _ in range(5):
            fx = eval_series(series, x)
            dx = eval_series(deriv, x)
            if abs(dx) < 1e-300:
                break
            step = fx / dx
            if abs(step) > 0.1:  # runaway step, keep the eigenvalue angle
                break
            x -= step
            if abs(step) < 1e-15:
                break
        polished.append(wrap_phase(x))

    kept = []
    for x in sorted(polished):
        fx = eval_series(series, x)
        lo = eval_series(series, x - SIGN_WINDOW)
        hi = eval_series(series, x + SIGN_WINDOW)
        if lo * hi <= 0.0 or abs(fx) <= 1e-12 * scale:
            kept.append(x)
    kept = _dedupe(np.array(sorted(kept)))
    return RootSet(
        angles=kept,
        residuals=np.abs(eval_series(series, kept)) if len(kept) else np.empty(0),
    )


def best_candidate(state, pid, coordinate, roots: RootSet, current):
    """Argmin of the concentrated objective over roots plus the current value.

    coordinate is one of "omega1", "omega2", "psi", "chi"; ties (and an
    empty root set) keep the current value.
    """
    sl = build_slice(state, pid, coordinate)
    return best_candidate_on_slice(sl, roots, current)


def best_candidate_on_slice(sl: CoordinateSlice, roots: RootSet, current):
    """Same as best_candidate but reusing an already-built slice."""
    best_x = float(current)
    best_f = sl.objective(best_x)
    if len(roots.angles):
        vals = sl.objective_many(roots.angles)
        i = int(np.argmin(vals))
        if vals[i] < best_f:
            best_x = float(roots.angles[i])
            best_f = float(vals[i])
    return best_x
