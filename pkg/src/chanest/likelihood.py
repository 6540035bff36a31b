"""Scaled negative log-likelihood objective and its incremental residual cache.

The estimation objective is (1/N0) * sum_{n,t,u} |y - mu|^2 where mu is the
sum of active path contributions.  ResidualState keeps the running residual
y - mu together with a per-path contribution cache so that one-path updates
cost a single pass over the observation tensor instead of a full
re-synthesis.  Because the objective is convex (quadratic) in each path
gain, the optimal gain has the closed form

    b = <alpha, r> / ||alpha||^2

with alpha the unit-gain path field and r the residual with this path's
own contribution removed; substituting it yields the concentrated objective
that every coordinate update evaluates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PathParams, ScenarioConfig, params_from_phases, path_field

# Full residual re-synchronization period, in set_path calls, to cap
# incremental floating point drift.
_RESYNC_EVERY = 50

# Pilot isotropy gate used by the departure-angle machinery.
ISOTROPY_TOL = 1e-6


class DegenerateRegressorError(ValueError):
    """Path regressor has zero energy (zero pilots)."""


class UnknownPathError(KeyError):
    """Path id is not registered in the state."""


@dataclass
class Regressor:
    """Unit-gain field of one path and its total energy sum|alpha|^2."""

    field: np.ndarray
    energy: float


@dataclass
class _PathRecord:
    user: int
    phases: np.ndarray      # [omega1, omega2, psi, chi]
    gain: complex
    contrib: np.ndarray     # gain * unit field, cached
    active: bool = True


class ResidualState:
    """Single-owner working memory of one estimation run.

    Holds the observation, per-user pilots, the residual y - mu, the
    (1/N0)-scaled objective and the per-path contribution cache, keyed by
    arbitrary hashable path ids (the optimizer uses (user, slot) tuples).
    """

    def __init__(self, received, pilots, n0, isotropy=None):
        self.received = np.asarray(received, dtype=complex)
        self.pilots = [np.asarray(x, dtype=complex) for x in pilots]
        if n0 <= 0:
            raise ValueError("noise variance must be positive")
        self.n0 = float(n0)
        self.residual = self.received.copy()
        self.paths = {}
        self._set_calls = 0
        # per-user isotropy deviation, computed lazily unless provided
        self._isotropy = isotropy

    # -- bookkeeping ------------------------------------------------------

    @property
    def objective(self):
        """(1/N0) * sum |residual|^2 over the grid."""
        return float(np.vdot(self.residual, self.residual).real / self.n0)

    def pilot_isotropy(self, user):
        if self._isotropy is None:
            from .model import check_isotropy

            self._isotropy = [check_isotropy(x) for x in self.pilots]
        return self._isotropy[user]

    def path_ids(self, user=None):
        if user is None:
            return list(self.paths)
        return [pid for pid, rec in self.paths.items() if rec.user == user]

    def params_of(self, pid):
        rec = self._rec(pid)
        return params_from_phases(rec.phases, rec.gain)

    def _rec(self, pid):
        try:
            return self.paths[pid]
        except KeyError:
            raise UnknownPathError(pid) from None

    # -- mutation ---------------------------------------------------------

    def add_path(self, pid, user, phases, gain=0j):
        if pid in self.paths:
            raise ValueError(f"path {pid} already registered")
        rec = _PathRecord(
            user=user,
            phases=np.array(phases, dtype=float),
            gain=complex(gain),
            contrib=np.zeros_like(self.received),
        )
        self.paths[pid] = rec
        self._apply(rec, rec.phases, rec.gain)

    def remove_path(self, pid):
        rec = self._rec(pid)
        self.residual += rec.contrib
        del self.paths[pid]

    def set_path_phases(self, pid, phases, gain):
        """Point a path at new parameters, updating the residual incrementally."""
        self._apply(self._rec(pid), np.array(phases, dtype=float), complex(gain))

    def _apply(self, rec, phases, gain):
        self.residual += rec.contrib
        rec.phases = phases
        rec.gain = gain
        if gain == 0:
            rec.contrib = np.zeros_like(self.received)
        else:
            rec.contrib = gain * self.unit_field(rec.user, phases)
        self.residual -= rec.contrib
        self._set_calls += 1
        if self._set_calls % _RESYNC_EVERY == 0:
            self.resync()

    def resync(self):
        """Rebuild the residual from the contribution cache (drift control)."""
        acc = self.received.copy()
        for rec in self.paths.values():
            acc -= rec.contrib
        self.residual = acc

    # -- snapshots (used to roll back rejected path additions) -------------

    def snapshot(self):
        return (
            self.residual.copy(),
            {
                pid: (rec.user, rec.phases.copy(), rec.gain, rec.contrib.copy(),
                      rec.active)
                for pid, rec in self.paths.items()
            },
            self._set_calls,
        )

    def restore(self, snap):
        residual, paths, set_calls = snap
        self.residual = residual.copy()
        self.paths = {
            pid: _PathRecord(user=u, phases=ph.copy(), gain=g, contrib=c.copy(),
                             active=a)
            for pid, (u, ph, g, c, a) in paths.items()
        }
        self._set_calls = set_calls

    # -- math helpers -----------------------------------------------------

    def unit_field(self, user, phases):
        w1, w2, psi, chi = phases
        return path_field(w1, w2, psi, chi, self.pilots[user], self.received.shape[2])

    def detached_residual(self, pid):
        """Residual with this path's own contribution added back (y - others)."""
        return self.residual + self._rec(pid).contrib

    def masked_objective(self, active_ids):
        """(1/N0)*||y - sum of the selected paths' contributions||^2."""
        acc = self.received.copy()
        for pid in active_ids:
            acc -= self._rec(pid).contrib
        return float(np.vdot(acc, acc).real / self.n0)


def build_state(received, pilots, config: ScenarioConfig):
    """ResidualState over an observation, shape-checked against config."""
    received = np.asarray(received, dtype=complex)
    if received.shape != (config.Nc, config.Ns, config.Nr):
        raise ValueError(
            f"received shape {received.shape} != "
            f"{(config.Nc, config.Ns, config.Nr)}"
        )
    return ResidualState(received, pilots, config.N0)


def build_regressor(params, pilot, Nr):
    """Unit-gain regressor of one path (gain excluded) and its energy.

    params may be PathParams (gain ignored) or the phase-domain vector
    [omega1, omega2, psi, chi].
    """
    phases = params.phases if isinstance(params, PathParams) else np.asarray(params)
    field = path_field(phases[0], phases[1], phases[2], phases[3], pilot, Nr)
    energy = float(np.vdot(field, field).real)
    if energy <= 0.0:
        raise DegenerateRegressorError("regressor energy is zero (zero pilots)")
    return Regressor(field=field, energy=energy)


def solve_gain(state: ResidualState, pid):
    """Closed-form least squares gain of one path, all other paths fixed.

    Evaluates b = <alpha, y - others> / ||alpha||^2 at the path's current
    coordinates; <.,.> is the conjugated inner product over (n, t, u).
    """
    rec = state._rec(pid)
    reg = build_regressor(rec.phases, state.pilots[rec.user], state.received.shape[2])
    r = state.detached_residual(pid)
    return complex(np.vdot(reg.field, r) / reg.energy)


def set_path(state: ResidualState, pid, params: PathParams):
    """Set a registered path to new parameters (incremental residual update)."""
    state.set_path_phases(pid, params.phases, params.b)


def concentrated_objective(state: ResidualState, pid, candidate):
    """Objective with this path's gain set to its optimum for the candidate.

    candidate is PathParams (gain ignored) or a phase vector; all other
    paths stay fixed.  Never exceeds the objective at any other gain choice
    for the same coordinates.
    """
    rec = state._rec(pid)
    reg = build_regressor(candidate, state.pilots[rec.user], state.received.shape[2])
    r = state.detached_residual(pid)
    g = np.vdot(reg.field, r)
    n2 = np.vdot(r, r).real
    return float((n2 - abs(g) ** 2 / reg.energy) / state.n0)
