"""Full estimation loop: exact coordinate descent with momentum and
over-relaxation, successive path addition, user scheduling and model-order
selection by a generalized AIC.

A path update sweeps its four coordinates in the fixed order
[omega1, omega2, psi, chi]; each coordinate is set to the best root of its
derivative series (exact step), pushed by momentum, over-relaxed, and the
combined step falls back to the plain exact step whenever it would worsen
the concentrated objective.  The path gain is then refreshed with its
closed form.  The objective is therefore nonincreasing over every accepted
update, which a hard runtime check enforces.

Users are visited cyclically ([1..K] repeated three times by default); a
visit clears the user's previous paths and re-adds them one at a time,
each addition followed by an inner loop over the user's paths (newest
first, then oldest to newest).  Additions that fail to lower the per-user
AIC are rolled back; after m_aic_max consecutive failures the user is
done.  The final per-user path counts minimize the K-dimensional AIC
tensor over truncated (gain-sorted) path sets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .derivatives import COORDS, NonIsotropicPilotsError, build_slice, eval_series
from .likelihood import ISOTROPY_TOL, ResidualState, build_state
from .model import ScenarioConfig, params_from_phases, wrap_phase
from .rootfind import best_candidate_on_slice, unit_circle_roots


class MonotonicityError(RuntimeError):
    """An accepted path update increased the objective (should never happen)."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning knobs of the estimation loop."""

    rho: float = 1.05            # over-relaxation factor
    eta0: float = 0.1            # initial momentum coefficient
    eta_decay: float = 0.5       # momentum multiplier per path re-estimation
    it_max: int = 30             # max inner-loop sweeps per path addition
    m_aic_max: int = 2           # consecutive AIC failures before a user stops
    gamma_aic: float = 12.0      # AIC penalty per path (2 * 6 real parameters)
    L_max: int = 6               # max paths per user
    L_window: int | None = None  # only the last L_window paths join inner sweeps
    user_schedule: tuple | None = None  # 1-based user visit order; default [1..K]*3
    var_tol: float = 1e-8        # deactivate below this relative variable change
    obj_tol_factor: float = 1e-10  # deactivate below obj_tol_factor * gamma_obj

    def __post_init__(self):
        if not (0.0 < self.rho < 2.0):
            raise ValueError("rho must lie in (0, 2)")
        if self.eta0 < 0:
            raise ValueError("eta0 must be >= 0")
        if self.it_max < 1 or self.L_max < 1:
            raise ValueError("it_max and L_max must be >= 1")
        if self.user_schedule is not None:
            object.__setattr__(
                self, "user_schedule", tuple(int(u) for u in self.user_schedule)
            )

    def schedule(self, K):
        """0-based visit order."""
        if self.user_schedule is None:
            return [k for _ in range(3) for k in range(K)]
        if any(not (1 <= u <= K) for u in self.user_schedule):
            raise ValueError("user_schedule entries must be in 1..K")
        return [u - 1 for u in self.user_schedule]


@dataclass
class PathSlot:
    """Optimizer-side memory of one path: momentum history and activity."""

    pid: tuple
    prev: np.ndarray             # coordinate values before the last update
    eta: float = 0.0
    active: bool = True
    age: int = 0                 # insertion order within the user's visit
    times_estimated: int = 0     # completed inner-loop rounds


@dataclass
class UpdateReport:
    objective_delta: float       # improvement (before - after), >= 0
    max_rel_change: float


@dataclass
class EstimateResult:
    """Final estimate: per-user paths sorted by descending |gain|."""

    users: list                  # per user: list of PathParams
    L_est: tuple
    objective: float
    counters: dict = field(default_factory=dict)


def momentum_candidate(xi_opt, xi_m, xi_prev, eta):
    """Exact step pushed along the last accepted (wrapped) displacement."""
    return xi_opt + eta * wrap_phase(xi_m - xi_prev)


def relaxed_update(xi_m, candidate, rho):
    """Over-relaxed step (1-rho)*xi_m + rho*candidate, wrapped to (-pi, pi]."""
    return wrap_phase((1.0 - rho) * xi_m + rho * candidate)


def _rel_change(new, old):
    # bounded relative change; ~|delta| near zero, ~relative for large values
    return abs(new - old) / (1.0 + abs(old))


def update_path(state: ResidualState, slot: PathSlot, config: EstimatorConfig,
                counters=None) -> UpdateReport:
    """One full update of a path: four exact coordinate steps plus the gain.

    Falls back to the plain exact step whenever momentum/over-relaxation
    would worsen the concentrated objective, so the state objective never
    increases (hard-checked).
    """
    pid = slot.pid
    rec = state._rec(pid)
    obj_before = state.objective
    work = rec.phases.copy()
    gain_before = rec.gain
    sl = None
    for ci, coord in enumerate(COORDS):
        sl = build_slice(state, pid, coord)
        roots = unit_circle_roots(sl.series)
        xi_cur = float(work[ci])
        xi_exact = best_candidate_on_slice(sl, roots, xi_cur)
        xi_new = relaxed_update(
            xi_cur,
            momentum_candidate(xi_exact, xi_cur, float(slot.prev[ci]), slot.eta),
            config.rho,
        )
        if sl.objective(xi_new) > sl.objective(xi_exact):
            xi_new = xi_exact  # never-worsen safeguard
            if counters is not None:
                counters["fallback_steps"] = counters.get("fallback_steps", 0) + 1
        work[ci] = xi_new
        slot.prev[ci] = xi_cur
        # later slices must see this coordinate's new value
        rec.phases[ci] = xi_new
    gain = sl.gain(float(work[3]))
    state.set_path_phases(pid, work, gain)
    obj_after = state.objective
    if obj_after > obj_before + 1e-9:
        raise MonotonicityError(
            f"path update raised the objective: {obj_before} -> {obj_after}"
        )
    changes = [_rel_change(float(work[i]), float(slot.prev[i])) for i in range(4)]
    changes.append(abs(gain - gain_before) / (1.0 + abs(gain_before)))
    if counters is not None:
        counters["path_updates"] = counters.get("path_updates", 0) + 1
    return UpdateReport(
        objective_delta=obj_before - obj_after,
        max_rel_change=float(max(changes)),
    )


def aic_user(state: ResidualState, k, L, gamma_aic=12.0):
    """Generalized AIC of user k truncated to its L strongest paths.

    Objective with only user k's top-L paths (by |gain|) active for that
    user and all other users as currently estimated, plus gamma_aic per
    path; gains are masked, not re-optimized.
    """
    own = _sorted_user_paths(state, k)
    if L > len(own):
        raise ValueError(f"user {k} has only {len(own)} stored paths")
    others = [pid for pid in state.path_ids() if pid not in set(own)]
    return state.masked_objective(others + own[:L]) + gamma_aic * L


def select_model_order(state: ResidualState, L_max, gamma_aic=12.0):
    """Argmin tuple of the K-user AIC tensor over truncated path sets.

    Ties break toward fewer total paths, then lexicographically.
    """
    K = len(state.pilots)
    per_user = [_sorted_user_paths(state, k) for k in range(K)]
    # per user cumulative contribution sums over the gain-sorted prefix
    cums = []
    for own in per_user:
        acc = [np.zeros_like(state.received)]
        for pid in own[: int(L_max)]:
            acc.append(acc[-1] + state.paths[pid].contrib)
        cums.append(acc)
    best = None
    for tup in itertools.product(*(range(len(c)) for c in cums)):
        res = state.received - sum(cums[k][tup[k]] for k in range(K))
        aic = float(np.vdot(res, res).real / state.n0) + gamma_aic * sum(tup)
        key = (aic, sum(tup), tup)
        if best is None or key < best[0]:
            best = (key, tup)
    return best[1]


def _sorted_user_paths(state, k):
    own = state.path_ids(k)
    return sorted(own, key=lambda pid: -abs(state.paths[pid].gain))


def _beamspace_init(state: ResidualState, user):
    """Matched-filter peak of the residual on a 2x-oversampled FFT grid.

    Scans (omega1, omega2, psi) per tx-phase hypothesis on a coarse 2*Nt
    grid; the winning bin seeds the new path.  Scanning chi is required
    with antenna-hopping pilots: a chi=0-only scan attenuates paths near
    the nulls of the zero-angle beam until they vanish under the sidelobes.
    """
    pilot = state.pilots[user]
    Nc, Ns, Nt = pilot.shape
    Nr = state.received.shape[2]
    best = None
    for chi in np.linspace(-np.pi, np.pi, 2 * Nt, endpoint=False):
        s = pilot @ np.exp(-1j * chi * np.arange(Nt))
        m = state.residual * np.conj(s)[:, :, None]
        spec = np.abs(np.fft.fftn(m, s=(2 * Nc, 2 * Ns, 2 * Nr), axes=(0, 1, 2)))
        idx = np.unravel_index(np.argmax(spec), spec.shape)
        peak = spec[idx]
        if best is None or peak > best[0]:
            best = (peak, idx, chi)
    _, (kk, ll, pp), chi = best
    return np.array(
        [
            wrap_phase(np.pi * kk / Nc),
            wrap_phase(np.pi * ll / Ns),
            wrap_phase(np.pi * pp / Nr),
            chi,
        ]
    )


class Estimator:
    """Drives one full estimation over a fixed observation."""

    def __init__(self, received, pilots, config: ScenarioConfig,
                 est_config: EstimatorConfig = None):
        self.config = config
        self.est = est_config or EstimatorConfig()
        self.state = build_state(received, pilots, config)
        for k in range(config.K):
            if self.state.pilot_isotropy(k) > ISOTROPY_TOL:
                raise NonIsotropicPilotsError(
                    f"user {k} pilots fail the isotropy condition "
                    f"(deviation {self.state.pilot_isotropy(k):.3e})"
                )
        self.slots = {}
        self._slot_seq = 0
        self.counters = {
            "path_updates": 0,
            "inner_iterations": 0,
            "aic_rejections": 0,
            "user_visits": 0,
            "fallback_steps": 0,
        }
        # objective scale used by the stopping rules
        n = config.grid_size
        self.gamma_obj = max(self.state.objective - n, 0.0)
        # noise-floor mean plus 3 sigma of the residual chi-square
        self.stop_objective = n + 3.0 * np.sqrt(n)

    # -- inner machinery ----------------------------------------------------

    def _user_slots(self, k):
        return [s for s in self.slots.values() if s.pid[0] == k]

    def _clear_user(self, k):
        for pid in self.state.path_ids(k):
            self.state.remove_path(pid)
        self.slots = {pid: s for pid, s in self.slots.items() if pid[0] != k}

    def _add_path(self, k):
        phases = _beamspace_init(self.state, k)
        pid = (k, self._slot_seq)
        self._slot_seq += 1
        self.state.add_path(pid, k, phases, 0j)
        from .likelihood import solve_gain

        self.state.set_path_phases(pid, phases, solve_gain(self.state, pid))
        slot = PathSlot(pid=pid, prev=phases.copy(),
                        age=len(self._user_slots(k)))
        self.slots[pid] = slot
        return slot

    def _inner_loop(self, k):
        """Sweep the user's active paths until all deactivate or it_max."""
        slots = sorted(self._user_slots(k), key=lambda s: s.age)
        if self.est.L_window is not None:
            slots = slots[-int(self.est.L_window):]
        if not slots:
            return
        # newest first, then oldest to newest, cyclically
        order = [slots[-1]] + slots[:-1]
        for s in slots:
            s.active = True
            s.eta = self.est.eta0 * self.est.eta_decay**s.times_estimated
        obj_thr = self.est.obj_tol_factor * self.gamma_obj
        for _ in range(self.est.it_max):
            self.counters["inner_iterations"] += 1
            for slot in order:
                if not slot.active:
                    continue
                report = update_path(self.state, slot, self.est, self.counters)
                if (report.objective_delta < obj_thr
                        or report.max_rel_change < self.est.var_tol):
                    slot.active = False
            if all(not s.active for s in order):
                break
        for s in slots:
            s.times_estimated += 1

    def estimate_user(self, k):
        """Clear and re-estimate user k, adding paths gated by the AIC."""
        self.counters["user_visits"] += 1
        self._clear_user(k)
        aic_prev = None
        consecutive_failures = 0
        for _ in range(self.est.L_max):
            snap = (self.state.snapshot(),
                    {pid: _copy_slot(s) for pid, s in self.slots.items()},
                    self._slot_seq)
            self._add_path(k)
            self._inner_loop(k)
            aic_now = aic_user(self.state, k, len(self.state.path_ids(k)),
                               self.est.gamma_aic)
            if aic_prev is None:
                # the first path establishes the AIC baseline
                aic_prev = aic_now
                continue
            if aic_now < aic_prev:
                aic_prev = aic_now
                consecutive_failures = 0
            else:
                self.state.restore(snap[0])
                self.slots = snap[1]
                self._slot_seq = snap[2]
                self.counters["aic_rejections"] += 1
                consecutive_failures += 1
                if consecutive_failures >= self.est.m_aic_max:
                    break

    def run(self) -> EstimateResult:
        schedule = self.est.schedule(self.config.K)
        for i, k in enumerate(schedule):
            self.estimate_user(k)
            # check the optimality stop only at full-cycle boundaries so no
            # user is frozen at a staler round than the others
            if (i + 1) % self.config.K == 0 and (
                    self.state.objective <= self.stop_objective):
                self.counters["early_stop"] = 1
                break
        L_est = select_model_order(self.state, self.est.L_max,
                                   self.est.gamma_aic)
        users = []
        for k in range(self.config.K):
            own = _sorted_user_paths(self.state, k)
            users.append([self.state.params_of(pid) for pid in own])
        return EstimateResult(
            users=users,
            L_est=tuple(int(v) for v in L_est),
            objective=self.state.objective,
            counters=dict(self.counters),
        )


def _copy_slot(s: PathSlot):
    return PathSlot(pid=s.pid, prev=s.prev.copy(), eta=s.eta, active=s.active,
                    age=s.age, times_estimated=s.times_estimated)


def estimate(received, pilots, config: ScenarioConfig,
             est_config: EstimatorConfig = None) -> EstimateResult:
    """Estimate every user's paths from one observation tensor.

    Pilots must be isotropic; rejected up front otherwise.  The result is
    deterministic given identical inputs.
    """
    return Estimator(received, pilots, config, est_config).run()
