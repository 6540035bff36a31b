"""Uplink multiuser MIMO-OFDM signal model and synthetic scenario generation.

The received signal at subcarrier n, OFDM symbol t and rx antenna u is a
superposition of per-user multipath components, each parameterized by a
complex gain b, two harmonic frequencies omega1 (delay axis, rad per
subcarrier) and omega2 (Doppler axis, rad per symbol), and the arrival /
departure angles phi / theta of a half-wavelength ULA.  Delay and Doppler
are folded together with the per-user clock/CFO offsets into omega1 and
omega2, so the estimator only ever sees the four harmonic coordinates plus
the gain.

Internally all angle work happens in the phase domains
    psi = -pi*sin(phi)   (rx antenna phase step, exponent exp(+j*psi*u))
    chi = +pi*sin(theta) (tx antenna phase step, exponent exp(-j*chi*v))
which are bijective to the open angle intervals; conversion to phi/theta
happens only at API boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * np.pi

# Keeps arcsin strictly inside (-pi/2, pi/2) when a phase lands exactly on
# the domain edge.
_SIN_CLIP = 1.0 - 1e-12


class DimensionMismatchError(ValueError):
    """Array shapes disagree with the scenario configuration."""


class DegeneratePilotsError(ValueError):
    """Pilot tensor carries no power (isotropy check undefined)."""


def wrap_phase(x):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    w = np.pi - (np.pi - np.asarray(x, dtype=float)) % TWO_PI
    return float(w) if np.ndim(x) == 0 else w


def phi_to_psi(phi):
    """Arrival angle -> rx phase step psi = -pi*sin(phi)."""
    return -np.pi * np.sin(phi)


def psi_to_phi(psi):
    """Rx phase step -> arrival angle, clipped strictly inside (-pi/2, pi/2)."""
    return float(np.arcsin(np.clip(-psi / np.pi, -_SIN_CLIP, _SIN_CLIP)))


def theta_to_chi(theta):
    """Departure angle -> tx phase step chi = pi*sin(theta)."""
    return np.pi * np.sin(theta)


def chi_to_theta(chi):
    """Tx phase step -> departure angle, clipped strictly inside (-pi/2, pi/2)."""
    return float(np.arcsin(np.clip(chi / np.pi, -_SIN_CLIP, _SIN_CLIP)))


@dataclass(frozen=True)
class PathParams:
    """One multipath component: complex gain plus four harmonic coordinates."""

    b: complex          # complex path gain (dimensionless)
    omega1: float       # rad per subcarrier index, in (-pi, pi]
    omega2: float       # rad per symbol index, in (-pi, pi]
    phi: float          # angle of arrival, rad in (-pi/2, pi/2)
    theta: float        # angle of departure, rad in (-pi/2, pi/2)

    def __post_init__(self):
        if not np.isfinite(self.b):
            raise ValueError("path gain must be finite")
        for name in ("omega1", "omega2"):
            v = getattr(self, name)
            if not (-np.pi < v <= np.pi):
                raise ValueError(f"{name}={v} outside (-pi, pi]")
        for name in ("phi", "theta"):
            v = getattr(self, name)
            if not (-np.pi / 2 < v < np.pi / 2):
                raise ValueError(f"{name}={v} outside (-pi/2, pi/2)")

    @property
    def phases(self):
        """The four phase-domain coordinates [omega1, omega2, psi, chi]."""
        return np.array(
            [self.omega1, self.omega2, phi_to_psi(self.phi), theta_to_chi(self.theta)]
        )


def params_from_phases(phases, gain):
    """Build PathParams from the internal phase vector [omega1, omega2, psi, chi]."""
    w1, w2, psi, chi = (float(v) for v in phases)
    return PathParams(
        b=complex(gain),
        omega1=wrap_phase(w1),
        omega2=wrap_phase(w2),
        phi=psi_to_phi(wrap_phase(psi)),
        theta=chi_to_theta(wrap_phase(chi)),
    )


@dataclass(frozen=True)
class PhysicalGrid:
    """OFDM resource grid scales used to map harmonics back to delay/Doppler."""

    f_scs: float  # subcarrier spacing, Hz
    Ts: float     # OFDM symbol length, s

    def __post_init__(self):
        if self.f_scs <= 0 or self.Ts <= 0:
            raise ValueError("grid scales must be positive")


def omega_to_physical(omega1, omega2, grid: PhysicalGrid):
    """Harmonic coordinates -> (delay s, Doppler Hz), offsets assumed zero."""
    return -omega1 / (TWO_PI * grid.f_scs), omega2 / (TWO_PI * grid.Ts)


def physical_to_omega(delay, doppler, grid: PhysicalGrid):
    """Inverse of omega_to_physical."""
    return -TWO_PI * delay * grid.f_scs, TWO_PI * doppler * grid.Ts


@dataclass(frozen=True)
class ScenarioConfig:
    """Synthetic scenario dimensions and sampling distributions."""

    K: int = 2                          # number of users
    L: tuple = (3, 3)                   # true path count per user
    Nc: int = 30                        # subcarriers
    Ns: int = 15                        # OFDM symbols
    Nr: int = 32                        # rx antennas
    Nt: int = 4                         # tx antennas
    N0: float = 1e-8                    # noise variance per complex sample, W
    tx_powers: tuple = (-40.0, -40.0)   # per-user transmit power, dBW
    rice_noncentrality: float = 1e-2    # gain magnitude Rice nu
    rice_scale: float = 5e-3            # gain magnitude Rice sigma
    los_boost: float = 1.5              # multiplier on the largest gain per user
    seed: int = 0                       # 64-bit RNG seed, drives all draws

    def __post_init__(self):
        object.__setattr__(self, "L", tuple(int(v) for v in self.L))
        object.__setattr__(self, "tx_powers", tuple(float(v) for v in self.tx_powers))
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if len(self.L) != self.K or len(self.tx_powers) != self.K:
            raise ValueError("L and tx_powers must have one entry per user")
        for name in ("Nc", "Ns", "Nr", "Nt"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if any(l < 1 for l in self.L):
            raise ValueError("path counts must be >= 1")
        if self.N0 <= 0:
            raise ValueError("N0 must be > 0")
        if self.rice_noncentrality < 0 or self.rice_scale < 0:
            raise ValueError("Rice parameters must be >= 0")

    @property
    def grid_size(self):
        """Number of observed complex samples Nc*Ns*Nr."""
        return self.Nc * self.Ns * self.Nr


@dataclass
class Scenario:
    """A sampled problem instance: ground truth, pilots and observations."""

    config: ScenarioConfig
    channels: list          # per user: list of PathParams
    pilots: list            # per user: complex array (Nc, Ns, Nt)
    received: np.ndarray    # complex array (Nc, Ns, Nr)
    noise_seed: int


def steering(angle, N):
    """Half-wavelength ULA response, element i = exp(-j*pi*i*sin(angle))."""
    if N < 1:
        raise ValueError("steering vector needs N >= 1")
    return np.exp(-1j * np.pi * np.arange(N) * np.sin(angle))


def _ramp(w, n):
    # unit-modulus phase progression exp(j*w*[0..n-1])
    return np.exp(1j * w * np.arange(n))


def path_field(omega1, omega2, psi, chi, pilot, Nr):
    """Unit-gain field of one path over (n, t, u) for the given pilot tensor.

    field[n,t,u] = exp(j*omega1*n) exp(j*omega2*t) exp(j*psi*u) * s[n,t]
    with s[n,t] = sum_v pilot[n,t,v] * exp(-j*chi*v), the beamformed pilot.
    """
    Nc, Ns, Nt = pilot.shape
    s = pilot @ _ramp(-chi, Nt)
    return (
        _ramp(omega1, Nc)[:, None, None]
        * _ramp(omega2, Ns)[None, :, None]
        * _ramp(psi, Nr)[None, None, :]
        * s[:, :, None]
    )


def synthesize_mean(channels, pilots, config: ScenarioConfig):
    """Noise-free received tensor: sum of all users' path contributions."""
    _check_dims(channels, pilots, config)
    mean = np.zeros((config.Nc, config.Ns, config.Nr), dtype=complex)
    for paths, pilot in zip(channels, pilots):
        for p in paths:
            w1, w2, psi, chi = p.phases
            mean += p.b * path_field(w1, w2, psi, chi, pilot, config.Nr)
    return mean


def synthesize_received(channels, pilots, config: ScenarioConfig, noise_seed,
                        noise_var=None):
    """Mean plus circular complex Gaussian noise, deterministic per seed.

    Total variance per complex entry is config.N0 (noise_var overrides,
    0.0 gives the noiseless limit).
    """
    mean = synthesize_mean(channels, pilots, config)
    var = config.N0 if noise_var is None else noise_var
    if var == 0.0:
        return mean
    rng = np.random.default_rng(noise_seed)
    scale = np.sqrt(var / 2.0)
    noise = rng.normal(0.0, scale, mean.shape) + 1j * rng.normal(0.0, scale, mean.shape)
    return mean + noise


def generate_isotropic_pilots(config: ScenarioConfig, seed):
    """Single-active-antenna hopping pilots (exactly isotropic).

    For each resource element (n, t) exactly one tx antenna, drawn uniformly
    at random, transmits a unit-modulus symbol of uniform random phase scaled
    by sqrt(linear tx power); the total beamformed power
    sum_{n,t}|a(theta)^T x|^2 is then theta-independent because each summand
    is |x_v|^2.

    The active antenna must not be an affine function of (n, t) such as a
    plain cyclic sweep: any pattern v = (a*n + b*t + c) mod Nt makes the
    joint shift (omega1, omega2, chi) -> (omega1 + a*d, omega2 + b*d,
    chi + d) with d = 2*pi*m/Nt invisible in the data, so path parameters
    would stop being identifiable.  Random hopping breaks the degeneracy.
    """
    rng = np.random.default_rng(seed)
    n_idx, t_idx = np.meshgrid(
        np.arange(config.Nc), np.arange(config.Ns), indexing="ij"
    )
    pilots = []
    for k in range(config.K):
        amp = 10.0 ** (config.tx_powers[k] / 20.0)
        active = rng.integers(0, config.Nt, size=(config.Nc, config.Ns))
        phase = rng.uniform(-np.pi, np.pi, size=(config.Nc, config.Ns))
        x = np.zeros((config.Nc, config.Ns, config.Nt), dtype=complex)
        x[n_idx, t_idx, active] = amp * np.exp(1j * phase)
        pilots.append(x)
    return pilots


def default_theta_grid(num=181):
    """Probe angles for pilot isotropy checks, covering (-pi/2, pi/2)."""
    return np.linspace(-np.pi / 2, np.pi / 2, num)


def check_isotropy(pilot, theta_grid=None):
    """Max relative deviation of the beamformed pilot power over angle.

    Returns max_theta |S(theta) - S_mean| / S_mean with
    S(theta) = sum_{n,t} |steering(theta, Nt)^T x_nt|^2.
    """
    if theta_grid is None:
        theta_grid = default_theta_grid()
    theta_grid = np.asarray(theta_grid)
    if theta_grid.size < 64:
        raise ValueError("need a grid of at least 64 angles")
    Nc, Ns, Nt = pilot.shape
    if Nt == 1:
        # |a(theta)^T x| = |x| for a scalar: exactly isotropic
        if not np.any(pilot):
            raise DegeneratePilotsError("zero-power pilots")
        return 0.0
    # rows: one steering vector per probe angle
    A = np.exp(-1j * np.pi * np.sin(theta_grid)[:, None] * np.arange(Nt)[None, :])
    s = pilot.reshape(-1, Nt) @ A.T
    S = np.sum(np.abs(s) ** 2, axis=0)
    S_mean = float(np.mean(S))
    if S_mean == 0.0:
        raise DegeneratePilotsError("zero-power pilots")
    return float(np.max(np.abs(S - S_mean)) / S_mean)


def sample_channels(config: ScenarioConfig, rng):
    """Draw ground-truth path parameters for every user from rng.

    omega1, omega2 and the gain phase are uniform on (-pi, pi); phi and
    theta uniform on (-pi/2, pi/2); the gain magnitude is Rice distributed
    (sampled constructively as |N(nu, sigma^2) + j N(0, sigma^2)|) and the
    largest magnitude per user is multiplied by los_boost.
    """
    channels = []
    for k in range(config.K):
        Lk = config.L[k]
        omega1 = rng.uniform(-np.pi, np.pi, Lk)
        omega2 = rng.uniform(-np.pi, np.pi, Lk)
        angle_b = rng.uniform(-np.pi, np.pi, Lk)
        phi = rng.uniform(-np.pi / 2, np.pi / 2, Lk)
        theta = rng.uniform(-np.pi / 2, np.pi / 2, Lk)
        xc = rng.normal(config.rice_noncentrality, config.rice_scale, Lk)
        yc = rng.normal(0.0, config.rice_scale, Lk)
        mag = np.hypot(xc, yc)
        mag[np.argmax(mag)] *= config.los_boost
        channels.append(
            [
                PathParams(
                    b=mag[i] * np.exp(1j * angle_b[i]),
                    omega1=omega1[i],
                    omega2=omega2[i],
                    phi=phi[i],
                    theta=theta[i],
                )
                for i in range(Lk)
            ]
        )
    return channels


def sample_scenario(config: ScenarioConfig, noiseless=False):
    """Sample a full scenario (truth, pilots, observation) from config.seed."""
    rng = np.random.default_rng(config.seed)
    channels = sample_channels(config, rng)
    pilot_seed = int(rng.integers(0, 2**63))
    noise_seed = int(rng.integers(0, 2**63))
    pilots = generate_isotropic_pilots(config, pilot_seed)
    received = synthesize_received(
        channels, pilots, config, noise_seed, noise_var=0.0 if noiseless else None
    )
    return Scenario(
        config=config,
        channels=channels,
        pilots=pilots,
        received=received,
        noise_seed=noise_seed,
    )


def _check_dims(channels, pilots, config: ScenarioConfig):
    if len(channels) != config.K or len(pilots) != config.K:
        raise DimensionMismatchError("need one channel list and pilot tensor per user")
    for x in pilots:
        if x.shape != (config.Nc, config.Ns, config.Nt):
            raise DimensionMismatchError(
                f"pilot shape {x.shape} != {(config.Nc, config.Ns, config.Nt)}"
            )
