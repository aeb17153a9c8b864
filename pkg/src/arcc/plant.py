"""
Time-domain model of the motor-driven active part, the flexure-coupled
passive part, the carrying robot and the environment.

Coordinate convention (single axis, positive towards the workpiece):

* ``x_a``, ``x_p`` -- active and passive positions relative to the robot
  flange (the ARCC housing), metres.  The LVDT reads ``x_p``; the spring
  deflection is ``x_a - x_p``.
* ``x_r`` -- robot flange position in the world frame, metres.
* The tool tip sits at ``x_r + x_p``; penetration into the surface is
  ``x_r + x_p - surface(t)``.

Spring objects take deflections in millimetres (``force``) or metres
(``force_si``) and always return newtons.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .lti import TransferFunction

DEFAULT_DAMPING_RATIO = 0.15
DIVERGENCE_LIMIT = 1e9


class SimulationDivergence(RuntimeError):
    def __init__(self, t: float, message: str = "state diverged"):
        super().__init__(f"{message} at t={t:.6g} s")
        self.t = t


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LinearSpring:
    """Single-rate flexure, stiffness in N/mm."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError("spring stiffness must be positive")

    def force(self, x):
        return self.c * np.asarray(x, dtype=float) if np.ndim(x) else self.c * float(x)

    def force_si(self, x: float) -> float:
        return self.c * 1e3 * x

    def energy_si(self, x: float) -> float:
        return 0.5 * self.c * 1e3 * x * x

    def stiffness_si(self, stage: int = 1) -> float:
        return self.c * 1e3

    def deflection_for(self, force: float) -> float:
        """Deflection in metres producing ``force`` newtons."""
        return force / (self.c * 1e3)


@dataclass(frozen=True)
class TwoStageSpring:
    """Piecewise-linear flexure hinge: ``c1`` up to ``x_t``, ``c2`` beyond.

    Stiffnesses in N/mm, transition deflection in mm.  With ``symmetric``
    the law is odd; otherwise the second stage exists only for positive
    deflection.
    """

    c1: float
    c2: float
    x_t: float
    symmetric: bool = True

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0 and self.x_t > 0):
            raise ConfigError("c1, c2 and x_t must be positive")
        if not self.c2 > self.c1:
            raise ConfigError("second stage must be stiffer than the first (c2 > c1)")

    @property
    def transition_force(self) -> float:
        return self.c1 * self.x_t

    def _f(self, x: float) -> float:
        ax = abs(x)
        if ax <= self.x_t or (x < 0 and not self.symmetric):
            return self.c1 * x
        f = self.c1 * self.x_t + self.c2 * (ax - self.x_t)
        return f if x > 0 else -f

    def force(self, x):
        if np.ndim(x):
            return np.vectorize(self._f, otypes=[float])(x)
        return self._f(float(x))

    def force_si(self, x: float) -> float:
        return self._f(x * 1e3)

    def energy_si(self, x: float) -> float:
        """Stored energy in joules, integrated piecewise in closed form."""
        xm = x * 1e3
        ax = abs(xm)
        if ax <= self.x_t or (xm < 0 and not self.symmetric):
            e = 0.5 * self.c1 * xm * xm
        else:
            r = ax - self.x_t
            e = 0.5 * self.c1 * self.x_t**2 + self.c1 * self.x_t * r + 0.5 * self.c2 * r * r
        return e * 1e-3  # N*mm -> J

    def stiffness_si(self, stage: int = 1) -> float:
        if stage not in (1, 2):
            raise ConfigError("stage must be 1 or 2")
        return (self.c1 if stage == 1 else self.c2) * 1e3

    def deflection_for(self, force: float) -> float:
        f = abs(force)
        if f <= self.transition_force or (force < 0 and not self.symmetric):
            x = f / self.c1
        else:
            x = self.x_t + (f - self.transition_force) / self.c2
        return math.copysign(x, force) * 1e-3


Spring = Union[LinearSpring, TwoStageSpring]


def spring_force(spring: Spring, x):
    """Force in N for a deflection in mm."""
    if not np.all(np.isfinite(x)):
        raise ValueError("deflection must be finite")
    return spring.force(x)


@dataclass(frozen=True)
class MotorModel:
    """First-order velocity lag from commanded to actual active-part velocity.

    The cascade internals (spindle inertia, gear ratio, efficiency, masses)
    are carried as metadata only; the dynamics use ``gain``/``time_constant``.
    """

    gain: float = 1.0
    time_constant: float = 1.0 / (2 * math.pi * 55.9)
    spindle_inertia: Optional[float] = None
    gear_ratio: Optional[float] = None
    efficiency: Optional[float] = None
    active_mass: Optional[float] = None
    equivalent_mass: Optional[float] = None

    def __post_init__(self):
        if not (self.gain > 0 and self.time_constant > 0):
            raise ConfigError("motor gain and time constant must be positive")

    def tf(self) -> TransferFunction:
        return TransferFunction.first_order(self.gain, self.time_constant)


@dataclass(frozen=True)
class RobotSurrogate:
    """Cartesian velocity lag of the robot along the ARCC axis."""

    gain: float = 1.0
    time_constant: float = 1.0 / (2 * math.pi * 1.8)

    def __post_init__(self):
        if not (self.gain > 0 and self.time_constant > 0):
            raise ConfigError("robot gain and time constant must be positive")

    def tf(self) -> TransferFunction:
        return TransferFunction.first_order(self.gain, self.time_constant)


SurfaceProfile = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class Environment:
    """Linear contact spring (N/m) against a possibly moving surface (m)."""

    stiffness: float = 1e5
    surface: SurfaceProfile = 0.0
    unilateral: bool = True

    def __post_init__(self):
        if not self.stiffness >= 0:
            raise ConfigError("contact stiffness must be non-negative")

    def surface_at(self, t: float) -> float:
        s = self.surface
        return s(t) if callable(s) else s


def contact_force(env: Environment, x_tool: float, t: float = 0.0) -> float:
    """Force pushing the tool back out of the surface; penetration positive."""
    pen = x_tool - env.surface_at(t)
    if env.unilateral and pen <= 0.0:
        return 0.0
    return env.stiffness * pen


class PlantState(NamedTuple):
    """Simulation state; accelerations are derived, not stored."""

    x_a: float = 0.0
    v_a: float = 0.0
    x_p: float = 0.0
    v_p: float = 0.0
    x_r: float = 0.0
    v_r: float = 0.0
    t: float = 0.0

    @property
    def vector(self) -> tuple:
        return tuple(self[:6])


@dataclass(frozen=True)
class PlantConfig:
    """Parameters of the coupled ARCC/robot/environment model.

    ``damping=None`` selects ``2*zeta*sqrt(c_stage1*m_p)`` with zeta=0.15.
    ``rigid_tool`` models a robot without the ARCC (tool bolted to the
    flange).  ``preload_deflection`` > 0 adds a unilateral stop that keeps
    the spring compressed by at least that amount (m).
    """

    passive_mass: float = 0.15
    spring: Spring = field(default_factory=lambda: LinearSpring(10.0))
    motor: MotorModel = field(default_factory=MotorModel)
    robot: RobotSurrogate = field(default_factory=RobotSurrogate)
    environment: Environment = field(default_factory=Environment)
    damping: Optional[float] = None
    dt_sim: float = 1e-4
    rigid_tool: bool = False
    preload_deflection: float = 0.0
    stop_stiffness: float = 1e6
    stop_damping_ratio: float = 0.7

    def __post_init__(self):
        if not self.passive_mass > 0:
            raise ConfigError("passive mass must be positive")
        if self.damping is not None and self.damping < 0:
            raise ConfigError("damping must be non-negative")
        if not self.dt_sim > 0:
            raise ConfigError("dt_sim must be positive")
        if self.preload_deflection < 0:
            raise ConfigError("preload deflection must be non-negative")
        f_max = self.fastest_corner_hz()
        if self.dt_sim > 1.0 / (10.0 * f_max):
            raise ConfigError(
                f"dt_sim={self.dt_sim} s too coarse for fastest corner {f_max:.1f} Hz "
                f"(need <= {1.0 / (10.0 * f_max):.3g} s)"
            )

    @property
    def d(self) -> float:
        if self.damping is not None:
            return self.damping
        return 2.0 * DEFAULT_DAMPING_RATIO * math.sqrt(self.spring.stiffness_si(1) * self.passive_mass)

    def fastest_corner_hz(self) -> float:
        corners = [
            1.0 / (2 * math.pi * self.motor.time_constant),
            1.0 / (2 * math.pi * self.robot.time_constant),
        ]
        if not self.rigid_tool:
            k = self.spring.stiffness_si(2 if isinstance(self.spring, TwoStageSpring) else 1)
            k += self.environment.stiffness
            if self.preload_deflection > 0:
                k += self.stop_stiffness
            corners.append(math.sqrt(k / self.passive_mass) / (2 * math.pi))
        return max(corners)

    def with_(self, **kw) -> "PlantConfig":
        return replace(self, **kw)


class Plant:
    """Fixed-step RK4 integrator for one :class:`PlantConfig`.

    The per-step arithmetic works on plain floats; this is the hot loop of
    every benchmark.
    """

    def __init__(self, config: PlantConfig):
        self.config = config
        c = config
        self._m = c.passive_mass
        self._d = c.d
        self._km, self._tm = c.motor.gain, c.motor.time_constant
        self._kr, self._tr = c.robot.gain, c.robot.time_constant
        self._cenv = c.environment.stiffness
        self._uni = c.environment.unilateral
        s = c.environment.surface
        self._surface = s if callable(s) else (lambda t, _s=float(s): _s)
        self._fs = c.spring.force_si
        self._xt = c.spring.x_t * 1e-3 if isinstance(c.spring, TwoStageSpring) else None
        self._rigid = c.rigid_tool
        self._pre = c.preload_deflection
        self._kstop = c.stop_stiffness
        self._dstop = 2.0 * c.stop_damping_ratio * math.sqrt(c.stop_stiffness * c.passive_mass)

    def forces(self, t, xa, va, xp, vp, xr):
        """(spring force on passive part, stop force, contact force)."""
        pen = xr + xp - self._surface(t)
        fc = 0.0 if (self._uni and pen <= 0.0) else self._cenv * pen
        if self._rigid:
            return 0.0, 0.0, fc
        delta = xa - xp
        fs = self._fs(delta)
        fstop = 0.0
        if self._pre > 0.0:
            gap = self._pre - delta
            if gap > 0.0:
                fstop = min(0.0, -self._kstop * gap - self._dstop * (vp - va))
        return fs, fstop, fc

    def deriv(self, t, y, um, ur):
        xa, va, xp, vp, xr, vr = y
        dvr = (self._kr * ur - vr) / self._tr
        if self._rigid:
            return (0.0, 0.0, 0.0, 0.0, vr, dvr)
        dva = (self._km * um - va) / self._tm
        fs, fstop, fc = self.forces(t, xa, va, xp, vp, xr)
        # base acceleration enters as an inertial load on the passive mass
        ap = (fs + self._d * (va - vp) + fstop - fc) / self._m - dvr
        return (va, dva, vp, ap, vr, dvr)

    def _switching(self, t, y):
        """Signed distances to the force-law kinks; a sign change marks a crossing."""
        xa, _, xp, _, xr, _ = y
        g = [xr + xp - self._surface(t)] if self._uni else []
        if not self._rigid:
            delta = xa - xp
            if self._xt is not None:
                g.append(abs(delta) - self._xt)
            if self._pre > 0.0:
                g.append(self._pre - delta)
        return g

    def _rk4(self, t, y, um, ur, dt):
        f = self.deriv
        k1 = f(t, y, um, ur)
        h2 = 0.5 * dt
        k2 = f(t + h2, [a + h2 * b for a, b in zip(y, k1)], um, ur)
        k3 = f(t + h2, [a + h2 * b for a, b in zip(y, k2)], um, ur)
        k4 = f(t + dt, [a + dt * b for a, b in zip(y, k3)], um, ur)
        s = dt / 6.0
        return tuple(
            a + s * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
        )

    def rk4(self, t, y, um, ur, dt):
        """One RK4 step, split once where a kink in the force law is crossed.

        Stepping straight over a kink drops the method to low order; the
        split point comes from linear interpolation of the switching function.
        """
        y1 = self._rk4(t, y, um, ur, dt)
        g0 = self._switching(t, y)
        g1 = self._switching(t + dt, y1)
        theta = 1.0
        for a, b in zip(g0, g1):
            if (a < 0.0) != (b < 0.0) and a != b:
                theta = min(theta, a / (a - b))
        if 0.0 < theta < 1.0:
            h = theta * dt
            ym = self._rk4(t, y, um, ur, h)
            y1 = self._rk4(t + h, ym, um, ur, dt - h)
        return y1

    def advance(self, t, y, um, ur, nsteps):
        """``nsteps`` RK4 steps with inputs held; returns ``(t, y)``."""
        dt = self.config.dt_sim
        for _ in range(nsteps):
            y = self.rk4(t, y, um, ur, dt)
            t += dt
        for v in y:
            if not (abs(v) < DIVERGENCE_LIMIT):
                raise SimulationDivergence(t)
        return t, y


def plant_derivatives(state: PlantState, config: PlantConfig, u_motor: float = 0.0, u_robot: float = 0.0) -> PlantState:
    """Time derivative of ``state`` (the ``t`` field of the result is 1)."""
    d = Plant(config).deriv(state.t, state.vector, u_motor, u_robot)
    if not all(math.isfinite(v) for v in d):
        raise SimulationDivergence(state.t, "non-finite derivative")
    return PlantState(*d, t=1.0)


def step(state: PlantState, config: PlantConfig, u_motor: float = 0.0, u_robot: float = 0.0, dt: Optional[float] = None) -> PlantState:
    """One classical RK4 step of length ``config.dt_sim``."""
    if dt is not None and not math.isclose(dt, config.dt_sim, rel_tol=1e-12):
        raise ConfigError(f"step dt={dt} differs from dt_sim={config.dt_sim}")
    t, y = Plant(config).advance(state.t, state.vector, u_motor, u_robot, 1)
    return PlantState(*y, t=t)


def linearize(config: PlantConfig, operating_stage: int = 1, in_contact: bool = False) -> dict:
    """LTI blocks ``G_M``, ``G_ARCC``, ``G_env``, ``G_R`` at a spring stage."""
    c = config.spring.stiffness_si(operating_stage)
    c_env = config.environment.stiffness if in_contact else 0.0
    d = config.d
    m = config.passive_mass
    return {
        "G_M": config.motor.tf(),
        "G_ARCC": TransferFunction([d, c], [m, d, c + c_env]),
        "G_env": TransferFunction.gain(config.environment.stiffness),
        "G_R": config.robot.tf(),
    }


def contact_equilibrium(config: PlantConfig, force: float, surface: float = 0.0, x_p: float = 0.0) -> PlantState:
    """Static state pressing on a surface at ``surface`` with ``force`` N.

    The passive part sits at ``x_p`` in the housing (ignored for a rigid tool).
    """
    pen = force / config.environment.stiffness
    if config.rigid_tool:
        return PlantState(x_r=surface + pen)
    defl = config.spring.deflection_for(force)
    if config.preload_deflection > defl:
        defl = config.preload_deflection
    return PlantState(x_a=x_p + defl, x_p=x_p, x_r=surface + pen - x_p)


def mechanical_energy(state: PlantState, config: PlantConfig) -> float:
    """Passive kinetic + spring + contact energy (robot/active treated as fixed)."""
    e = 0.5 * config.passive_mass * state.v_p**2 + config.spring.energy_si(state.x_a - state.x_p)
    pen = state.x_r + state.x_p - config.environment.surface_at(state.t)
    if pen > 0 or not config.environment.unilateral:
        e += 0.5 * config.environment.stiffness * pen * pen
    return e


TRAJECTORY_COLUMNS = ("t", "x_a", "v_a", "x_p", "v_p", "x_r", "v_r", "f_spring", "f_contact")


class Trajectory:
    """Sampled simulation record with the CSV export columns."""

    def __init__(self):
        self._rows = []

    def append(self, t, y, f_spring, f_contact):
        self._rows.append((t, *y, f_spring, f_contact))

    def __len__(self):
        return len(self._rows)

    def as_array(self) -> np.ndarray:
        return np.asarray(self._rows, dtype=float).reshape(-1, len(TRAJECTORY_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        return self.as_array()[:, TRAJECTORY_COLUMNS.index(name)]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            for row in self._rows:
                w.writerow([f"{v:.9g}" for v in row])


def simulate_open_loop(config: PlantConfig, state: PlantState, duration: float, u_motor=0.0, u_robot=0.0, record_every: int = 1) -> tuple[PlantState, Trajectory]:
    """Integrate with constant (or time-function) inputs; handy for checks."""
    plant = Plant(config)
    n = int(round(duration / config.dt_sim))
    t, y = state.t, state.vector
    traj = Trajectory()
    for k in range(n):
        um = u_motor(t) if callable(u_motor) else u_motor
        ur = u_robot(t) if callable(u_robot) else u_robot
        if k % record_every == 0:
            fs, _, fc = plant.forces(t, y[0], y[1], y[2], y[3], y[4])
            traj.append(t, y, fs, fc)
        t, y = plant.advance(t, y, um, ur, 1)
    fs, _, fc = plant.forces(t, y[0], y[1], y[2], y[3], y[4])
    traj.append(t, y, fs, fc)
    return PlantState(*y, t=t), traj
