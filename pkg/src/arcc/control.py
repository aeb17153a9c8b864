"""
Force-control synthesis and the hybrid ARCC/robot loop.

Stiffness control maps force error to a commanded velocity,
``v_des = c_tilde * (F_des - F_act)``.  The ARCC branch drives the active
axis with it while the robot keeps the passive part centred; in the robot
baselines the same law drives the robot directly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .lti import StateSpace, TransferFunction, discretize, to_state_space
from .plant import PlantConfig, linearize


class TuningError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


class UnboundedGainError(RuntimeError):
    """Loop stayed stable up to the search limit."""

    def __init__(self, lower: float, tested_upto: float):
        super().__init__(
            f"loop stable for every gain in [{lower:.3g}, {tested_upto:.3g}]; no finite margin"
        )
        self.lower = lower
        self.tested_upto = tested_upto


# --- cascade tuning -------------------------------------------------------


@dataclass(frozen=True)
class PIGains:
    kp: float
    ti: float

    def __post_init__(self):
        if not (self.kp > 0 and self.ti > 0):
            raise TuningError("PI gains must be positive")

    def tf(self) -> TransferFunction:
        """kp * (1 + 1/(ti s))."""
        return TransferFunction([self.kp * self.ti, self.kp], [self.ti, 0.0])


def tune_pi_magnitude_optimum(plant_gain: float, dominant_T: float, parasitic_T: float) -> PIGains:
    """Magnitude optimum for K / ((T s + 1)(T_sigma s + 1)).

    The integral time cancels the dominant lag; the resulting closed loop
    has damping 1/sqrt(2).
    """
    if not (plant_gain > 0 and dominant_T > parasitic_T > 0):
        raise TuningError("need plant_gain > 0 and dominant_T > parasitic_T > 0")
    return PIGains(kp=dominant_T / (2.0 * plant_gain * parasitic_T), ti=dominant_T)


def tune_pi_symmetric_optimum(plant_gain: float, parasitic_T: float, a: float = 2.0) -> PIGains:
    """Symmetric optimum for the integrating plant K / (s (T_sigma s + 1))."""
    if not (plant_gain > 0 and parasitic_T > 0 and a > 1):
        raise TuningError("need plant_gain > 0, parasitic_T > 0 and a > 1")
    return PIGains(kp=1.0 / (a * plant_gain * parasitic_T), ti=a * a * parasitic_T)


def symmetric_optimum_phase_margin(a: float) -> float:
    """Phase margin in degrees of the symmetric-optimum loop at crossover."""
    return math.degrees(math.atan(a) - math.atan(1.0 / a))


# --- stiffness control ----------------------------------------------------


@dataclass(frozen=True)
class StiffnessController:
    """Velocity command proportional to force error; gain in m/(N s)."""

    compliance_gain: float
    force_setpoint: float = 0.0

    def __post_init__(self):
        if not self.compliance_gain > 0:
            raise ConfigurationError("compliance gain must be positive")

    @property
    def stiffness(self) -> float:
        """c_c = 1 / c_tilde in N s/m."""
        return 1.0 / self.compliance_gain

    def command(self, f_act: float) -> float:
        return self.compliance_gain * (self.force_setpoint - f_act)


def stiffness_command(ctrl: StiffnessController, f_act: float) -> float:
    if not math.isfinite(f_act):
        raise ValueError("measured force must be finite")
    return ctrl.command(f_act)


def apply_safety_reduction(critical_gain: float, factor: float = 0.9) -> float:
    """Operating gain 10 % below the stability margin."""
    if not critical_gain > 0:
        raise ValueError("critical gain must be positive")
    return factor * critical_gain


def position_compensation(x_p_act: float, gain: float, limit: float = math.inf, x_p_des: float = 0.0) -> float:
    """Robot velocity offset that re-centres the passive part.

    With the tool at ``x_r + x_p`` the robot has to move in the direction
    of the passive offset, hence the positive sign.
    """
    v = gain * (x_p_act - x_p_des)
    return min(limit, max(-limit, v))


# --- stability margin -----------------------------------------------------


LoopBuilder = Callable[[float], StateSpace]


def sampled_force_loop(plant: TransferFunction, dt: float, delay_samples: int = 1) -> LoopBuilder:
    """Closed-loop builder for ``u[k] = -g * y[k - delay_samples]``.

    ``plant`` maps commanded velocity to measured force; it is discretized
    with a zero-order hold at ``dt``.  The returned callable gives the
    closed-loop sampled model (input: force setpoint scaled by g, output:
    force) for a gain ``g``.
    """
    pd = discretize(to_state_space(plant), dt)
    n, nd = pd.n, int(delay_samples)
    if nd < 0:
        raise ValueError("delay_samples must be >= 0")
    Ad, Bd, C, D = pd.A, pd.B[:, 0], pd.C[0], pd.D
    if nd == 0 and D != 0.0:
        raise ValueError("algebraic loop: plant has feedthrough and no delay")

    def build(g: float) -> StateSpace:
        N = n + nd
        A = np.zeros((N, N))
        B = np.zeros(N)
        A[:n, :n] = Ad
        if nd == 0:
            A[:n, :n] -= g * np.outer(Bd, C)
            B[:n] = g * Bd
            Cc = np.concatenate([C, np.zeros(nd)])
        else:
            # delay line holds past measurements; last tap feeds the controller
            A[n, :n] = C
            for i in range(1, nd):
                A[n + i, n + i - 1] = 1.0
            A[:n, N - 1] -= g * Bd
            B[:n] = g * Bd
            Cc = np.concatenate([C, np.zeros(nd)])
        return StateSpace(A, B, Cc, 0.0, dt)

    return build


def continuous_force_loop(plant: TransferFunction) -> LoopBuilder:
    """Delay-free continuous closed loop ``plant * g / (1 + plant * g)``."""

    def build(g: float) -> StateSpace:
        return to_state_space((plant * g).feedback(1.0))

    return build


def robot_force_plant(config: PlantConfig) -> TransferFunction:
    """Robot velocity command -> contact force, rigid tool."""
    G = linearize(config, 1, in_contact=True)
    return G["G_R"] * TransferFunction.integrator() * config.environment.stiffness


def rcc_force_plant(config: PlantConfig, stage: int = 1) -> TransferFunction:
    """Robot velocity command -> contact force through the passive compliance."""
    G = linearize(config, stage, in_contact=True)
    return G["G_R"] * TransferFunction.integrator() * G["G_ARCC"] * config.environment.stiffness


def arcc_force_plant(config: PlantConfig, stage: int = 1) -> TransferFunction:
    """Active-axis velocity command -> contact force, robot held still."""
    G = linearize(config, stage, in_contact=True)
    return G["G_M"] * TransferFunction.integrator() * G["G_ARCC"] * config.environment.stiffness


@dataclass(frozen=True)
class MarginResult:
    critical_gain: float
    stable_gain: float
    unstable_gain: float
    iterations: int
    history: tuple = field(default=(), repr=False)

    def operating_gain(self, factor: float = 0.9) -> float:
        return apply_safety_reduction(self.critical_gain, factor)


def _stable(loop: LoopBuilder, g: float) -> bool:
    return loop(g).is_stable()


def find_stability_margin_gain(
    loop: LoopBuilder,
    lower: float = 1e-6,
    rtol: float = 1e-6,
    max_ratio: float = 1e6,
    scan_factor: float = 1.1,
) -> MarginResult:
    """Smallest destabilizing gain, by geometric scan and log-space bisection.

    Raises :class:`UnboundedGainError` when no unstable gain exists up to
    ``max_ratio * lower``.
    """
    if not lower > 0:
        raise ValueError("lower bound must be positive")
    if not _stable(loop, lower):
        raise ValueError(f"loop is not stable at the lower bound {lower:g}")
    lo, hi = lower, None
    g = lower
    # fine geometric scan: stability need not be monotone in the gain
    while g < lower * max_ratio:
        g = min(g * scan_factor, lower * max_ratio)
        if _stable(loop, g):
            lo = g
        else:
            hi = g
            break
    if hi is None:
        raise UnboundedGainError(lower, lower * max_ratio)
    history = [(lo, hi)]
    it = 0
    while (hi - lo) > rtol * lo:
        mid = math.sqrt(lo * hi)
        if _stable(loop, mid):
            lo = mid
        else:
            hi = mid
        it += 1
        history.append((lo, hi))
    return MarginResult(math.sqrt(lo * hi), lo, hi, it, tuple(history))


def time_domain_growth(closed_loop: StateSpace, n_steps: int = 20000, x0=None) -> float:
    """Ratio of late to early output envelope of a sampled closed loop.

    Values above 1 mean the free response grows.
    """
    if closed_loop.dt is None:
        raise ValueError("need a sampled loop")
    A = closed_loop.A
    x = np.ones(closed_loop.n) * 1e-3 if x0 is None else np.asarray(x0, float)
    y = np.empty(n_steps)
    c = closed_loop.C[0]
    for k in range(n_steps):
        y[k] = c @ x
        x = A @ x
    q = max(1, n_steps // 10)
    early = np.max(np.abs(y[:q]))
    late = np.max(np.abs(y[-q:]))
    return float(late / early) if early > 0 else math.inf


# --- hybrid loop ------------------------------------------------------------


class Configuration(str, enum.Enum):
    ROBOT_ONLY = "robot-only"
    PASSIVE_RCC = "robot+passive-RCC"
    ARCC_ONE_STAGE = "ARCC-one-stage"
    ARCC_TWO_STAGE = "ARCC-two-stage"

    @property
    def label(self) -> str:
        return {
            "robot-only": "Robot",
            "robot+passive-RCC": "Robot with RCC",
            "ARCC-one-stage": "ARCC (one-stage)",
            "ARCC-two-stage": "ARCC (two-stage)",
        }[self.value]

    @property
    def uses_arcc(self) -> bool:
        return self in (Configuration.ARCC_ONE_STAGE, Configuration.ARCC_TWO_STAGE)


@dataclass(frozen=True)
class HybridLoopConfig:
    """Controller settings for one of the four benchmark configurations.

    ``arcc`` drives the active axis, ``robot`` is the robot-side stiffness
    controller used when the ARCC is absent or passive.  Rates in seconds.
    """

    configuration: Configuration
    arcc: Optional[StiffnessController] = None
    robot: Optional[StiffnessController] = None
    pc_gain: float = 5.0
    pc_limit: float = 0.25
    x_p_des: float = 0.0
    dt_arcc: float = 1e-3
    dt_robot: float = 4e-3
    arcc_velocity_limit: float = 0.89
    robot_velocity_limit: float = 0.25
    arcc_travel: float = 3e-3

    def __post_init__(self):
        object.__setattr__(self, "configuration", Configuration(self.configuration))
        ratio = self.dt_robot / self.dt_arcc
        if not (self.dt_arcc > 0 and ratio >= 1 and abs(ratio - round(ratio)) < 1e-9):
            raise ConfigurationError("dt_robot must be a positive integer multiple of dt_arcc")

    @property
    def dt_ctrl(self) -> float:
        return self.dt_arcc if self.configuration.uses_arcc else self.dt_robot

    def with_setpoint(self, force: float) -> "HybridLoopConfig":
        from dataclasses import replace

        kw = {}
        if self.arcc is not None:
            kw["arcc"] = replace(self.arcc, force_setpoint=force)
        if self.robot is not None:
            kw["robot"] = replace(self.robot, force_setpoint=force)
        return replace(self, **kw)


class Measurement(NamedTuple):
    force: float
    x_p: float = 0.0
    x_a: float = 0.0


def _clip(v, lim):
    return min(lim, max(-lim, v))


def _arcc_command(loop: HybridLoopConfig, m: Measurement) -> float:
    u = _clip(loop.arcc.command(m.force), loop.arcc_velocity_limit)
    # software travel limit on the active axis
    if (m.x_a >= loop.arcc_travel and u > 0) or (m.x_a <= -loop.arcc_travel and u < 0):
        return 0.0
    return u


def hybrid_step(loop: HybridLoopConfig, measurement: Measurement, planner_twist: float = 0.0) -> tuple[float, float]:
    """Evaluate both branches once: returns ``(u_motor, u_robot)`` in m/s."""
    cfg = loop.configuration
    if cfg.uses_arcc:
        if loop.arcc is None:
            raise ConfigurationError(f"{cfg.value} needs an ARCC stiffness controller")
        u_m = _arcc_command(loop, measurement)
        u_r = planner_twist + position_compensation(measurement.x_p, loop.pc_gain, loop.pc_limit, loop.x_p_des)
        return u_m, _clip(u_r, loop.robot_velocity_limit)
    if loop.robot is None:
        raise ConfigurationError(f"{cfg.value} needs a robot stiffness controller")
    u_r = planner_twist + loop.robot.command(measurement.force)
    return 0.0, _clip(u_r, loop.robot_velocity_limit)


class HybridController:
    """Multi-rate loop with one-sample computational delay per branch.

    Call :meth:`update` every ``loop.dt_arcc`` seconds.  Each branch applies
    the command it computed on its previous tick.
    """

    def __init__(self, loop: HybridLoopConfig):
        self.loop = loop
        self.robot_every = int(round(loop.dt_robot / loop.dt_arcc))
        self._tick = 0
        self._out_m = 0.0
        self._out_r = 0.0
        self._next_m = 0.0
        self._next_r = 0.0

    def update(self, m: Measurement, planner_twist: float = 0.0) -> tuple[float, float]:
        loop = self.loop
        cfg = loop.configuration
        if cfg.uses_arcc:
            self._out_m = self._next_m
            if loop.arcc is None:
                raise ConfigurationError(f"{cfg.value} needs an ARCC stiffness controller")
            self._next_m = _arcc_command(loop, m)
        if self._tick % self.robot_every == 0:
            self._out_r = self._next_r
            _, self._next_r = hybrid_step(loop, m, planner_twist)
        self._tick += 1
        return self._out_m, self._out_r
