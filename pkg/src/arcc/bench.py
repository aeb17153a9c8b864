"""
Benchmark scenarios: approach-to-contact on a rail and wave-contour following,
run for the four controller configurations and aggregated into tables.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .control import Configuration, HybridController, HybridLoopConfig, Measurement
from .plant import (
    Plant,
    PlantConfig,
    PlantState,
    SimulationDivergence,
    Trajectory,
    contact_equilibrium,
)


class ScenarioKind(str, enum.Enum):
    CONTACT = "contact-establishment"
    CONTOUR = "contour-following"


@dataclass(frozen=True)
class ScenarioSpec:
    """One benchmark definition.  Lengths in m, speeds in m/s, forces in N."""

    kind: ScenarioKind
    configuration: Configuration
    force_setpoint: float = 5.0
    approach_offset: float = 0.015
    amplitude: float = 0.0025
    wavelength: float = 0.065
    length: float = 0.13
    speed_initial: float = 0.005
    speed_increment: float = 0.005
    speed_max: float = 0.5
    repetitions: int = 20
    seed: int = 0
    force_noise: float = 0.05
    deflection_noise: float = 30e-6
    preload: bool = False
    timeout: float = 60.0
    settle_band: float = 0.02
    settle_window: float = 0.1
    loss_window: float = 0.02

    def __post_init__(self):
        object.__setattr__(self, "kind", ScenarioKind(self.kind))
        object.__setattr__(self, "configuration", Configuration(self.configuration))
        if not self.force_setpoint > 0:
            raise ValueError("force setpoint must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.kind is ScenarioKind.CONTACT and self.approach_offset < 0:
            raise ValueError("approach offset must be non-negative")
        if self.kind is ScenarioKind.CONTOUR:
            if self.amplitude < 0 or not (self.wavelength > 0 and self.length > 0):
                raise ValueError("contour geometry must be positive")
            if not (self.speed_initial > 0 and self.speed_increment > 0):
                raise ValueError("speed schedule must be positive")


@dataclass
class SpeedPoint:
    speed: float
    ferr_mean: float
    ferr_std: float
    contact_lost: bool


@dataclass
class RunResult:
    configuration: Configuration
    scenario: ScenarioKind
    run: int = 0
    duration: float = math.nan
    overshoot: float = math.nan
    overshoot_raw: float = math.nan
    ferr_mean: float = math.nan
    ferr_std: float = math.nan
    vmax: float = math.nan
    contact_lost: bool = False
    timed_out: bool = False
    failed: Optional[str] = None
    series: list = field(default_factory=list)
    trajectory: Optional[Trajectory] = field(default=None, repr=False)


class _Noise:
    """Pre-drawn Gaussian samples served one at a time."""

    def __init__(self, rng: np.random.Generator, sigma: float, chunk: int = 4096):
        self.rng, self.sigma, self.chunk = rng, sigma, chunk
        self._buf, self._i = None, chunk

    def __call__(self) -> float:
        if self.sigma == 0.0:
            return 0.0
        if self._i >= self.chunk:
            self._buf = self.rng.normal(0.0, self.sigma, self.chunk).tolist()
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return v


def _rngs(spec: ScenarioSpec, run: int):
    rng = np.random.default_rng([spec.seed, run])
    return _Noise(rng, spec.force_noise), _Noise(rng, spec.deflection_noise)


def preload_setup(config: PlantConfig, force: float) -> tuple[PlantConfig, float]:
    """Stop position that rests the spring at ``force`` N; returns (config, resting deflection)."""
    rest = config.spring.deflection_for(force)
    stop = rest + force / config.stop_stiffness
    return config.with_(preload_deflection=stop), rest


class _Loop:
    """Shared closed-loop driver: plant at dt_sim, controller at dt_arcc."""

    def __init__(self, plant_cfg: PlantConfig, loop: HybridLoopConfig, spec: ScenarioSpec, run: int):
        self.plant = Plant(plant_cfg)
        self.loop = loop.with_setpoint(spec.force_setpoint)
        self.ctrl = HybridController(self.loop)
        self.nsub = int(round(self.loop.dt_arcc / plant_cfg.dt_sim))
        if self.nsub < 1 or abs(self.nsub * plant_cfg.dt_sim - self.loop.dt_arcc) > 1e-12:
            raise ValueError("controller period must be an integer multiple of dt_sim")
        self.fnoise, self.xnoise = _rngs(spec, run)

    def tick(self, t, y, planner=0.0):
        fs, _, fc = self.plant.forces(t, y[0], y[1], y[2], y[3], y[4])
        m = Measurement(fc + self.fnoise(), y[2] + self.xnoise(), y[0])
        um, ur = self.ctrl.update(m, planner)
        t, y = self.plant.advance(t, y, um, ur, self.nsub)
        return t, y, fs, fc


def run_contact_establishment(
    spec: ScenarioSpec,
    plant: PlantConfig,
    loop: HybridLoopConfig,
    run: int = 0,
    record: bool = False,
) -> RunResult:
    """Approach a rail placed ``approach_offset`` ahead and settle at the setpoint.

    Duration runs from activation until the contact force has stayed inside
    the settle band for the settle window (the window is included).
    """
    if spec.kind is not ScenarioKind.CONTACT:
        raise ValueError("scenario kind must be contact-establishment")
    F = spec.force_setpoint
    cfg = plant.with_(environment=replace(plant.environment, surface=spec.approach_offset))
    y0 = PlantState()
    preload = 0.0
    if spec.preload and not cfg.rigid_tool:
        cfg, rest = preload_setup(cfg, F)
        y0 = PlantState(x_a=rest)
        preload = F
    if spec.approach_offset == 0.0:
        # degenerate start: already pressing with the setpoint force
        y0 = contact_equilibrium(cfg, F, 0.0)
    drv = _Loop(cfg, loop, spec, run)
    res = RunResult(spec.configuration, spec.kind, run)
    traj = Trajectory() if record else None
    band = spec.settle_band * F
    t, y = 0.0, y0.vector
    in_band_since = None
    fmax = 0.0
    dt = drv.loop.dt_arcc
    n_max = int(round(spec.timeout / dt))
    try:
        for _ in range(n_max):
            t0, y_prev = t, y
            t, y, fs, fc = drv.tick(t, y)
            if traj is not None:
                traj.append(t0, y_prev, fs, fc)
            fmax = max(fmax, fc)
            if abs(fc - F) <= band:
                if in_band_since is None:
                    in_band_since = t0
                if t0 - in_band_since >= spec.settle_window - 1e-12:
                    res.duration = t0
                    break
            else:
                in_band_since = None
        else:
            res.timed_out = True
            res.duration = spec.timeout
    except SimulationDivergence as exc:
        res.failed = str(exc)
    res.overshoot_raw = max(0.0, fmax - F)
    res.overshoot = max(0.0, res.overshoot_raw - preload)
    res.trajectory = traj
    return res


def contour_surface(z0: float, amplitude: float, wavelength: float, speed: float):
    """Surface position under the tool: height A sin(2 pi s / lambda), s = v t.

    Rising height moves the surface towards the tool (negative direction).
    """
    k = 2.0 * math.pi * speed / wavelength

    def surface(t, _z0=z0, _a=amplitude, _k=k):
        return _z0 - _a * math.sin(_k * t)

    return surface


def receding_excess(speed: float, capacity: float, amplitude: float, wavelength: float) -> float:
    """Largest distance (m) the sinusoidal surface gains on a tool limited to ``capacity``.

    Integral of ``(r(t) - capacity)_+`` over one receding stretch, where
    ``r = 2 pi A v / lambda * cos(.)`` is the surface recession rate.
    """
    peak = 2.0 * math.pi * amplitude * speed / wavelength
    if peak <= capacity:
        return 0.0
    theta = math.acos(capacity / peak)
    return 2.0 * amplitude * math.sin(theta) - wavelength * capacity * theta / (math.pi * speed)


def kinematic_speed_bound(capacity: float, amplitude: float, wavelength: float, buffer: float = 0.0) -> float:
    """Traversal speed (m/s) beyond which contact is necessarily lost.

    With ``buffer=0`` this is the peak-slope condition ``2 pi A v / lambda = capacity``.
    A positive ``buffer`` (stored compliance, m) lets the tool fall behind the
    surface by that much before the force reaches zero.
    """
    if capacity <= 0:
        raise ValueError("capacity must be positive")
    if amplitude <= 0:
        return math.inf
    v0 = capacity * wavelength / (2.0 * math.pi * amplitude)
    # rounding can leave a tiny positive excess at v0 itself
    if buffer <= 0 or receding_excess(v0, capacity, amplitude, wavelength) >= buffer:
        return v0
    if buffer >= 2.0 * amplitude:
        return math.inf
    # excess grows monotonically with speed towards 2A
    from scipy.optimize import brentq

    hi = 2.0 * v0
    while receding_excess(hi, capacity, amplitude, wavelength) < buffer:
        hi *= 2.0
    return brentq(lambda v: receding_excess(v, capacity, amplitude, wavelength) - buffer, v0, hi, xtol=1e-12)


def compliance_buffer(plant: PlantConfig, force: float) -> float:
    """Slack between pressing at ``force`` and losing contact (m).

    Contact penetration plus the spring deflection, counted twice because the
    released passive part can swing to the mirrored deflection.
    """
    buf = force / plant.environment.stiffness if plant.environment.stiffness > 0 else 0.0
    if not plant.rigid_tool:
        buf += 2.0 * plant.spring.deflection_for(force)
    return buf


def velocity_capacity(loop: HybridLoopConfig, plant: PlantConfig, force: float) -> float:
    """Largest tool speed towards a receding surface once the force has dropped to zero."""
    if loop.configuration.uses_arcc:
        v_a = min(loop.arcc.compliance_gain * force, loop.arcc_velocity_limit) * plant.motor.gain
        v_r = min(loop.pc_limit, loop.robot_velocity_limit) * plant.robot.gain
        return v_a + v_r
    return min(loop.robot.compliance_gain * force, loop.robot_velocity_limit) * plant.robot.gain


def _traverse(spec: ScenarioSpec, plant: PlantConfig, loop: HybridLoopConfig, speed: float, run: int):
    F = spec.force_setpoint
    z0 = 0.0
    surf = contour_surface(z0, spec.amplitude, spec.wavelength, speed)
    cfg = plant.with_(environment=replace(plant.environment, surface=surf))
    y = contact_equilibrium(cfg, F, z0).vector
    drv = _Loop(cfg, loop, spec, run)
    dt = drv.loop.dt_arcc
    n = int(round(spec.length / speed / dt))
    loss_n = int(round(spec.loss_window / dt))
    errs = []
    zero_run = 0
    lost = False
    t = 0.0
    for _ in range(n):
        t, y, _, fc = drv.tick(t, y)
        errs.append(abs(fc - F))
        if fc <= 0.0:
            zero_run += 1
            if zero_run > loss_n:
                lost = True
                break
        else:
            zero_run = 0
    e = np.asarray(errs)
    return SpeedPoint(speed, float(e.mean()), float(e.std()), lost)


def run_contour_following(
    spec: ScenarioSpec,
    plant: PlantConfig,
    loop: HybridLoopConfig,
    run: int = 0,
) -> RunResult:
    """Ramp the traversal speed until contact is lost for longer than the loss window."""
    if spec.kind is not ScenarioKind.CONTOUR:
        raise ValueError("scenario kind must be contour-following")
    res = RunResult(spec.configuration, spec.kind, run)
    v = spec.speed_initial
    vmax = 0.0
    try:
        while v <= spec.speed_max + 1e-12:
            pt = _traverse(spec, plant, loop, v, run)
            res.series.append(pt)
            if pt.contact_lost:
                res.contact_lost = True
                break
            vmax = v
            v = round(v + spec.speed_increment, 12)
    except SimulationDivergence as exc:
        res.failed = str(exc)
    res.vmax = vmax
    ok = [p for p in res.series if not p.contact_lost] or res.series[:1]
    if ok:
        res.ferr_mean = float(np.mean([p.ferr_mean for p in ok]))
        res.ferr_std = float(np.mean([p.ferr_std for p in ok]))
    if vmax == 0.0:
        res.failed = res.failed or "contact lost at the initial speed"
    return res


def run_scenario(spec: ScenarioSpec, plant: PlantConfig, loop: HybridLoopConfig) -> list[RunResult]:
    runner = run_contact_establishment if spec.kind is ScenarioKind.CONTACT else run_contour_following
    return [runner(spec, plant, loop, run=i) for i in range(spec.repetitions)]


@dataclass
class SummaryRow:
    configuration: Configuration
    scenario: ScenarioKind
    n: int
    duration_mean: float
    duration_std: float
    overshoot_mean: float
    overshoot_std: float
    overshoot_max: float
    ferr_mean: float
    ferr_std: float
    vmax_mean: float
    failures: int


def _mean_std(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1))


def aggregate(results: list[RunResult]) -> list[SummaryRow]:
    """Per (configuration, scenario) mean and sample standard deviation."""
    if not results:
        raise ValueError("no results to aggregate")
    groups: dict = {}
    for r in results:
        groups.setdefault((r.configuration, r.scenario), []).append(r)
    rows = []
    for (cfg, kind), rs in groups.items():
        dm, ds = _mean_std(r.duration for r in rs)
        om, os_ = _mean_std(r.overshoot for r in rs)
        fm, _ = _mean_std(r.ferr_mean for r in rs)
        fs, _ = _mean_std(r.ferr_std for r in rs)
        vm, _ = _mean_std(r.vmax for r in rs)
        omax = max((r.overshoot for r in rs if not math.isnan(r.overshoot)), default=math.nan)
        fails = sum(1 for r in rs if r.failed or r.timed_out)
        rows.append(SummaryRow(cfg, kind, len(rs), dm, ds, om, os_, omax, fm, fs, vm, fails))
    return rows


RESULTS_HEADER = ["config", "scenario", "run", "duration_s", "overshoot_n", "ferr_mean_n", "ferr_std_n", "vmax_mm_s", "contact_lost"]
SERIES_HEADER = ["config", "speed_mm_s", "ferr_mean_n", "ferr_std_n"]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(v)
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.9g}"


@dataclass
class Report:
    results: list
    summary: list
    failures: list = field(default_factory=list)

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "results": out / "results.csv",
            "series": out / "contour_series.csv",
            "markdown": out / "report.md",
        }
        with open(paths["results"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESULTS_HEADER)
            for r in self.results:
                w.writerow([
                    r.configuration.value, r.scenario.value, r.run,
                    _fmt(r.duration), _fmt(r.overshoot), _fmt(r.ferr_mean), _fmt(r.ferr_std),
                    _fmt(r.vmax * 1e3 if not math.isnan(r.vmax) else math.nan), _fmt(r.contact_lost),
                ])
        with open(paths["series"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_HEADER)
            for r in self.results:
                if r.scenario is not ScenarioKind.CONTOUR:
                    continue
                for p in r.series:
                    if p.contact_lost:
                        continue
                    w.writerow([r.configuration.value, _fmt(p.speed * 1e3), _fmt(p.ferr_mean), _fmt(p.ferr_std)])
        paths["markdown"].write_text(self.markdown())
        return paths

    def markdown(self) -> str:
        lines = []
        contact = [s for s in self.summary if s.scenario is ScenarioKind.CONTACT]
        contour = [s for s in self.summary if s.scenario is ScenarioKind.CONTOUR]
        if contact:
            lines += [
                "## Contact establishment",
                "",
                "| Configuration | Force max overshoot [N] | Duration mean [s] | Duration std.dev. [s] | runs | failed |",
                "|---|---|---|---|---|---|",
            ]
            for s in contact:
                lines.append(
                    f"| {s.configuration.label} | {s.overshoot_max:.3f} | {s.duration_mean:.2f} | {s.duration_std:.2f} | {s.n} | {s.failures} |"
                )
            lines.append("")
        if contour:
            lines += [
                "## Contour following",
                "",
                "| Configuration | Max contact-keeping speed [mm/s] | Abs. force error mean [N] | std.dev. [N] |",
                "|---|---|---|---|",
            ]
            for s in contour:
                lines.append(
                    f"| {s.configuration.label} | {s.vmax_mean * 1e3:.1f} | {s.ferr_mean:.3f} | {s.ferr_std:.3f} |"
                )
            lines.append("")
        if self.failures:
            lines += ["## Failures", ""] + [f"- {f}" for f in self.failures] + [""]
        return "\n".join(lines)


def compare_configurations(specs: list[ScenarioSpec], plants: dict, loops: dict) -> Report:
    """Run every spec with the plant and loop registered for its configuration."""
    results, failures = [], []
    for spec in specs:
        cfg = spec.configuration
        if cfg not in plants or cfg not in loops:
            raise KeyError(f"no plant/loop preset for {cfg.value}")
        for r in run_scenario(spec, plants[cfg], loops[cfg]):
            results.append(r)
            if r.failed:
                failures.append(f"{cfg.value} {spec.kind.value} run {r.run}: {r.failed}")
    return Report(results, aggregate(results), failures)
