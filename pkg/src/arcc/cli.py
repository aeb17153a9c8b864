"""
Command line front end: ``arcc {simulate,identify,tune,bench,bode}``.

Run settings come from built-in defaults, an optional YAML file
(``--config``) and command-line flags, in increasing precedence.  Keys
carry their unit as a suffix (``force_setpoint_n``, ``approach_offset_mm``).
Every run writes ``manifest.json`` next to its outputs.

Exit codes: 0 success, 1 configuration error, 2 runtime failure or
divergence, 3 a ``--check`` criterion failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import presets as P
from .bench import (
    ScenarioKind,
    compare_configurations,
    compliance_buffer,
    kinematic_speed_bound,
    run_contact_establishment,
    velocity_capacity,
    ScenarioSpec,
)
from .control import (
    Configuration,
    UnboundedGainError,
    apply_safety_reduction,
    arcc_force_plant,
    find_stability_margin_gain,
    rcc_force_plant,
    robot_force_plant,
    sampled_force_loop,
    tune_pi_magnitude_optimum,
    tune_pi_symmetric_optimum,
)
from .lti import write_bode_csv
from .plant import ConfigError, Environment, SimulationDivergence
from .sysid import (
    IdentificationError,
    add_output_noise,
    bandwidth_report,
    generate_sweep,
    iv_identify,
    read_signal_csv,
    simulate_zoh,
    write_ident_report,
    write_signal_csv,
)

log = logging.getLogger("arcc")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

COMMANDS = ("simulate", "identify", "tune", "bench", "bode")

# key -> default; the suffix after the last known stem is the unit
SCHEMA = {
    "simulate": {
        "configuration": Configuration.ARCC_TWO_STAGE.value,
        "force_setpoint_n": 5.0,
        "approach_offset_mm": 15.0,
        "contact_stiffness_n_per_m": P.BENCH_CONTACT_STIFFNESS,
        "preload": True,
        "force_noise_n": 0.05,
        "deflection_noise_mm": 0.03,
        "timeout_s": 60.0,
    },
    "identify": {
        "f_lo_hz": 10.0,
        "f_hi_hz": 120.0,
        "duration_s": 10.0,
        "fs_hz": 1000.0,
        "order": 1,
        "zeros": 0,
        "input_csv": None,
        "output_csv": None,
        "snr_db": 20.0,
    },
    "tune": {
        "contact_stiffness_n_per_m": 1e5,
        "dt_robot_s": 4e-3,
        "dt_arcc_s": 1e-3,
        "safety_factor": 0.9,
        "motor_gain": 1.0,
        "current_loop_time_constant_s": 5e-4,
        "mechanical_time_constant_s": 0.02,
    },
    "bench": {
        "repetitions": 20,
        "contour_repetitions": 3,
        "contact_stiffness_n_per_m": P.BENCH_CONTACT_STIFFNESS,
        "robot_gain_m_per_n_s": P.BENCH_ROBOT_GAIN,
        "rcc_gain_m_per_n_s": P.BENCH_RCC_GAIN,
        "arcc_gain_m_per_n_s": P.BENCH_ARCC_GAIN,
        "pc_gain_per_s": P.BENCH_PC_GAIN,
        "pc_limit_m_per_s": P.BENCH_PC_LIMIT,
        "force_noise_n": 0.05,
        "deflection_noise_mm": 0.03,
    },
    "bode": {
        "f_lo_hz": 0.1,
        "f_hi_hz": 1000.0,
        "points_per_decade": 200,
    },
}

DEFAULT_PRESET = {"simulate": "arcc-two-stage", "identify": None, "tune": None, "bench": "rail-and-contour", "bode": "reference-models"}
GLOBAL_KEYS = ("preset", "seed", "out")

UNIT_SUFFIXES = ("n_per_m", "m_per_n_s", "m_per_s", "per_s", "n", "mm", "m", "s", "hz", "kn", "um", "ms", "khz", "db")


class ConfigurationFileError(ValueError):
    pass


def _stem(key: str) -> str:
    for suf in sorted(UNIT_SUFFIXES, key=len, reverse=True):
        if key.endswith("_" + suf):
            return key[: -len(suf) - 1]
    return key


def _presets_for(command: str) -> dict:
    return {
        "simulate": P.PLANT_PRESETS,
        "identify": {**P.IDENT_PRESETS, "self-test": P.Preset("self-test", "round-trip identification of known models", dict)},
        "tune": {},
        "bench": P.BENCH_PRESETS,
        "bode": P.BODE_PRESETS,
    }[command]


def validate_keys(command: str, data: dict) -> None:
    schema = SCHEMA[command]
    for key in data:
        if key in schema or key in GLOBAL_KEYS:
            continue
        stem = _stem(key)
        for known in schema:
            if _stem(known) == stem and known != key:
                raise ConfigurationFileError(f"unit mismatch for '{key}': expected '{known}'")
        raise ConfigurationFileError(f"unknown configuration key '{key}' for command '{command}'")


def _coerce(key: str, value, default):
    if default is None or value is None:
        return value
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            v = float(value)
            if not math.isfinite(v):
                raise ValueError
            return v
    except (TypeError, ValueError):
        raise ConfigurationFileError(f"'{key}' must be a {type(default).__name__}, got {value!r}") from None
    return value


def parse_config(command: str, path=None, flags: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults, file and flags into a fully resolved run configuration."""
    if command not in COMMANDS:
        raise ConfigurationFileError(f"unknown command '{command}'")
    data = {}
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationFileError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigurationFileError(f"cannot parse {path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigurationFileError(f"{path}: top level must be a mapping")
        # allow either a flat mapping or one section per command
        if command in loaded and isinstance(loaded[command], dict):
            section = dict(loaded[command])
            for g in GLOBAL_KEYS:
                if g in loaded:
                    section.setdefault(g, loaded[g])
            loaded = section
        elif any(k in COMMANDS for k in loaded):
            loaded = {k: v for k, v in loaded.items() if k not in COMMANDS}
        data.update(loaded)
    validate_keys(command, data)
    overrides = dict(overrides or {})
    validate_keys(command, overrides)
    for key, val in list((flags or {}).items()) + list(overrides.items()):
        if val is None:
            continue
        if key in data and data[key] != val:
            log.warning("flag value for '%s' (%r) overrides config file value (%r)", key, val, data[key])
        data[key] = val
    cfg = {"command": command}
    for key, default in SCHEMA[command].items():
        cfg[key] = _coerce(key, data.get(key, default), default)
    cfg["preset"] = data.get("preset", DEFAULT_PRESET[command])
    cfg["seed"] = int(data.get("seed", 0))
    cfg["out"] = str(data.get("out", f"arcc-{command}"))
    known = _presets_for(command)
    if cfg["preset"] is not None and known and cfg["preset"] not in known:
        raise ConfigurationFileError(
            f"unknown preset '{cfg['preset']}' for '{command}'; choose from {', '.join(sorted(known))}"
        )
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out: Path, cfg: dict, outputs: list, checks: dict | None = None) -> Path:
    manifest = {
        "version": __version__,
        "command": cfg["command"],
        "seed": cfg["seed"],
        "config_hash": config_hash(cfg),
        "config": cfg,
        "outputs": sorted(str(p) for p in outputs),
    }
    if checks is not None:
        manifest["checks"] = checks
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


# --- commands -----------------------------------------------------------------


def _bench_setup(cfg: dict):
    plants = P.bench_plants(cfg["contact_stiffness_n_per_m"])
    loops = P.bench_loops(
        robot_gain=cfg["robot_gain_m_per_n_s"],
        rcc_gain=cfg["rcc_gain_m_per_n_s"],
        arcc_gain=cfg["arcc_gain_m_per_n_s"],
        pc_gain=cfg["pc_gain_per_s"],
        pc_limit=cfg["pc_limit_m_per_s"],
    )
    return plants, loops


def cmd_simulate(cfg: dict, out: Path, check: bool):
    conf = Configuration(cfg["configuration"])
    plant = P.PLANT_PRESETS[cfg["preset"]].build() if cfg["preset"] else P.bench_plants()[conf]
    if conf is Configuration.ROBOT_ONLY:
        plant = plant.with_(rigid_tool=True)
    elif plant.rigid_tool:
        raise ConfigurationFileError(f"preset '{cfg['preset']}' has no compliant element for {conf.value}")
    plant = plant.with_(environment=Environment(stiffness=cfg["contact_stiffness_n_per_m"]))
    loop = P.bench_loops()[conf]
    spec = ScenarioSpec(
        ScenarioKind.CONTACT, conf,
        force_setpoint=cfg["force_setpoint_n"],
        approach_offset=cfg["approach_offset_mm"] * 1e-3,
        seed=cfg["seed"], preload=cfg["preload"] and conf.uses_arcc,
        force_noise=cfg["force_noise_n"], deflection_noise=cfg["deflection_noise_mm"] * 1e-3,
        timeout=cfg["timeout_s"],
    )
    res = run_contact_establishment(spec, plant, loop, record=True)
    if res.failed:
        raise SimulationDivergence(float("nan"), res.failed)
    traj = out / "trajectory.csv"
    res.trajectory.write_csv(traj)
    summary = out / "summary.json"
    summary.write_text(json.dumps({
        "configuration": conf.value,
        "duration_s": res.duration,
        "overshoot_n": res.overshoot,
        "overshoot_raw_n": res.overshoot_raw,
        "timed_out": res.timed_out,
    }, indent=2) + "\n")
    checks = {"settled": not res.timed_out}
    return [traj, summary], checks


def _self_test_cases():
    m = P.reference_models()
    return [
        ("motor", P.plant_arcc_two_stage().motor.tf(), 1, 0),
        ("robot", m["robot"], 1, 0),
        ("arcc-no-payload", m["arcc-no-payload"], 2, 1),
    ]


def cmd_identify(cfg: dict, out: Path, check: bool):
    outputs, checks = [], {}
    if cfg["input_csv"] or cfg["output_csv"]:
        if not (cfg["input_csv"] and cfg["output_csv"]):
            raise ConfigurationFileError("identify needs both input_csv and output_csv")
        u = read_signal_csv(cfg["input_csv"])
        y = read_signal_csv(cfg["output_csv"])
        model = iv_identify(u, y, cfg["order"], cfg["zeros"])
        path = out / "ident_report.json"
        write_ident_report(model, path)
        return [path], {"converged": model.converged}
    if cfg["preset"] not in ("self-test", "sweep-10-120", None):
        raise ConfigurationFileError(f"unknown identify preset {cfg['preset']}")
    u = generate_sweep(cfg["f_lo_hz"], cfg["f_hi_hz"], cfg["duration_s"], cfg["fs_hz"], unit="m/s")
    write_signal_csv(u, out / "input.csv")
    outputs.append(out / "input.csv")
    rng = np.random.default_rng(cfg["seed"])
    for name, tf, order, zeros in _self_test_cases():
        y = simulate_zoh(tf, u)
        yn = add_output_noise(y, cfg["snr_db"], rng)
        write_signal_csv(yn, out / f"output_{name}.csv")
        model = iv_identify(u, yn, order, zeros)
        path = out / f"ident_{name}.json"
        rep = model.report()
        true = tf.den / tf.den[-1]
        est = model.tf.den / model.tf.den[-1]
        rep["true_denominator"] = [float(v) for v in tf.den]
        rep["max_rel_denominator_error"] = float(np.max(np.abs(est - true) / np.abs(true)))
        path.write_text(json.dumps(rep, indent=2) + "\n")
        outputs += [out / f"output_{name}.csv", path]
        checks[name] = rep["max_rel_denominator_error"] < 0.05
    return outputs, checks


def cmd_tune(cfg: dict, out: Path, check: bool):
    env = Environment(stiffness=cfg["contact_stiffness_n_per_m"])
    plants = {c: p.with_(environment=env) for c, p in P.bench_plants().items()}
    rows = {}
    for conf, plant in plants.items():
        if conf is Configuration.ROBOT_ONLY:
            tf, dt = robot_force_plant(plant), cfg["dt_robot_s"]
        elif conf is Configuration.PASSIVE_RCC:
            tf, dt = rcc_force_plant(plant), cfg["dt_robot_s"]
        else:
            tf, dt = arcc_force_plant(plant), cfg["dt_arcc_s"]
        try:
            m = find_stability_margin_gain(sampled_force_loop(tf, dt))
            rows[conf.value] = {
                "critical_gain_m_per_n_s": m.critical_gain,
                "operating_gain_m_per_n_s": apply_safety_reduction(m.critical_gain, cfg["safety_factor"]),
                "sample_time_s": dt,
            }
        except UnboundedGainError as exc:
            rows[conf.value] = {"unbounded": str(exc), "sample_time_s": dt}
    mo = tune_pi_magnitude_optimum(cfg["motor_gain"], cfg["mechanical_time_constant_s"], cfg["current_loop_time_constant_s"])
    so = tune_pi_symmetric_optimum(cfg["motor_gain"], cfg["current_loop_time_constant_s"])
    result = {
        "stability_margins": rows,
        "motor_cascade": {
            "magnitude_optimum": {"kp": mo.kp, "ti_s": mo.ti},
            "symmetric_optimum": {"kp": so.kp, "ti_s": so.ti},
        },
    }
    path = out / "tune.json"
    path.write_text(json.dumps(result, indent=2) + "\n")
    r = rows[Configuration.ROBOT_ONLY.value].get("critical_gain_m_per_n_s")
    a = rows[Configuration.ARCC_ONE_STAGE.value].get("critical_gain_m_per_n_s")
    checks = {"arcc_margin_exceeds_robot_5x": bool(r and a and a / r >= 5.0)}
    return [path], checks


def contact_checks(summary) -> dict:
    by = {s.configuration: s for s in summary if s.scenario is ScenarioKind.CONTACT}
    if len(by) < 4:
        return {}
    robot = by[Configuration.ROBOT_ONLY]
    arcc = [by[Configuration.ARCC_ONE_STAGE], by[Configuration.ARCC_TWO_STAGE]]
    return {
        "arcc_at_least_2x_faster": all(robot.duration_mean >= 2.0 * a.duration_mean for a in arcc),
        "robot_only_slowest": all(robot.duration_mean >= s.duration_mean for s in by.values()),
        "robot_overshoot_below_arcc": all(robot.overshoot_max < a.overshoot_max for a in arcc),
        "no_failures": all(s.failures == 0 for s in by.values()),
    }


def contour_checks(report, plants, loops, force: float = 10.0) -> dict:
    checks = {}
    by_amp: dict = {}
    for spec_amp, r in report:
        by_amp.setdefault(spec_amp, []).extend(r.results)
    for amp, results in by_amp.items():
        v = {}
        for r in results:
            v.setdefault(r.configuration, []).append(r.vmax)
        vr = float(np.mean(v[Configuration.ROBOT_ONLY]))
        for c in (Configuration.ARCC_ONE_STAGE, Configuration.ARCC_TWO_STAGE):
            ratio = float(np.mean(v[c])) / vr if vr > 0 else math.inf
            checks[f"ratio_{c.value}_A{amp * 1e3:g}mm_in_2_6"] = 2.0 <= ratio <= 6.0
        ok = True
        for r in results:
            cap = velocity_capacity(loops[r.configuration], plants[r.configuration], force)
            bound = kinematic_speed_bound(cap, amp, P.CONTOUR_WAVELENGTH, compliance_buffer(plants[r.configuration], force))
            ok &= r.vmax <= bound
        checks[f"speed_bound_A{amp * 1e3:g}mm"] = bool(ok)
    return checks


def cmd_bench(cfg: dict, out: Path, check: bool):
    plants, loops = _bench_setup(cfg)
    noise = dict(force_noise=cfg["force_noise_n"], deflection_noise=cfg["deflection_noise_mm"] * 1e-3)
    parts, checks = [], {}
    md = [f"# Benchmark ({cfg['preset']})", ""]
    all_results, outputs = [], []
    if cfg["preset"] in ("rail-and-contour", "contact"):
        rep = compare_configurations(P.contact_specs(cfg["repetitions"], cfg["seed"], **noise), plants, loops)
        all_results += rep.results
        md.append(rep.markdown())
        checks.update(contact_checks(rep.summary))
        parts.append(rep)
    contour_reports = []
    if cfg["preset"] in ("rail-and-contour", "contour"):
        for amp in P.CONTOUR_AMPLITUDES:
            rep = compare_configurations(P.contour_specs(amp, cfg["contour_repetitions"], cfg["seed"], **noise), plants, loops)
            contour_reports.append((amp, rep))
            all_results += rep.results
            md.append(rep.markdown().replace("## Contour following", f"## Contour following, amplitude {amp * 1e3:g} mm"))
        checks.update(contour_checks(contour_reports, plants, loops))
    from .bench import Report, aggregate

    combined = Report(all_results, aggregate(all_results), [f for _, r in contour_reports for f in r.failures] + [f for r in parts for f in r.failures])
    paths = combined.write(out)
    paths["markdown"].write_text("\n".join(md) + "\n")
    outputs += list(paths.values())
    return outputs, checks


def cmd_bode(cfg: dict, out: Path, check: bool):
    models = P.BODE_PRESETS[cfg["preset"]].build()
    outputs = []
    for name, tf in models.items():
        path = out / f"bode_{name}.csv"
        write_bode_csv(path, tf, cfg["f_lo_hz"], cfg["f_hi_hz"], cfg["points_per_decade"])
        outputs.append(path)
    rep = bandwidth_report(list(models.values()), list(models))
    md = out / "bandwidth.md"
    md.write_text(rep.markdown())
    outputs.append(md)
    checks = {}
    if "robot" in models:
        checks = {
            "ratio_no_payload_31.06": abs(rep.ratio("arcc-no-payload", "robot") / 31.06 - 1) < 0.005,
            "ratio_payload_9.22": abs(rep.ratio("arcc-1.5kg", "robot") / 9.22 - 1) < 0.005,
        }
    return outputs, checks


HANDLERS = {"simulate": cmd_simulate, "identify": cmd_identify, "tune": cmd_tune, "bench": cmd_bench, "bode": cmd_bode}


def _preset_epilog() -> str:
    lines = ["presets:"]
    for group, table in P.all_presets().items():
        for name, p in table.items():
            lines.append(f"  {group:9s} {name:22s} {p.provenance}")
    lines.append(f"  {'identify':9s} {'self-test':22s} round-trip identification of known models")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    epilog = _preset_epilog()
    parser = argparse.ArgumentParser(
        prog="arcc",
        description="Active compliance device: simulation, identification, tuning and benchmarks.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--preset", help="named preset (see list below)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="noise seed")
        p.add_argument("--check", action="store_true", help="exit 3 if any built-in check fails")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "identify":
            p.add_argument("--self-test", action="store_true", help="identify known models from simulated sweeps")
    return parser


def _parse_sets(items) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigurationFileError(f"--set expects KEY=VALUE, got '{item}'")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    flags = {"preset": args.preset, "out": args.out, "seed": args.seed}
    if getattr(args, "self_test", False):
        flags["preset"] = "self-test"
    try:
        cfg = parse_config(args.command, args.config, flags, _parse_sets(args.set))
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigurationFileError, ConfigError, OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        outputs, checks = HANDLERS[args.command](cfg, out, args.check)
    except (ConfigurationFileError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationDivergence, IdentificationError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    write_manifest(out, cfg, outputs, checks)
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"wrote {len(outputs) + 1} files to {out}")
    if args.check and not all(checks.values()):
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
