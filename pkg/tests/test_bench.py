import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from arcc.bench import (
    RESULTS_HEADER,
    SERIES_HEADER,
    RunResult,
    ScenarioKind,
    ScenarioSpec,
    aggregate,
    compare_configurations,
    compliance_buffer,
    contour_surface,
    kinematic_speed_bound,
    receding_excess,
    run_contact_establishment,
    run_contour_following,
    run_scenario,
    velocity_capacity,
)
from arcc.control import Configuration, HybridLoopConfig, StiffnessController
from arcc.presets import bench_loops, bench_plants, contact_specs, contour_specs

PLANTS = bench_plants()
LOOPS = bench_loops()
C = Configuration


def contact(config, **kw):
    spec = next(s for s in contact_specs(1) if s.configuration is config)
    return replace(spec, **kw)


def contour(config, amplitude, **kw):
    spec = next(s for s in contour_specs(amplitude, 1) if s.configuration is config)
    return replace(spec, **kw)


# contact establishment


def test_contact_deterministic():
    spec = contact(C.ARCC_TWO_STAGE)
    a = run_contact_establishment(spec, PLANTS[spec.configuration], LOOPS[spec.configuration], run=3)
    b = run_contact_establishment(spec, PLANTS[spec.configuration], LOOPS[spec.configuration], run=3)
    assert (a.duration, a.overshoot, a.overshoot_raw) == (b.duration, b.overshoot, b.overshoot_raw)


def test_contact_runs_differ_by_noise_seed():
    spec = contact(C.ARCC_ONE_STAGE)
    a = run_contact_establishment(spec, PLANTS[spec.configuration], LOOPS[spec.configuration], run=0)
    b = run_contact_establishment(spec, PLANTS[spec.configuration], LOOPS[spec.configuration], run=1)
    assert a.duration != b.duration or a.overshoot != b.overshoot


@pytest.mark.parametrize("config", list(Configuration))
def test_zero_offset_settles_in_one_window(config):
    spec = contact(config, approach_offset=0.0, force_noise=0.0, deflection_noise=0.0)
    res = run_contact_establishment(spec, PLANTS[config], LOOPS[config])
    assert res.duration == pytest.approx(spec.settle_window, abs=2e-3)


def test_quasi_static_approach_has_no_overshoot():
    loop = HybridLoopConfig(C.ROBOT_ONLY, robot=StiffnessController(1e-4))
    spec = contact(C.ROBOT_ONLY, approach_offset=1e-3, force_noise=0.0, deflection_noise=0.0)
    res = run_contact_establishment(spec, PLANTS[C.ROBOT_ONLY], loop)
    assert res.overshoot == 0.0
    assert not res.timed_out


def test_contact_timeout_flagged():
    loop = HybridLoopConfig(C.ROBOT_ONLY, robot=StiffnessController(1e-6))
    spec = contact(C.ROBOT_ONLY, timeout=0.5)
    res = run_contact_establishment(spec, PLANTS[C.ROBOT_ONLY], loop)
    assert res.timed_out
    assert res.duration == 0.5


def test_preload_subtracted_from_overshoot():
    spec = contact(C.ARCC_TWO_STAGE)
    res = run_contact_establishment(spec, PLANTS[C.ARCC_TWO_STAGE], LOOPS[C.ARCC_TWO_STAGE])
    assert res.overshoot == pytest.approx(max(0.0, res.overshoot_raw - spec.force_setpoint))


def test_contact_trajectory_recorded():
    spec = contact(C.ARCC_ONE_STAGE, approach_offset=0.0)
    res = run_contact_establishment(spec, PLANTS[C.ARCC_ONE_STAGE], LOOPS[C.ARCC_ONE_STAGE], record=True)
    assert len(res.trajectory) > 0
    assert np.all(res.trajectory.column("f_contact") >= 0.0)


def test_wrong_kind_rejected():
    with pytest.raises(ValueError):
        run_contact_establishment(contour(C.ROBOT_ONLY, 0.0025), PLANTS[C.ROBOT_ONLY], LOOPS[C.ROBOT_ONLY])


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(ScenarioKind.CONTACT, C.ROBOT_ONLY, force_setpoint=0.0)
    with pytest.raises(ValueError):
        ScenarioSpec(ScenarioKind.CONTACT, C.ROBOT_ONLY, repetitions=0)


def test_noise_mean_within_clt_bound():
    config = C.ARCC_TWO_STAGE
    quiet = run_contact_establishment(
        contact(config, force_noise=0.0, deflection_noise=0.0), PLANTS[config], LOOPS[config]
    )
    durations = [r.duration for r in run_scenario(contact(config, repetitions=20), PLANTS[config], LOOPS[config])]
    sigma = np.std(durations, ddof=1)
    assert abs(np.mean(durations) - quiet.duration) <= 3 * max(sigma, 1e-3) / math.sqrt(20)


# contour following


def test_surface_profile():
    surf = contour_surface(0.0, 0.01, 0.065, 0.065)
    assert surf(0.0) == 0.0
    assert surf(0.25) == pytest.approx(-0.01)


def test_flat_contour_never_loses_contact():
    spec = contour(C.ARCC_ONE_STAGE, 0.0, speed_max=0.02, length=0.02, force_noise=0.0, deflection_noise=0.0)
    res = run_contour_following(spec, PLANTS[C.ARCC_ONE_STAGE], LOOPS[C.ARCC_ONE_STAGE])
    assert not res.contact_lost
    assert res.vmax == pytest.approx(0.02)
    assert all(p.ferr_mean < 1e-6 for p in res.series)


def test_initial_speed_loss_flagged():
    spec = contour(C.ROBOT_ONLY, 0.02, speed_initial=0.05, length=0.065)
    res = run_contour_following(spec, PLANTS[C.ROBOT_ONLY], LOOPS[C.ROBOT_ONLY])
    assert res.vmax == 0.0
    assert res.failed


@pytest.mark.parametrize("config", [C.ROBOT_ONLY, C.PASSIVE_RCC])
def test_contour_respects_kinematic_bound(config):
    spec = contour(config, 0.01, length=0.065)
    res = run_contour_following(spec, PLANTS[config], LOOPS[config])
    cap = velocity_capacity(LOOPS[config], PLANTS[config], spec.force_setpoint)
    buf = compliance_buffer(PLANTS[config], spec.force_setpoint)
    assert res.contact_lost
    assert res.vmax <= kinematic_speed_bound(cap, spec.amplitude, spec.wavelength, buf)


def test_contour_error_grows_with_speed():
    spec = contour(C.PASSIVE_RCC, 0.01, length=0.065)
    res = run_contour_following(spec, PLANTS[C.PASSIVE_RCC], LOOPS[C.PASSIVE_RCC])
    errs = [p.ferr_mean for p in res.series if not p.contact_lost]
    assert len(errs) >= 2
    assert all(b >= a for a, b in zip(errs, errs[1:]))


# kinematic bound


def test_bound_without_buffer_is_peak_slope():
    v = kinematic_speed_bound(0.01, 0.005, 0.065)
    assert 2 * math.pi * 0.005 * v / 0.065 == pytest.approx(0.01)


def test_bound_flat_is_infinite():
    assert kinematic_speed_bound(0.01, 0.0, 0.065) == math.inf


@given(st.floats(1e-3, 0.1), st.floats(1e-3, 0.02), st.floats(0.0, 0.5))
@example(0.0234375, 0.0033, 3.224905478905546e-67)
def test_buffer_only_raises_bound(cap, amp, frac):
    plain = kinematic_speed_bound(cap, amp, 0.065)
    buffered = kinematic_speed_bound(cap, amp, 0.065, frac * amp)
    assert buffered >= plain * (1 - 1e-12)
    if math.isfinite(buffered) and frac > 0:
        assert receding_excess(buffered, cap, amp, 0.065) == pytest.approx(frac * amp, rel=1e-6, abs=1e-12)


def test_no_excess_below_peak_slope():
    v0 = kinematic_speed_bound(0.01, 0.005, 0.065)
    assert receding_excess(0.99 * v0, 0.01, 0.005, 0.065) == 0.0


# aggregation and reports


def fake(config, duration, overshoot, run=0):
    return RunResult(config, ScenarioKind.CONTACT, run, duration=duration, overshoot=overshoot)


def test_aggregate_single_run_std_zero():
    row = aggregate([fake(C.ROBOT_ONLY, 2.0, 0.1)])[0]
    assert row.duration_std == 0.0
    assert row.duration_mean == 2.0


def test_aggregate_identical_runs_std_zero():
    rows = aggregate([fake(C.ROBOT_ONLY, 2.0, 0.1, i) for i in range(5)])
    assert rows[0].duration_std == 0.0
    assert rows[0].overshoot_max == 0.1


def test_aggregate_sample_std():
    row = aggregate([fake(C.ROBOT_ONLY, d, 0.0) for d in (1.0, 2.0, 3.0)])[0]
    assert row.duration_std == pytest.approx(1.0)


def test_aggregate_groups_configurations():
    rows = aggregate([fake(C.ROBOT_ONLY, 1.0, 0.0), fake(C.ARCC_ONE_STAGE, 2.0, 0.0)])
    assert {r.configuration for r in rows} == {C.ROBOT_ONLY, C.ARCC_ONE_STAGE}


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate([])


def test_identical_configurations_identical_rows():
    spec = contact(C.ARCC_ONE_STAGE, repetitions=2)
    twin = replace(spec, configuration=C.ARCC_TWO_STAGE)
    plants = {C.ARCC_ONE_STAGE: PLANTS[C.ARCC_ONE_STAGE], C.ARCC_TWO_STAGE: PLANTS[C.ARCC_ONE_STAGE]}
    loop = LOOPS[C.ARCC_ONE_STAGE]
    loops = {C.ARCC_ONE_STAGE: loop, C.ARCC_TWO_STAGE: replace(loop, configuration=C.ARCC_TWO_STAGE)}
    rep = compare_configurations([spec, twin], plants, loops)
    a, b = rep.summary
    assert (a.duration_mean, a.duration_std, a.overshoot_max) == (b.duration_mean, b.duration_std, b.overshoot_max)


def test_report_files(tmp_path):
    specs = [contact(C.ARCC_ONE_STAGE, approach_offset=0.0), contour(C.PASSIVE_RCC, 0.01, length=0.065)]
    rep = compare_configurations(specs, PLANTS, LOOPS)
    paths = rep.write(tmp_path)
    with open(paths["results"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == RESULTS_HEADER
    assert len(rows) == 3
    with open(paths["series"]) as fh:
        series = list(csv.reader(fh))
    assert series[0] == SERIES_HEADER
    assert len(series) >= 2
    md = paths["markdown"].read_text()
    assert "Contact establishment" in md and "Contour following" in md


def test_missing_preset_rejected():
    with pytest.raises(KeyError):
        compare_configurations([contact(C.ROBOT_ONLY)], {}, {})
