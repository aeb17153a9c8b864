import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from arcc.lti import (
    CutoffNotFoundError,
    LTIError,
    PoleEvaluationError,
    StateSpace,
    TransferFunction,
    bode_table,
    cutoff_frequency,
    discretize,
    freq_response,
    from_roots,
    poles_zeros,
    simulate,
    step_response,
    to_state_space,
    to_transfer_function,
    write_bode_csv,
)

EQ3 = TransferFunction([20.0, 1e4], [1.0, 20.0, 1e4])


def test_improper_rejected():
    with pytest.raises(LTIError):
        TransferFunction([1, 0, 0], [1, 1])
    with pytest.raises(LTIError):
        TransferFunction([1], [0])


def test_leading_zeros_trimmed():
    tf = TransferFunction([0, 0, 2], [0, 1, 4])
    assert tf.num.tolist() == [2.0]
    assert tf.den.tolist() == [1.0, 4.0]


def test_first_order_dc_and_corner():
    tf = TransferFunction.first_order(1.0, 0.1)
    assert freq_response(tf, 0.0) == 1 + 0j
    assert abs(freq_response(tf, 10.0)) == pytest.approx(1 / math.sqrt(2), rel=1e-12)


def test_robot_lag_at_its_corner():
    tf = TransferFunction.first_order(1.0, 0.0884)
    w = 2 * math.pi * 1.8
    expected = 1.0 / math.sqrt(1 + (w * 0.0884) ** 2)
    assert abs(freq_response(tf, w)) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.707, abs=1e-3)


def test_pole_evaluation_raises():
    with pytest.raises(PoleEvaluationError):
        freq_response(TransferFunction.integrator(), 0.0)
    with pytest.raises(PoleEvaluationError):
        freq_response(TransferFunction([1.0], [1.0, 0.0, 4.0]), 2.0)


def test_negative_frequency_rejected():
    with pytest.raises(LTIError):
        freq_response(EQ3, -1.0)


def test_poles_zeros_quadratic():
    p, z = poles_zeros(TransferFunction([1, 2], [1, 3, 2]))
    np.testing.assert_allclose(p, [-2, -1])
    np.testing.assert_allclose(z, [-2])


def test_poles_first_order():
    p, z = poles_zeros(TransferFunction.first_order(3.0, 0.1))
    np.testing.assert_allclose(p, [-10.0])
    assert z.size == 0


def test_eq3_poles():
    # s^2 + 20 s + 1e4: -10 +- j sqrt(1e4 - 100)
    p, _ = poles_zeros(EQ3)
    np.testing.assert_allclose(p, [-10 - 99.498743710662j, -10 + 99.498743710662j], rtol=1e-12)


def _separated(xs, gap=0.5):
    xs = sorted(xs)
    return all(b - a >= gap for a, b in zip(xs, xs[1:]))


# repeated roots are only recoverable to ~eps**(1/m); keep them separated
@given(
    st.lists(st.floats(-50, -0.1), min_size=1, max_size=3).filter(_separated),
    st.lists(st.floats(-50, -0.1), min_size=0, max_size=2).filter(_separated),
    st.floats(0.1, 10),
)
def test_roots_round_trip(ps, zs, k):
    zs = zs[: len(ps)]
    tf = from_roots(ps, zs, k)
    p, z = poles_zeros(tf)
    np.testing.assert_allclose(np.sort(p.real), np.sort(ps), rtol=1e-8, atol=1e-8)
    assert np.all(np.abs(p.imag) < 1e-8)
    if zs:
        np.testing.assert_allclose(np.sort(z.real), np.sort(zs), rtol=1e-8, atol=1e-8)


def test_cutoff_first_order():
    assert cutoff_frequency(TransferFunction.first_order(1, 1 / (2 * math.pi * 1.8))) == pytest.approx(1.8, rel=1e-9)
    assert cutoff_frequency(TransferFunction.first_order(1, 1.0)) == pytest.approx(1 / (2 * math.pi), rel=1e-9)


def test_cutoff_eq3_against_dense_grid():
    f = np.linspace(1e-3, 200, 10**6)
    s = 2j * np.pi * f
    mag = np.abs(np.polyval(EQ3.num, s) / np.polyval(EQ3.den, s))
    i = int(np.argmax(mag <= 1 / np.sqrt(2)))
    fc = cutoff_frequency(EQ3)
    assert f[i - 1] <= fc <= f[i]
    # frozen from the grid scan above
    assert fc == pytest.approx(24.9037, abs=2e-4)


def test_cutoff_not_found():
    with pytest.raises(CutoffNotFoundError):
        cutoff_frequency(TransferFunction.first_order(1, 1e-9), f_max=10.0)
    with pytest.raises(LTIError):
        cutoff_frequency(TransferFunction([1, 0], [1, 1]))


def test_state_space_first_order():
    ss = to_state_space(TransferFunction.first_order(2.0, 0.5))
    assert ss.n == 1
    np.testing.assert_allclose(ss.poles(), [-2.0])


def test_state_space_eq3_and_gain():
    ss = to_state_space(EQ3)
    assert ss.n == 2
    np.testing.assert_allclose(ss.poles(), poles_zeros(EQ3)[0], rtol=1e-12)
    g = to_state_space(TransferFunction.gain(1e5))
    assert g.n == 0 and g.D == 1e5


def test_state_space_response_matches_on_log_grid():
    ss = to_state_space(EQ3)
    for w in np.logspace(-2, 4, 100):
        h = freq_response(EQ3, w)
        assert abs(ss.evaluate(1j * w) - h) <= 1e-10 * abs(h)


@st.composite
def stable_proper(draw):
    n = draw(st.integers(1, 3))
    poles = draw(st.lists(st.floats(-100, -0.5), min_size=n, max_size=n))
    m = draw(st.integers(0, n))
    zeros = draw(st.lists(st.floats(-100, 100), min_size=m, max_size=m))
    k = draw(st.floats(0.1, 10))
    return from_roots(poles, zeros, k)


@given(stable_proper())
def test_state_space_preserves_response(tf):
    ss = to_state_space(tf)
    back = to_transfer_function(ss)
    w = np.logspace(-2, 3, 25)
    h = freq_response(tf, w)
    # absolute floor tied to the peak gain covers zeros at the origin
    floor = 1e-12 * np.max(np.abs(h))
    direct = np.array([ss.evaluate(1j * wi) for wi in w])
    assert np.all(np.abs(direct - h) <= 1e-9 * np.abs(h) + floor)
    # characteristic polynomials of repeated roots lose about half the digits
    assert np.all(np.abs(freq_response(back, w) - h) <= 1e-6 * np.abs(h) + 1e3 * floor)


@given(st.floats(0.01, 100), st.floats(1e-3, 10))
def test_first_order_magnitude_monotone(k, T):
    w = np.logspace(-3, 4, 200)
    mag = np.abs(freq_response(TransferFunction.first_order(k, T), w))
    assert np.all(np.diff(mag) < 0)


@given(st.floats(0.01, 10), st.floats(0.0, 100), st.floats(10, 1e6))
def test_eq3_dc_gain_unity(m, d, c):
    tf = TransferFunction([d, c], [m, d, c])
    assert abs(freq_response(tf, 0.0) - 1.0) < 1e-12


def test_zoh_first_order_pole():
    sd = discretize(to_state_space(TransferFunction.first_order(1, 0.1)), 1e-3)
    assert sd.A[0, 0] == pytest.approx(math.exp(-0.01), rel=1e-14)
    assert sd.A[0, 0] == pytest.approx(0.9900498337491681, rel=1e-14)


def test_zoh_integrator_and_gain():
    sd = discretize(to_state_space(TransferFunction.integrator()), 0.01)
    assert sd.A[0, 0] == pytest.approx(1.0)
    assert sd.B[0, 0] * sd.C[0, 0] == pytest.approx(0.01)
    g = discretize(to_state_space(TransferFunction.gain(3.0)), 0.01)
    assert g.n == 0 and g.D == 3.0


def test_zoh_step_matches_continuous():
    t = np.arange(0, 0.5, 1e-3)
    y = step_response(TransferFunction.first_order(2.0, 0.05), t)
    exact = 2.0 * (1 - np.exp(-t / 0.05))
    # simulate() reports y[k] before the k-th update: response at t[k]
    np.testing.assert_allclose(y[1:], exact[1:], rtol=1e-6)


def test_simulate_needs_discrete_model():
    with pytest.raises(LTIError):
        simulate(to_state_space(EQ3), [1.0, 1.0])


def test_discrete_stability():
    assert StateSpace([[0.5]], [1], [1], dt=0.1).is_stable()
    assert not StateSpace([[1.5]], [1], [1], dt=0.1).is_stable()


def test_feedback_and_series():
    g = TransferFunction.first_order(1, 1)
    cl = g.feedback()
    # 1/(s+2)
    assert cl.dc_gain() == pytest.approx(0.5)
    np.testing.assert_allclose(poles_zeros(cl)[0], [-2.0])
    assert (g * 2.0).dc_gain() == pytest.approx(2.0)


def test_bode_table_matches_analytic_first_order(tmp_path):
    K, T = 1.4, 0.02
    tab = bode_table(TransferFunction.first_order(K, T), 0.1, 1000, 200)
    w = 2 * np.pi * tab[:, 0]
    np.testing.assert_allclose(tab[:, 1], 20 * np.log10(K / np.sqrt(1 + (w * T) ** 2)), atol=1e-9)
    np.testing.assert_allclose(tab[:, 2], -np.degrees(np.arctan(w * T)), atol=1e-9)
    assert tab.shape[0] == 4 * 200 + 1
    path = tmp_path / "b.csv"
    write_bode_csv(path, TransferFunction.first_order(K, T), 0.1, 1000)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["freq_hz", "mag_db", "phase_deg"]
    assert len(rows) == 802
