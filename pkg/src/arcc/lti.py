"""
Rational SISO transfer functions and state-space realizations.

Polynomials are stored as coefficient arrays in descending powers of ``s``
(or ``z`` for sampled models).  Angular frequencies are in rad/s inside this
module; functions that report frequencies to the caller (``cutoff_frequency``,
``bode_table``, ``write_bode_csv``) use Hz.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

TWO_PI = 2.0 * np.pi


class LTIError(ValueError):
    """Invalid model construction or evaluation."""


class PoleEvaluationError(LTIError):
    """Frequency response requested exactly at a pole."""


class RootFindingError(LTIError):
    """Polynomial roots could not be computed to an acceptable residual."""


class CutoffNotFoundError(LTIError):
    """No -3 dB crossing exists below the search limit."""


def _trim(coeffs) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coeffs, dtype=float)).ravel()
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


@dataclass(frozen=True)
class TransferFunction:
    """G(s) = num(s) / den(s), proper, single input single output.

    ``dt`` is ``None`` for continuous-time models and the sample time for
    discrete-time models (polynomials in ``z``).
    """

    num: np.ndarray
    den: np.ndarray
    dt: Optional[float] = None

    def __post_init__(self):
        num = _trim(self.num)
        den = _trim(self.den)
        if den[0] == 0.0:
            raise LTIError("denominator leading coefficient must be nonzero")
        if num.size > den.size:
            raise LTIError(
                f"improper transfer function: deg(num)={num.size - 1} > deg(den)={den.size - 1}"
            )
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise LTIError("coefficients must be finite")
        num.flags.writeable = False
        den.flags.writeable = False
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def first_order(cls, gain: float, time_constant: float) -> "TransferFunction":
        """K / (T s + 1)."""
        return cls([gain], [time_constant, 1.0])

    @classmethod
    def gain(cls, k: float) -> "TransferFunction":
        return cls([k], [1.0])

    @classmethod
    def integrator(cls) -> "TransferFunction":
        return cls([1.0], [1.0, 0.0])

    @property
    def order(self) -> int:
        return self.den.size - 1

    @property
    def is_discrete(self) -> bool:
        return self.dt is not None

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def _check_dt(self, other: "TransferFunction"):
        if self.dt != other.dt:
            raise LTIError("cannot combine models with different sample times")

    def __mul__(self, other):
        if isinstance(other, TransferFunction):
            self._check_dt(other)
            return TransferFunction(
                np.polymul(self.num, other.num), np.polymul(self.den, other.den), self.dt
            )
        return TransferFunction(self.num * float(other), self.den, self.dt)

    __rmul__ = __mul__

    def __add__(self, other):
        if not isinstance(other, TransferFunction):
            other = TransferFunction([float(other)], [1.0], self.dt)
        self._check_dt(other)
        num = np.polyadd(np.polymul(self.num, other.den), np.polymul(other.num, self.den))
        return TransferFunction(num, np.polymul(self.den, other.den), self.dt)

    __radd__ = __add__

    def __neg__(self):
        return TransferFunction(-self.num, self.den, self.dt)

    def feedback(self, other: "TransferFunction | float" = 1.0, sign: int = -1) -> "TransferFunction":
        """Closed loop G / (1 - sign * G * H)."""
        if not isinstance(other, TransferFunction):
            other = TransferFunction([float(other)], [1.0], self.dt)
        self._check_dt(other)
        num = np.polymul(self.num, other.den)
        den = np.polyadd(
            np.polymul(self.den, other.den), -sign * np.polymul(self.num, other.num)
        )
        return TransferFunction(num, den, self.dt)

    def dc_gain(self) -> float:
        s0 = 1.0 if self.is_discrete else 0.0
        d = np.polyval(self.den, s0)
        if d == 0.0:
            raise PoleEvaluationError("DC gain undefined: pole at s=0 (z=1)")
        return float(np.polyval(self.num, s0) / d)

    def __repr__(self):
        var = "z" if self.is_discrete else "s"
        return f"TransferFunction(num={self.num.tolist()}, den={self.den.tolist()}, var={var!r})"


@dataclass(frozen=True)
class StateSpace:
    """x' = A x + B u,  y = C x + D u  (single input, single output).

    For ``dt`` set, the first equation is the sample-to-sample update.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0
    dt: Optional[float] = None
    n: int = field(init=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = np.zeros((0, 0))
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float).reshape(n, 1)
        C = np.asarray(self.C, dtype=float).reshape(1, n)
        if A.shape != (n, n):
            raise LTIError(f"state matrix must be square, got {A.shape}")
        for m in (A, B, C):
            m.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", float(np.asarray(self.D, dtype=float).reshape(-1)[0]))
        object.__setattr__(self, "n", n)

    def poles(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(0, dtype=complex)
        return _sorted_roots(np.linalg.eigvals(self.A))

    def evaluate(self, s: complex) -> complex:
        if self.n == 0:
            return complex(self.D)
        M = s * np.eye(self.n) - self.A
        try:
            x = np.linalg.solve(M, self.B[:, 0])
        except np.linalg.LinAlgError as exc:
            raise PoleEvaluationError(f"s={s} is a pole of the realization") from exc
        return complex(self.C[0] @ x + self.D)

    def is_stable(self) -> bool:
        p = self.poles()
        if p.size == 0:
            return True
        if self.dt is None:
            return bool(np.all(p.real < 0.0))
        return bool(np.all(np.abs(p) < 1.0))

    def spectral_abscissa(self) -> float:
        """max Re(p) for continuous models, max |p| - 1 for sampled ones."""
        p = self.poles()
        if p.size == 0:
            return -np.inf
        if self.dt is None:
            return float(np.max(p.real))
        return float(np.max(np.abs(p)) - 1.0)


def _sorted_roots(r) -> np.ndarray:
    r = np.asarray(r, dtype=complex)
    # snap round-off imaginary parts so conjugate pairs sort deterministically
    r = np.where(np.abs(r.imag) < 1e-12 * np.maximum(1.0, np.abs(r)), r.real + 0j, r)
    idx = np.lexsort((r.imag, r.real))
    return r[idx]


def roots(coeffs) -> np.ndarray:
    """Roots of a polynomial via companion-matrix eigenvalues, sorted by (real, imag)."""
    c = _trim(coeffs)
    if c.size <= 1:
        return np.zeros(0, dtype=complex)
    try:
        r = np.roots(c)
    except np.linalg.LinAlgError as exc:
        raise RootFindingError(f"eigenvalue iteration did not converge for {c.tolist()}") from exc
    # relative residual check against the coefficient scale
    scale = np.polyval(np.abs(c), np.maximum(1.0, np.abs(r)))
    resid = np.abs(np.polyval(c, r)) / scale
    worst = float(np.max(resid)) if resid.size else 0.0
    if not np.all(np.isfinite(r)) or worst > 1e-6:
        raise RootFindingError(f"root residual {worst:.3e} too large for {c.tolist()}")
    return _sorted_roots(r)


def poles_zeros(tf: TransferFunction) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(poles, zeros)`` with multiplicity, sorted by real then imaginary part."""
    return roots(tf.den), roots(tf.num)


def from_roots(poles, zeros, gain: float = 1.0, dt=None) -> TransferFunction:
    """Rebuild ``gain * prod(s - z) / prod(s - p)``."""
    num = np.real(np.poly(np.asarray(zeros, dtype=complex))) if len(zeros) else np.ones(1)
    den = np.real(np.poly(np.asarray(poles, dtype=complex)))
    return TransferFunction(gain * num, den, dt)


def freq_response(tf: TransferFunction, omega) -> complex | np.ndarray:
    """Evaluate ``tf`` at ``s = j*omega`` (continuous) or ``z = exp(j*omega*dt)`` (sampled).

    ``omega`` in rad/s, scalar or array.
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise LTIError("omega must be non-negative")
    if tf.is_discrete:
        s = np.exp(1j * w * tf.dt)
    else:
        s = 1j * w
    d = np.polyval(tf.den, s)
    n = np.polyval(tf.num, s)
    tiny = 1e-300 + 1e-14 * np.polyval(np.abs(tf.den), np.abs(s))
    if np.any(np.abs(d) <= tiny):
        bad = np.atleast_1d(w)[np.atleast_1d(np.abs(d) <= tiny)][0]
        raise PoleEvaluationError(f"omega={bad} rad/s coincides with a pole")
    out = n / d
    return complex(out) if out.ndim == 0 else out


def cutoff_frequency(
    tf: TransferFunction,
    f_max: float = 1e5,
    f_min: float = 1e-6,
    points_per_decade: int = 400,
    rtol: float = 1e-9,
) -> float:
    """Smallest frequency in Hz where the magnitude falls to DC/sqrt(2).

    Scans a log-spaced grid for the first bracket, then bisects in
    log-frequency to ``rtol``.
    """
    dc = abs(freq_response(tf, 0.0))
    if not np.isfinite(dc) or dc == 0.0:
        raise LTIError("cutoff undefined: DC gain is zero or infinite")
    level = dc / np.sqrt(2.0)

    def excess(f):
        return abs(freq_response(tf, TWO_PI * f)) - level

    decades = np.log10(f_max) - np.log10(f_min)
    grid = np.logspace(np.log10(f_min), np.log10(f_max), int(decades * points_per_decade) + 1)
    mags = np.abs(freq_response(tf, TWO_PI * grid)) - level
    below = np.flatnonzero(mags <= 0.0)
    if below.size == 0:
        raise CutoffNotFoundError(f"no -3 dB crossing below {f_max} Hz")
    i = below[0]
    if i == 0:
        raise CutoffNotFoundError(f"magnitude already below -3 dB at f_min={f_min} Hz")
    lo, hi = np.log(grid[i - 1]), np.log(grid[i])
    while hi - lo > rtol * 0.5:
        mid = 0.5 * (lo + hi)
        if excess(np.exp(mid)) > 0.0:
            lo = mid
        else:
            hi = mid
    return float(np.exp(0.5 * (lo + hi)))


def to_state_space(tf: TransferFunction) -> StateSpace:
    """Controllable canonical realization."""
    a = tf.den / tf.den[0]
    b = tf.num / tf.den[0]
    n = a.size - 1
    b = np.concatenate([np.zeros(n + 1 - b.size), b])
    D = b[0]
    if n == 0:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), D, tf.dt)
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[1:][::-1]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = (b[1:] - b[0] * a[1:])[::-1].reshape(1, n)
    return StateSpace(A, B, C, D, tf.dt)


def to_transfer_function(ss: StateSpace) -> TransferFunction:
    """Characteristic polynomial / numerator via det(sI - A + B C) identity."""
    if ss.n == 0:
        return TransferFunction([ss.D], [1.0], ss.dt)
    den = np.real(np.poly(ss.A))
    shifted = np.real(np.poly(ss.A - ss.B @ ss.C))
    diff = shifted - den
    # the subtraction cancels leading digits; drop what is pure round-off
    noise = 100 * np.finfo(float).eps * np.maximum(np.abs(shifted), np.abs(den))
    diff[np.abs(diff) <= noise] = 0.0
    num = diff + ss.D * den
    return TransferFunction(num, den, ss.dt)


def discretize(ss: StateSpace, dt: float) -> StateSpace:
    """Zero-order-hold equivalent with sample time ``dt``."""
    if not dt > 0:
        raise LTIError("dt must be positive")
    if ss.dt is not None:
        raise LTIError("model is already discrete")
    n = ss.n
    if n == 0:
        return StateSpace(ss.A, ss.B, ss.C, ss.D, dt)
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = ss.A
    M[:n, n:] = ss.B
    E = expm(M * dt)
    return StateSpace(E[:n, :n], E[:n, n:], ss.C, ss.D, dt)


def simulate(ss: StateSpace, u, x0=None) -> np.ndarray:
    """Output sequence of a sampled model driven by ``u`` (one value per sample)."""
    if ss.dt is None:
        raise LTIError("simulate() needs a discrete model; discretize first")
    u = np.asarray(u, dtype=float)
    x = np.zeros(ss.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    A, B, C, D = ss.A, ss.B[:, 0], ss.C[0], ss.D
    y = np.empty(u.size)
    for k, uk in enumerate(u):
        y[k] = C @ x + D * uk
        x = A @ x + B * uk
    return y


def step_response(tf: TransferFunction, t) -> np.ndarray:
    """Continuous unit-step response sampled at uniformly spaced times ``t`` (exact for ZOH input)."""
    t = np.asarray(t, dtype=float)
    dt = t[1] - t[0]
    sysd = discretize(to_state_space(tf), dt)
    return simulate(sysd, np.ones(t.size))


def bode_table(tf: TransferFunction, f_lo: float, f_hi: float, points_per_decade: int = 200) -> np.ndarray:
    """Rows ``(freq_hz, mag_db, phase_deg)`` on a log grid, phase unwrapped."""
    if not (0 < f_lo < f_hi):
        raise LTIError("need 0 < f_lo < f_hi")
    n = int(np.ceil((np.log10(f_hi) - np.log10(f_lo)) * points_per_decade)) + 1
    f = np.logspace(np.log10(f_lo), np.log10(f_hi), n)
    h = freq_response(tf, TWO_PI * f)
    mag_db = 20.0 * np.log10(np.abs(h))
    phase = np.degrees(np.unwrap(np.angle(h)))
    return np.column_stack([f, mag_db, phase])


def write_bode_csv(path, tf: TransferFunction, f_lo: float, f_hi: float, points_per_decade: int = 200):
    table = bode_table(tf, f_lo, f_hi, points_per_decade)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "mag_db", "phase_deg"])
        for f, m, p in table:
            w.writerow([f"{f:.9g}", f"{m:.9g}", f"{p:.9g}"])
    return table


def series(*blocks: TransferFunction) -> TransferFunction:
    out = blocks[0]
    for b in blocks[1:]:
        out = out * b
    return out
