"""
System identification from sweep experiments.

The estimator fits a sampled ARX-structured model with iterative instrumental
variables: the instruments are the noise-free outputs of the previous
iteration's model, and regressors are optionally prefiltered by the current
denominator estimate.  The sampled model is mapped back to continuous time by
inverting the zero-order-hold discretization.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import logm
from scipy.signal import chirp, lfilter

from .lti import (
    StateSpace,
    TransferFunction,
    cutoff_frequency,
    poles_zeros,
    to_state_space,
    to_transfer_function,
)

# Reference figures reported for the hardware sweep data (not reproducible here).
HARDWARE_FIT_PERCENT = 72.0
HARDWARE_MSE_MM_S = 0.274

FIT_FLOOR = -1000.0


class IdentificationError(RuntimeError):
    """Estimation failed (non-convergence, unstable iterate, no CT equivalent)."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message if residual is None else f"{message} (last residual {residual:.3g})")
        self.residual = residual


class RankError(IdentificationError):
    """The instrument/regressor product matrix is numerically singular."""


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled scalar signal."""

    samples: np.ndarray
    fs: float
    unit: str = ""

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float).ravel()
        if not self.fs > 0:
            raise ValueError("sample rate must be positive")
        if x.size < 2:
            raise ValueError("a signal needs at least two samples")
        object.__setattr__(self, "samples", x)

    @property
    def dt(self) -> float:
        return 1.0 / self.fs

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.fs

    def __len__(self):
        return self.samples.size

    def scaled(self, factor: float) -> "Signal":
        return Signal(self.samples * factor, self.fs, self.unit)


def _values(x) -> np.ndarray:
    return x.samples if isinstance(x, Signal) else np.asarray(x, dtype=float).ravel()


def generate_sweep(f_lo: float, f_hi: float, duration: float, fs: float, amplitude: float = 1.0, unit: str = "") -> Signal:
    """Linear chirp ``amplitude * sin(phi(t))`` sweeping ``f_lo`` to ``f_hi`` Hz.

    ``f_lo == f_hi`` degenerates to a pure sinusoid.
    """
    if not (0 < f_lo <= f_hi):
        raise ValueError("need 0 < f_lo <= f_hi")
    if not f_hi < fs / 2:
        raise ValueError(f"f_hi={f_hi} Hz violates Nyquist for fs={fs} Hz")
    if not duration > 0:
        raise ValueError("duration must be positive")
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    x = amplitude * chirp(t, f0=f_lo, t1=duration, f1=f_hi, method="linear", phi=-90.0)
    return Signal(x, fs, unit)


def sweep_instantaneous_frequency(f_lo: float, f_hi: float, duration: float, t) -> np.ndarray:
    return f_lo + (f_hi - f_lo) * np.asarray(t, dtype=float) / duration


def nrmse_fit(y, y_hat) -> float:
    """Fit percentage ``100 (1 - |y - y_hat| / |y - mean(y)|)``, floored at -1000 %."""
    a, b = _values(y), _values(y_hat)
    if a.shape != b.shape:
        raise ValueError("signals must have equal length")
    ref = np.linalg.norm(a - a.mean())
    if ref == 0.0:
        raise ValueError("fit is undefined for a constant reference signal")
    fit = 100.0 * (1.0 - np.linalg.norm(a - b) / ref)
    return float(max(fit, FIT_FLOOR))


class ErrorStats(NamedTuple):
    mse: float
    rms: float


def mse(y, y_hat) -> ErrorStats:
    """Mean squared error and its square root (same unit as the signal)."""
    a, b = _values(y), _values(y_hat)
    if a.shape != b.shape:
        raise ValueError("signals must have equal length")
    m = float(np.mean((a - b) ** 2))
    return ErrorStats(m, math.sqrt(m))


# --- estimation -------------------------------------------------------------


def _regressors(y: np.ndarray, u: np.ndarray, n: int) -> np.ndarray:
    """Rows ``[-y[k-1..k-n], u[k-1..k-n]]`` for k = n..N-1."""
    N = y.size
    cols = [-y[n - i:N - i] for i in range(1, n + 1)]
    cols += [u[n - i:N - i] for i in range(1, n + 1)]
    return np.column_stack(cols)


def _split(theta: np.ndarray, n: int):
    a = np.concatenate(([1.0], theta[:n]))
    b = np.concatenate(([0.0], theta[n:]))
    return a, b


def _stable_poly(a: np.ndarray) -> bool:
    return bool(np.all(np.abs(np.roots(a)) < 1.0)) if a.size > 1 else True


def _reflect(a: np.ndarray) -> np.ndarray:
    """Mirror roots outside the unit circle to 1/conj(r) so instruments stay bounded."""
    r = np.roots(a)
    out = np.abs(r) >= 1.0
    r[out] = 1.0 / np.conj(r[out])
    return np.real(np.poly(r))


def _solve(Z: np.ndarray, Phi: np.ndarray, y: np.ndarray, cond_limit: float) -> np.ndarray:
    M = Z.T @ Phi
    c = np.linalg.cond(M)
    if not np.isfinite(c) or c > cond_limit:
        raise RankError(f"regressor matrix ill-conditioned (cond={c:.3g}); is the input exciting enough?")
    return np.linalg.solve(M, Z.T @ y)


def discrete_to_continuous(num_z, den_z, dt: float) -> TransferFunction:
    """Inverse zero-order-hold mapping of a strictly proper sampled model."""
    tfd = TransferFunction(num_z, den_z, dt=dt)
    ss = to_state_space(TransferFunction(tfd.num, tfd.den))
    n = ss.n
    if n == 0:
        return TransferFunction([tfd.dc_gain()], [1.0])
    D = np.atleast_2d(ss.D)
    if np.any(np.abs(D) > 0):
        raise IdentificationError("sampled model must be strictly proper for the inverse ZOH map")
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = ss.A
    aug[:n, n:] = ss.B
    aug[n, n] = 1.0
    z_poles = np.linalg.eigvals(ss.A)
    if np.any(np.abs(z_poles) < 1e-12) or np.any((np.abs(z_poles.imag) < 1e-12) & (z_poles.real < 0)):
        raise IdentificationError("sampled pole on the negative real axis has no continuous equivalent")
    M = logm(aug) / dt
    if np.max(np.abs(M.imag)) > 1e-6 * max(1.0, np.max(np.abs(M.real))):
        raise IdentificationError("inverse ZOH map produced a complex generator")
    M = M.real
    return to_transfer_function(StateSpace(M[:n, :n], M[:n, n:], ss.C, D * 0.0))


def _shape_numerator(tf: TransferFunction, order: int, zeros: int) -> TransferFunction:
    """Enforce the requested number of continuous zeros, keeping the DC gain."""
    den = tf.den / tf.den[0]
    num = tf.num / tf.den[0]
    num = np.concatenate((np.zeros(order + 1 - num.size), num))
    keep = num[-(zeros + 1):].copy()
    if zeros == 0:
        keep = np.array([tf.dc_gain() * den[-1]])
    return TransferFunction(keep, den)


@dataclass
class IdentifiedModel:
    tf: TransferFunction
    fit_percent: float
    mse: float
    rms_error: float
    order: int
    zeros: int
    dt: float
    num_z: np.ndarray
    den_z: np.ndarray
    iterations: int = 0
    converged: bool = True
    metadata: dict = field(default_factory=dict)

    def simulate(self, u) -> np.ndarray:
        """Response of the sampled model to ``u``."""
        return lfilter(self.num_z, self.den_z, _values(u))

    @property
    def poles(self) -> np.ndarray:
        return poles_zeros(self.tf)[0]

    def cutoff_hz(self) -> float:
        return cutoff_frequency(self.tf)

    def report(self) -> dict:
        return {
            "model_order": self.order,
            "zeros": self.zeros,
            "numerator": [float(v) for v in self.tf.num],
            "denominator": [float(v) for v in self.tf.den],
            "fit_percent": self.fit_percent,
            "mse": self.mse,
            "rms_error": self.rms_error,
            "sample_time_s": self.dt,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def iv_identify(
    u,
    y,
    order: int = 1,
    zeros: int = 0,
    max_iter: int = 50,
    tol: float = 1e-8,
    prefilter: bool = True,
    cond_limit: float = 1e12,
) -> IdentifiedModel:
    """Iterative instrumental-variable estimate of a continuous-time model.

    Parameters
    ----------
    u, y : Signal
        Input and output records with identical length and rate.
    order : int
        Number of continuous poles (1 or 2).
    zeros : int
        Number of continuous zeros; must be smaller than ``order``.
    prefilter : bool
        Filter data and instruments by ``1/A`` of the current iterate
        (simplified refined IV).  Off gives plain model-output instruments.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if zeros not in (0, 1) or zeros >= order:
        raise ValueError("zeros must be 0 or 1 and below the model order")
    if not (isinstance(u, Signal) and isinstance(y, Signal)):
        raise TypeError("u and y must be Signal instances")
    if len(u) != len(y) or u.fs != y.fs:
        raise ValueError("u and y must have equal length and sample rate")
    uu, yy = u.samples, y.samples
    n = order
    if uu.size < 10 * (2 * n):
        raise ValueError("too few samples for the requested order")

    # least-squares start
    Phi = _regressors(yy, uu, n)
    theta = _solve(Phi, Phi, yy[n:], cond_limit)
    a, b = _split(theta, n)

    converged = False
    change = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        if not _stable_poly(a):
            a = _reflect(a)
        x = lfilter(b, a, uu)
        if prefilter:
            yf, uf, xf = (lfilter([1.0], a, s) for s in (yy, uu, x))
        else:
            yf, uf, xf = yy, uu, x
        Phi = _regressors(yf, uf, n)
        Z = _regressors(xf, uf, n)
        new = _solve(Z, Phi, yf[n:], cond_limit)
        change = np.linalg.norm(new - theta) / max(np.linalg.norm(new), 1e-300)
        theta = new
        a, b = _split(theta, n)
        if not np.all(np.isfinite(theta)):
            raise IdentificationError("iteration diverged", residual=change)
        if change < tol:
            converged = True
            break
    if not converged:
        raise IdentificationError(f"no convergence within {max_iter} iterations", residual=change)
    if not _stable_poly(a):
        raise IdentificationError("converged to an unstable sampled model", residual=change)

    ct = _shape_numerator(discrete_to_continuous(b, a, u.dt), order, zeros)
    y_hat = lfilter(b, a, uu)
    err = mse(yy, y_hat)
    return IdentifiedModel(
        tf=ct,
        fit_percent=nrmse_fit(yy, y_hat),
        mse=err.mse,
        rms_error=err.rms,
        order=order,
        zeros=zeros,
        dt=u.dt,
        num_z=b,
        den_z=a,
        iterations=it,
        converged=converged,
        metadata={"prefilter": prefilter, "instrument": "model output", "last_change": float(change)},
    )


def simulate_zoh(tf: TransferFunction, u: Signal) -> Signal:
    """Exact sampled response of a continuous model to a held input."""
    from .lti import discretize, simulate

    ss = discretize(to_state_space(tf), u.dt)
    y = simulate(ss, u.samples)
    return Signal(y, u.fs, u.unit)


def add_output_noise(y: Signal, snr_db: float, rng: np.random.Generator) -> Signal:
    """White noise scaled to the requested signal-to-noise ratio (RMS based)."""
    rms = math.sqrt(float(np.mean(y.samples**2)))
    sigma = rms / 10.0 ** (snr_db / 20.0)
    return Signal(y.samples + rng.normal(0.0, sigma, len(y)), y.fs, y.unit)


# --- bandwidth comparison ---------------------------------------------------


@dataclass
class BandwidthRow:
    name: str
    cutoff_hz: float
    poles: np.ndarray


@dataclass
class BandwidthReport:
    rows: list

    def ratio(self, numerator: str, denominator: str) -> float:
        look = {r.name: r.cutoff_hz for r in self.rows}
        return look[numerator] / look[denominator]

    def ratios(self) -> dict:
        return {(a.name, b.name): a.cutoff_hz / b.cutoff_hz for a in self.rows for b in self.rows}

    def markdown(self) -> str:
        lines = ["| model | cutoff [Hz] | poles [rad/s] |", "|---|---|---|"]
        for r in self.rows:
            ps = ", ".join(f"{p.real:.4g}{p.imag:+.4g}j" if abs(p.imag) > 0 else f"{p.real:.4g}" for p in r.poles)
            lines.append(f"| {r.name} | {r.cutoff_hz:.4g} | {ps} |")
        lines += ["", "| ratio | value |", "|---|---|"]
        for (a, b), v in self.ratios().items():
            if a != b:
                lines.append(f"| {a} / {b} | {v:.4g} |")
        return "\n".join(lines) + "\n"


def bandwidth_report(models: Sequence, names: Optional[Sequence[str]] = None) -> BandwidthReport:
    """Cutoff frequency, poles and pairwise bandwidth ratios.

    ``models`` may hold :class:`IdentifiedModel` or :class:`TransferFunction`.
    """
    if len(models) < 2:
        raise ValueError("need at least two models to compare")
    names = list(names) if names is not None else [f"model{i}" for i in range(len(models))]
    if len(names) != len(models):
        raise ValueError("one name per model")
    rows = []
    for name, m in zip(names, models):
        tf = m.tf if isinstance(m, IdentifiedModel) else m
        rows.append(BandwidthRow(name, cutoff_frequency(tf), poles_zeros(tf)[0]))
    return BandwidthReport(rows)


# --- file formats -----------------------------------------------------------


def write_signal_csv(signal: Signal, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in zip(signal.t, signal.samples):
            w.writerow([f"{t:.9g}", f"{v:.9g}"])


def read_signal_csv(path, unit: str = "") -> Signal:
    """Read a ``t,value`` CSV; the sample rate is taken from the time column."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header] != ["t", "value"]:
            raise ValueError(f"{path}: expected header 't,value', got {header}")
        rows = [(float(a), float(b)) for a, b in r]
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two samples")
    t = np.array([a for a, _ in rows])
    dts = np.diff(t)
    dt = float(np.mean(dts))
    if not dt > 0 or np.max(np.abs(dts - dt)) > 1e-6 * dt + 1e-9:
        raise ValueError(f"{path}: time column must be uniformly increasing")
    return Signal(np.array([b for _, b in rows]), 1.0 / dt, unit)


def write_ident_report(model: IdentifiedModel, path) -> None:
    Path(path).write_text(json.dumps(model.report(), indent=2) + "\n")
