"""Identify the compliant device and the robot from sweeps, then compare bandwidths.

Run with ``python3 demos/identify_and_compare.py``.
"""

import numpy as np

from arcc.presets import reference_models
from arcc.sysid import add_output_noise, bandwidth_report, generate_sweep, iv_identify, simulate_zoh

rng = np.random.default_rng(0)
truth = reference_models()

# A linear sweep from 10 to 120 Hz, sampled at 1 kHz for 10 s.
u = generate_sweep(10.0, 120.0, 10.0, 1000.0, unit="m/s")

# Measured responses are simulated from the pinned models with 20 dB of output noise.
structure = {"robot": (1, 0), "arcc-no-payload": (2, 1), "arcc-1.5kg": (2, 1)}
identified = {}
for name, tf in truth.items():
    y = add_output_noise(simulate_zoh(tf, u), 20.0, rng)
    order, zeros = structure[name]
    model = iv_identify(u, y, order=order, zeros=zeros)
    identified[name] = model
    print(f"{name:16s} fit {model.fit_percent:5.1f} %  rms {model.rms_error:.3g}  "
          f"poles {np.round(model.poles, 1)}  iterations {model.iterations}")

# Cutoff frequencies and how much faster the compliant device reacts than the robot.
print()
print(bandwidth_report(list(identified.values()), list(identified)).markdown())
