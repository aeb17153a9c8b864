"""Find the largest stable stiffness-control gain for the robot and for the active device.

Run with ``python3 demos/stability_margins.py``.
"""

from arcc.control import (
    apply_safety_reduction,
    arcc_force_plant,
    find_stability_margin_gain,
    robot_force_plant,
    sampled_force_loop,
    tune_pi_magnitude_optimum,
    tune_pi_symmetric_optimum,
)
from arcc.plant import Environment, LinearSpring, PlantConfig

env = Environment(stiffness=1e5)  # stiff workpiece, N/m

# Velocity command -> contact force, for a rigid tool on the robot and for the active axis.
robot_plant = robot_force_plant(PlantConfig(rigid_tool=True, environment=env))
arcc_plant = arcc_force_plant(PlantConfig(spring=LinearSpring(10.0), environment=env))

# Both loops are sampled with one sample of computational delay.
for name, plant, dt in (("robot 250 Hz", robot_plant, 4e-3), ("ARCC 250 Hz", arcc_plant, 4e-3), ("ARCC 1 kHz", arcc_plant, 1e-3)):
    res = find_stability_margin_gain(sampled_force_loop(plant, dt))
    print(f"{name:13s} critical {res.critical_gain:.3e} m/(N s)  "
          f"operating {apply_safety_reduction(res.critical_gain):.3e} m/(N s)")

# The motor cascade: current loop by magnitude optimum, speed loop by symmetric optimum.
mo = tune_pi_magnitude_optimum(1.0, 0.02, 5e-4)
so = tune_pi_symmetric_optimum(1.0, 5e-4)
print(f"\ncurrent loop kp={mo.kp:.1f} ti={mo.ti * 1e3:.1f} ms")
print(f"speed loop   kp={so.kp:.1f} ti={so.ti * 1e3:.2f} ms")
