# %% [markdown]
# # Vesicle in shear flow: the inclination angle
#
# An elliptical vesicle sits in a box whose top and bottom walls move in
# opposite directions. Without a viscosity contrast the shape settles at
# a fixed angle while the membrane circulates around it. A viscous
# interior makes the whole body rotate instead. This script runs both
# presets to t = 6 at a quarter of the default resolution, with a ten
# times larger time step, and prints the unwrapped angle of the
# principal axis. The equal-viscosity angle levels off near 20 degrees
# while the viscous interior has turned through more than 120 degrees
# and keeps going. The full comparison is `artifact preset shear_a` and
# `artifact preset shear_b`.

# %%
from membrane_fem.config import preset
from membrane_fem.driver import coarsened
from membrane_fem.dynamics import Simulation

steps, every = 1200, 200
sims = {name: Simulation(coarsened(preset(name, ["tau=5e-3"]), 4), seed=0) for name in ("shear_a", "shear_b")}

# %%
print("     t    angle (equal viscosity)   angle (viscous interior)")
for k in range(1, steps + 1):
    diags = {}
    for name, sim in sims.items():
        sim.step()
        diags[name] = sim.diagnostics()
    if k % every == 0:
        t = diags["shear_a"]["t"]
        print(f"{t:6.3f}   {diags['shear_a']['incl_angle']:10.2f}             "
              f"{diags['shear_b']['incl_angle']:10.2f}")
