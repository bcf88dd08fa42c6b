# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Cell problems and effective coefficients
#
# We solve the periodic corrector problems on the unit cell for a few presets
# and look at the resulting effective tensor. The layered medium has a
# closed form to compare against: the harmonic mean across the layers and the
# arithmetic mean along them.

# %%
import math

import numpy as np

from twoscale import PERIODIC, assemble_effective, build_grid, make_preset, solve_correctors

# %%
y = build_grid(PERIODIC, 128)
layered = make_preset("layered")
cs = solve_correctors(layered, y)
eff = assemble_effective(layered, cs)
print(eff.A[0])
print("expected diag:", math.sqrt(3), 2.0)

# %% [markdown]
# Refining the cell grid shows the error in the harmonic-mean entry shrinking
# roughly fourfold per refinement.

# %%
for m in (16, 32, 64, 128):
    e = assemble_effective(layered, solve_correctors(layered, build_grid(PERIODIC, m)))
    print(m, abs(e.A[0, 0, 0] - math.sqrt(3)))

# %% [markdown]
# The checkerboard is symmetric under swapping the axes, so its effective
# tensor is a multiple of the identity.

# %%
cb = make_preset("checkerboard")
e = assemble_effective(cb, solve_correctors(cb, build_grid(PERIODIC, 64)))
print(np.round(e.A[0], 5), "M =", round(e.M, 4))

# %% [markdown]
# A gradient drift averages out completely: the first corrector absorbs it,
# so the effective first-order coefficient is close to zero.

# %%
gd = make_preset("gradient-drift")
e = assemble_effective(gd, solve_correctors(gd, y))
print("C_eff =", e.C[0], " B_eff =", e.B[0], " k_eff =", e.k[0])
