# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Lower bounds, sector constants and contractions
#
# The drift and potential terms are absorbed by a small multiple of the
# Dirichlet integral plus a constant shift. With bounded coefficients that
# shift has a closed form. For a singular drift it is estimated from the
# discrete eigenproblem, with a safety margin.

# %%
from twoscale import DIRICHLET, build_grid, make_preset
from twoscale.sampling import random_fields
from twoscale.forms import check_unit_contraction, diagnose, estimate_beta0

# %%
bd = make_preset("bounded-drift")
for lam in (1.0, 0.5, 0.1):
    print(lam, estimate_beta0(bd, lam))

# %% [markdown]
# The empirical shift for the singular drift is zero at λ=1 because the
# Dirichlet integral already dominates the drift term. It becomes positive
# only when λ is small.

# %%
g = build_grid(DIRICHLET, 32)
sd = make_preset("singular-drift")
for lam in (1.0, 0.1):
    print(lam, estimate_beta0(sd, lam, "empirical", grid=g))

# %%
d = diagnose(build_grid(DIRICHLET, 16), bd, 0.25)
print(d.as_dict())

# %% [markdown]
# For a preset whose drift is the gradient of a superharmonic function and
# whose potential is nonnegative, cutting a field off at 0 and 1 does not
# raise the energy.

# %%
a3 = make_preset("concave-drift", eta=1.0)
g16 = build_grid(DIRICHLET, 16)
vals = []
for u in random_fields(g16, 10, 3):
    u = 3.0 * u / abs(u).max()
    vals.append(check_unit_contraction(g16, a3, 0.25, u).value)
print(min(vals), max(vals))
