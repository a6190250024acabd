# %% [markdown]
# # Step initial data and the current
#
# With every positive site occupied, the m-th particle never passes site m,
# so its distribution function equals one from x = m onward.  For p < q the
# same numbers give the tail of the current: the chance that at least m
# particles sit at or left of x.

# %%
import numpy as np

from asepdist import ModelParams, OneSidedAlternating, SimConfig, StepPositive, mc_simulate, prob_onesided, prob_step
from asepdist.formulas import current_tail_prob

params = ModelParams(0.3)

# %% [markdown]
# ## Three integrands, one answer
#
# The product form, the determinant form and the unsymmetrised
# permutation sum give the same terms.

# %%
for form in ("product", "det", "unsym"):
    rep = prob_step(1, 0, 0.5, params, form=form, kmax=4, raise_on_fail=False)
    print(f"{form:>8}: " + " ".join(f"{tv.value.real:+.6e}" for tv in rep.terms))

# %% [markdown]
# ## Distribution of the first two particles

# %%
xs = range(-4, 3)
for m in (1, 2):
    vals = [prob_step(m, x, 1.0, params).value for x in xs]
    print(f"m={m}: " + " ".join(f"{v:.5f}" for v in vals))

# %% [markdown]
# ## Current tail

# %%
for x in (-2, -1, 0):
    print(f"P(current at {x} >= 1) = {current_tail_prob(x, 1.0, 1, params):.6f}")

# %% [markdown]
# ## One-sided alternating data against simulation

# %%
t = 1.0
emp = mc_simulate(SimConfig(params, OneSidedAlternating(1), t_end=t, trials=200_000, seed=2, tagged_origin=1))
z = []
for x in range(-3, 6):
    f = prob_onesided(1, 1, x, t, params).value
    z.append((f - emp.at(x)) / emp.ci_at(x))
    print(f"x={x:2d}: series {f:.6f} simulated {emp.at(x):.6f}")
print(f"largest |z| {np.max(np.abs(z)):.2f}")

# %% [markdown]
# Same check for the step data.

# %%
emp = mc_simulate(SimConfig(params, StepPositive(), t_end=t, trials=200_000, seed=3, tagged_origin=1))
print(" ".join(f"{(prob_step(1, x, t, params).value - emp.at(x)) / emp.ci_at(x):+.2f}" for x in range(-3, 2)))
