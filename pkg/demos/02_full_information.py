# %% [markdown]
# Full information: the selfish equilibrium curve h against the socially
# optimal curve g.  An arrival seeing (i, j) joins the busy queue iff j lies
# above the curve.
# %%
import numpy as np

from pollroute import ModelParams, social_solve, solve_equilibrium, verify_structure
from pollroute.social import average_cost_of_policy

params = ModelParams(0.3, 0.7, 6.0, 1.0)

eq = solve_equilibrium(params, 64, 64, check_monotone=True)
soc = social_solve(params, 64, 64)
print(f"equilibrium: {eq.iterations} horizon steps, residual {eq.residual:.1e}")
print(f"social:      {soc.value.iterations} sweeps, residual {soc.value.residual:.1e}")

# %% the two curves and the fluid line alpha * i
i = np.arange(1, 16)
print(" i   h   g  alpha*i")
for k in i:
    print(f"{k:2d} {eq.h.threshold(k):3d} {soc.g.threshold(k):3d}  {soc.alpha * k:5.1f}")

# %% structural checks on the equilibrium
for name, check in verify_structure(eq).checks.items():
    print(f"{name:22s} {'ok' if check.passed else check.counterexample}")

# %% selfish customers over-use the busy queue, which costs everyone
for name, policy in (("social", soc.value.policy), ("individual", eq.f_star)):
    print(f"{name:10s} cost rate {average_cost_of_policy(params, policy):.5f}")

# %% with free idle waiting the equilibrium is join the shortest queue
print(solve_equilibrium(params.with_costs(6.0, 0.0)).h.thresholds[:8])
