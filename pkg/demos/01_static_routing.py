# %% [markdown]
# Static routing: customers who cannot see the queues (no information) or who
# only know which queue is being served (partial information).
# %%
import numpy as np

from pollroute import ModelParams
from pollroute.static import (classify_no_info_nash, classify_no_info_social, classify_partial_nash,
                              classify_partial_social, no_info_cost, no_info_means,
                              partial_info_costs)

params = ModelParams(0.3, 0.7, 6.0, 1.0)
print("rho =", params.rho)

# %% mean queue lengths and cost per customer as the split varies
print(" p     L11    L21    C")
for p in np.linspace(0, 1, 6):
    m = no_info_means(params, p)
    print(f"{p:.1f}  {m.L11:.4f} {m.L21:.4f} {no_info_cost(params, p).C:.4f}")

# %% without information both the social planner and selfish customers split evenly here
print(classify_no_info_social(params).to_dict())
print(classify_no_info_nash(params).to_dict())

# %% knowing which queue is busy, the planner sends everyone to the idle queue...
print(classify_partial_social(params).to_dict())

# %% ...and so do selfish customers while c(1-rho) > d, but not once idle waiting gets dear
for d in (1.0, 3.0, 4.0, 7.0):
    n = classify_partial_nash(params.with_costs(6.0, d))
    print(f"d={d}: equilibrium {n.label!r}, matches social optimum: {n.matches_social}")

# %% cost of joining busy vs idle under the idle-first split
C, CB, CI = partial_info_costs(params, 0.0)
print(f"average {C:.4f}, join busy {CB:.4f}, join idle {CI:.4f}")
