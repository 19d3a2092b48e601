# %% [markdown]
# Deterministic fluid version: the optimal policy feeds the idle queue until
# y = alpha * x, and the contents at successive switches shrink by beta.
# %%
from pollroute import ModelParams, fluid_policy_simulate, lqr_trajectory, normalize_initial_state
from pollroute.fluid import brute_force_lqr, optimal_coefficients, riccati_solve

params = ModelParams(0.3, 0.7, 6.0, 1.0)
co = optimal_coefficients(params.rho)
print(co)
print("Riccati p =", riccati_solve(params.rho).p)

# %% switch-by-switch optimum from one unit of fluid in the busy queue
tr = lqr_trajectory(1.0, params)
for cy in tr.cycles[:4]:
    print(f"k={cy.k} x={cy.x:.5f} u={cy.u:.5f} feed for {cy.v:.5f}, cost {cy.cycle_cost:.5f}")
print("total", tr.total_cost)

# %% the state-feedback line gives the same cost; steeper or flatter lines cost more
for slope in (0.0, 1.0, co.alpha, 2.0, float("inf")):
    print(f"slope {slope:>4}: {fluid_policy_simulate(1.0, 0.0, params, slope).total_cost:.6f}")

# %% a crude grid search over four switches lands on the same first control
u, cost = brute_force_lqr(1.0, params.rho, horizon=4)
print("brute force u0 =", u[0], "vs", co.u_ratio)

# %% starting with fluid in both queues: rewind to an equivalent empty-idle start
print(normalize_initial_state(1.0, 2.0, params))
