# %% [markdown]
# The stochastic system by regenerative simulation: checking the closed forms
# and ranking policies under common random numbers.
# %%
from pollroute import (ModelParams, NoInfoSplit, PartialSplit, SimConfig, Table, compare_policies,
                       simulate, social_solve, solve_equilibrium)
from pollroute.static import no_info_means

params = ModelParams(0.3, 0.7, 6.0, 1.0)

# %% no-information means against the closed forms
r = simulate(SimConfig(params, NoInfoSplit(0.2), 50_000, seed=3))
m = no_info_means(params, 0.2)
for k in ("L11", "L12", "L21", "L22"):
    est = getattr(r, k)
    print(f"{k}: simulated {est.value:.4f} +- {est.se:.4f}, exact {getattr(m, k):.4f}")
print("cycle length", r.mean_cycle_length, "expected", 0.7 / (0.3 * 0.4))

# %% every policy sees the same arrivals and services, so differences are sharp
cmp_ = compare_policies(params, {
    "social": Table(social_solve(params).value.policy),
    "individual": Table(solve_equilibrium(params).f_star),
    "idle first": PartialSplit(0.0),
    "no info 1/2": NoInfoSplit(0.5),
}, num_cycles=50_000, seed=3)
for name, est in cmp_.ranking:
    print(f"{name:12s} {est.value:.4f} +- {est.se:.4f}")
for d in cmp_.differences:
    print(f"{d.first} - {d.second}: {d.difference:+.4f} ({d.z:+.1f} SE)")
