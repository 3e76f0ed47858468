"""Plan a person search for a robot stranded at the far end of an office.

The planner samples busy places, orders them with a genetic tour solver and
scores every wait/search/skip assignment along the tour with a Markov chain.
The best tree is printed with its success curve, next to the simple baselines.

    python3 demos/plan_search.py
"""

from psbt import PlannerConfig, plan_baseline, plan_psbt
from psbt.scenarios import stor_environment

env = stor_environment()
problem = env.problem(PlannerConfig(n_places=6, seed=0))

best = plan_psbt(problem)
print(f"chosen tree: {best.tree.label}")
print(f"out of {best.meta['n_candidates']} candidates, "
      f"{best.meta['n_excluded']} excluded for risky searches")
for t in (20, 60, 100, 140, 200):
    print(f"  P(found help by {t:3d} s) = {best.score.p_success_at([t])[0]:.3f}")

print("\nbaselines at 140 s:")
for name in ("W", "NW", "GM", "RND"):
    p = plan_baseline(problem, name)
    print(f"  {name:4s} {p.score.p_success_at([140])[0]:.3f}   {p.tree.label}")
