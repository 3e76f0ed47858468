"""Check the planned trees against seeded simulation.

Every strategy runs against the same list of per-run seeds, so differences come
from the plans rather than from luck. The simulated success rate is printed
beside what the Markov model predicted for each tree.

    python3 demos/compare_strategies.py [runs]
"""

import sys

from psbt import SimConfig, evaluate
from psbt.scenarios import cafe_environment, stor_environment

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

for env in (stor_environment(), cafe_environment()):
    report = evaluate(["PSBT", "GM", "NW", "W"], env.problem(), SimConfig(runs=runs, seed=3))
    print(f"\n{env.name}: {runs} runs per strategy")
    print("strategy  sim P(140s)  model P(140s)  mean time to help (s)")
    for name in ("PSBT", "GM", "NW", "W"):
        r = report[name]
        sim = r.batch.success_by(140.0)[0]
        model = r.plans[0].score.p_success_at([140.0])[0]
        print(f"{name:8s}  {sim:11.3f}  {model:13.3f}  {r.t_r_mean:10.1f}")
