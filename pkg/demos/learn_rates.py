"""Learn a per-cell arrival-rate map from a robot's own detections.

A robot parked in a corridor sees people pass through its detection disc.
Each step it folds the counts into a Gamma posterior per cell. After a while
the posterior mean settles on the true rate and the posterior variance shrinks.

    python3 demos/learn_rates.py
"""

import numpy as np

from psbt import GridSpec, RateGrid, simulate_arrivals, update

spec = GridSpec(9, 9)
truth = np.zeros(spec.shape)
truth[4, 3:6] = [0.02, 0.05, 0.02]  # a doorway with traffic at its center

stream = simulate_arrivals(RateGrid.from_rates(truth, spec), 2000.0, dt=1.0, seed=1)
grid = RateGrid(spec)
pose = (4.5, 4.5)
step = 1.0
times = stream.times
k = 0
for t in np.arange(0.0, 2000.0, step):
    counts = {}
    while k < len(times) and times[k] < t + step:
        c = (int(stream.cx[k]), int(stream.cy[k]))
        counts[c] = counts.get(c, 0) + int(stream.counts[k])
        k += 1
    update(grid, pose, counts, duration=step)
    if t + step in (10, 100, 2000):
        est = grid.rates[4, 3:6]
        sd = np.sqrt(grid.variance[4, 3:6])
        print(f"after {t + step:6.0f} s  rate/s " + "  ".join(
            f"{e:.4f}+-{s:.4f}" for e, s in zip(est, sd)))

print("true rate/s            " + "  ".join(f"{v:.4f}" for v in truth[4, 3:6]))
