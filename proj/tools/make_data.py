"""Regenerates the shipped designs in data/ (deterministic)."""
import numpy as np
from pathlib import Path

out = Path(__file__).resolve().parent.parent / "data"
out.mkdir(exist_ok=True)


def canonical(raw, n):
    # Odds rescaling so that sum p = n.
    logit = np.log(raw / (1 - raw))
    lo, hi = -30.0, 30.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if (1 / (1 + np.exp(-(logit + mid)))).sum() < n:
            lo = mid
        else:
            hi = mid
    return 1 / (1 + np.exp(-(logit + 0.5 * (lo + hi))))


def write(name, cols):
    keys = list(cols)
    with open(out / name, "w") as f:
        f.write(",".join(keys) + "\n")
        for row in zip(*cols.values()):
            f.write(",".join(repr(float(v)) for v in row) + "\n")


rng = np.random.default_rng(20240611)
write("swor_n100.csv", {"x": np.round(rng.uniform(0, 10, 100), 6)})

p = canonical(rng.uniform(0.1, 0.45, 200), 50)
x = np.round(40 * p * (1 + 0.05 * rng.standard_normal(200)), 6)
write("rejective_n200.csv", {"x": x, "p": p})

p = canonical(rng.uniform(0.1, 0.45, 200), 50)
x = np.round(rng.gamma(2.0, 2.0, 200), 6)
write("poisson_n200.csv", {"x": x, "p": p})

p = canonical(rng.uniform(0.15, 0.85, 6), 3)
write("small_n6.csv", {"x": np.round(rng.uniform(1, 10, 6), 6), "p": p})

p = canonical(rng.uniform(0.1, 0.6, 8), 3)
write("small_n8.csv", {"x": np.round(rng.uniform(1, 10, 8), 6), "p": p})
