"""How many of eight BANs end up sharing a slot on four channels."""

import numpy as np

from bancoex.coexistence import CoexistenceParams, active_count_distribution, sample_active_set
from bancoex.core import RngStream

M, NC = 8, 4
analytic = active_count_distribution(M, NC)
rng = RngStream(3, ("demo", "coex"))
draws = np.bincount([len(sample_active_set(CoexistenceParams(M, NC), rng))
                     for _ in range(20_000)], minlength=M + 1)[1:]
empirical = draws / draws.sum()

print(" m   analytic   sampled")
for m, (a, e) in enumerate(zip(analytic, empirical), start=1):
    print(f"{m:2d} {a:10.4f} {e:9.4f}")
print(f"mean active BANs: {np.dot(np.arange(1, M + 1), analytic):.2f}")
