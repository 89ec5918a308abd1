"""One frozen stage: best responses, the equilibrium and the social optimum."""

import numpy as np

from bancoex.core import DEFAULT_GRID, RngStream
from bancoex.equilibrium import (exhaustive_social_optimum, improving_deviations,
                                 random_profile_welfare, sample_scenario, simultaneous_ne,
                                 social_welfare)
from bancoex.pdr_model import BPSK
from bancoex.sim import CampaignConfig

weights = CampaignConfig().resolved_weights()
rng = RngStream(4, ("demo", "ne"))
sc = sample_scenario(3, rng, weights, BPSK, DEFAULT_GRID, noise_dbm=-100.0)

print("own gains (dB):", np.round(10 * np.log10(sc.own_gain), 1))
ne = simultaneous_ne(sc)
print(f"equilibrium {DEFAULT_GRID.levels_dbm[ne.profile]} dBm after {ne.iterations} "
      f"rounds ({ne.method}); profitable deviations: {improving_deviations(sc, ne.profile)}")

opt, best = exhaustive_social_optimum(sc)
print(f"social optimum {DEFAULT_GRID.levels_dbm[opt]} dBm")
print(f"welfare: equilibrium {social_welfare(ne.profile, sc):.5f}, optimum {best:.5f}")

cloud = random_profile_welfare(sc, 5000, rng)
print(f"5000 random profiles: best {cloud.max():.5f}, median {np.median(cloud):.5f}")
