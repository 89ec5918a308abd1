"""Game power control against the baselines on a reduced campaign.

Full-size campaigns (20 sets x 50 games) take about half a minute each; this
one uses a quarter of the games.
"""

from bancoex.controllers import Controller
from bancoex.sim import CampaignConfig, run_campaign

base = CampaignConfig(n_channel_sets=10, games_per_set=25)
controllers = [Controller("game"), Controller("sah"), Controller("sinr_balance"),
               Controller("constant", constant_dbm=-10.0), Controller("constant", constant_dbm=0.0)]

print(f"{'controller':28s} {'at target':>9s} {'power':>9s} {'settles':>8s}")
for c in controllers:
    rep = run_campaign(base.replace(controller=c))
    settle = rep.convergence_stage if rep.converged else "never"
    print(f"{c.label:28s} {rep.steady_pct:8.1f}% {rep.steady_power_dbm:6.1f} dBm {settle!s:>8}")
