"""More BANs in the same slot: delivery falls and power climbs."""

from bancoex.sim import CampaignConfig, run_campaign

base = CampaignConfig(n_channel_sets=5, games_per_set=20)
print(" m  at target   power")
for m in range(2, 9):
    rep = run_campaign(base.replace(coexistence_mode="fixed_m", fixed_m=m))
    print(f"{m:2d} {rep.steady_pct:9.1f}% {rep.steady_power_dbm:6.1f} dBm")
