"""What one channel set looks like: people walking, body gains, cross gains."""

import numpy as np

from bancoex.channel import ChannelModel, generate_channel_set
from bancoex.core import RngStream

model = ChannelModel()
trace = generate_channel_set(n_bans=4, n_stages=200, stage_duration_s=0.05,
                             rng=RngStream(1, ("demo", "channel")), model=model)

onbody_db = 10 * np.log10(trace.onbody)
print("on-body gain, dB (mean / 5th pct / 95th pct) per BAN")
for i, row in enumerate(onbody_db):
    print(f"  BAN {i}: {10 * np.log10(np.mean(10 ** (row / 10))):7.1f} "
          f"{np.percentile(row, 5):7.1f} {np.percentile(row, 95):7.1f}")

cross_db = 10 * np.log10(trace.interbody[0, 1])
print(f"BAN 0 -> 1 cross gain over 10 s: min {cross_db.min():.1f} dB, "
      f"median {np.median(cross_db):.1f} dB, max {cross_db.max():.1f} dB")
# the cross gain swings by tens of dB as the two people move and fade
print(f"interquartile range {np.subtract(*np.percentile(cross_db, [75, 25])):.1f} dB")
