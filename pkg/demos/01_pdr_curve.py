"""Delivery ratio against SINR for the two modulations, and a refit."""

import numpy as np

from bancoex.pdr_model import (BPSK, DPSK, PdrModelParams, fit_compressed_exponential,
                               pdr_from_sinr, sinr_for_target_pdr)

sinr_db = np.arange(2.0, 8.5, 0.5)
gamma = 10 ** (sinr_db / 10)

print(" SINR dB   BPSK pdr   DPSK pdr")
for s, pb, pd in zip(sinr_db, pdr_from_sinr(gamma, BPSK), pdr_from_sinr(gamma, DPSK)):
    print(f"{s:8.1f} {pb:10.4f} {pd:10.4f}")

# the SINR a link must see to deliver 90% of its packets
for prm in (BPSK, DPSK):
    g = sinr_for_target_pdr(0.9, prm)
    print(f"{prm.modulation}: pdr 0.9 needs {10 * np.log10(g):.2f} dB")

# generate clean samples from a known curve, then recover it
truth = PdrModelParams.from_compressed(0.293, 6.358)
db = np.linspace(3.0, 10.0, 20)
samples = np.column_stack([db, pdr_from_sinr(10 ** (db / 10), truth)])
fitted, rmse = fit_compressed_exponential(samples)
print(f"refit: a_c={fitted.a_c:.4f}  b_c={fitted.b_c:.4f}  rmse={rmse:.2e}")
