"""Timing jitter and afterpulsing of real and fake clicks.

Fake clicks are at least as sharp in time as real ones and lack the SNAP
avalanche tail.  Their price is afterpulsing: a long blinding pulse leaves
heat in the substrate, and the recovering detector may click on its own.

    python demos/03_timing_and_afterpulses.py [--photons 20000]
"""

import argparse

import numpy as np

from snspd_hack import analysis
from snspd_hack.presets import preset

ap = argparse.ArgumentParser()
ap.add_argument("--photons", type=int, default=20000)
args = ap.parse_args()

p = preset("device1")
real = analysis.single_photon_jitter(p.device.replace(eta=1.0), p.circuit, args.photons, seed=1)
st = analysis.fake_click_determinism(p.device, p.circuit, p.attack, 100, 50, seed=1, return_stats=True)
fake = analysis.jitter_from_delays(st.delays)

print(f"{'':10}{'FWHM (ps)':>10}{'tail > 3σ':>11}{'clicks':>8}")
for name, r in (("photon", real), ("fake", fake)):
    print(f"{name:10}{r.fwhm * 1e12:10.0f}{r.tail_fraction * 100:10.2f}%{r.n_clicks:8d}")


def sparkline(r, width=60):
    c = r.counts.astype(float)
    lo = np.argmax(c > 0)
    c = c[lo:lo + width]
    bars = " ▁▂▃▄▅▆▇█"
    return "".join(bars[int(round(8 * x / c.max()))] for x in c)


print("\nphoton histogram (10 ps bins):", sparkline(real))
print("fake histogram   (10 ps bins):", sparkline(fake))

print("\nafterpulse probability per 100 µs period after a continuous blinding pulse:")
for d in (1e-6, 2e-6, 5e-6, 10e-6):
    pr = analysis.afterpulse_probability(p.device, p.circuit, p.attack, d, 100e-6, 1000)
    n = int(d // p.attack.period)
    print(f"  {d * 1e6:4.0f} µs (duty {d / 100e-6:4.0%}): {pr:5.1%}   per fake at 33 MHz: {pr / n:.4%}")
