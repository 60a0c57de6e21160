"""Anatomy of a fake click.

A shunted SNSPD at 0.9 of its critical current sees one photon, then the
same detector is blinded with 10 µW and given a single 20 ns carve-out.
Both produce a pulse that crosses the 50% discriminator; the fake one is
smaller, because only ~63% of the bias current returned to the wire before
the light came back.

    python demos/01_fake_pulse_anatomy.py [--plot fake.png]
"""

import argparse
import math

from snspd_hack import analysis
from snspd_hack.engine import EventKind, simulate
from snspd_hack.presets import preset
from snspd_hack.stimulus import OpticalWaveform, build_control_diagram, photon_energy

ap = argparse.ArgumentParser()
ap.add_argument("--plot", help="write a PNG overlay (needs matplotlib)")
args = ap.parse_args()

p = preset("device1")
dev = p.device.replace(eta=1.0)
cir = p.circuit
thr = analysis.default_threshold(dev, cir)
print(f"device1: i_bias/i_c = {cir.i_bias / dev.i_c:.2f}, L/R = {dev.l_k / cir.r_shunt * 1e9:.1f} ns, "
      f"threshold = {thr * 1e3:.1f} mV")

# --- a real photon -----------------------------------------------------------------
real = simulate(dev, cir, OpticalWaveform((), ((0.0, photon_energy(1550e-9)),)), (-250e-9, 100e-9), seed=1)
cs_real = analysis.discriminate(real.trace, thr)
t_sc = real.events_of(EventKind.SC_RECOVERED)[0].t
print(f"\nphoton at t=0: click at {cs_real.t[0] * 1e12:.0f} ps, peak {cs_real.peak_v[0] * 1e3:.1f} mV, "
      f"back to superconducting after {t_sc * 1e9:.1f} ns")

# --- blinded, one carve-out ending at t=0 --------------------------------------------
target, _ = build_control_diagram(p.attack, [0.0], -200e-9, 100e-9)
fake = simulate(dev, cir, target, (-250e-9, 100e-9), seed=1)
cs_fake = analysis.discriminate(fake.trace, thr)
print("\nblinding from -200 ns, carve-out [-20 ns, 0):")
for t, v in cs_fake.clicks:
    tag = "blinding onset" if t < -150e-9 else "fake click"
    print(f"  {tag:<15} t = {t * 1e9:8.3f} ns   peak = {v * 1e3:6.1f} mV")

ratio = cs_fake.peak_v[-1] / cs_real.peak_v[0]
print(f"\nfake/real peak ratio {ratio:.2f}")

# DC-coupled, the carve-out is a notch in the blinded plateau: the wire takes
# back 1 - 1/e of the bias current in one L/R time
dc = simulate(dev, cir.replace(f_hp="dc", noise_rms=0.0), target, (-250e-9, 100e-9), seed=1).trace
plateau, notch = dc.samples[dc.index_of(-25e-9)], dc.samples[dc.index_of(0.0)]
print(f"DC plateau {plateau * 1e3:.1f} mV, notch to {notch * 1e3:.1f} mV: depth {(plateau - notch) / plateau:.3f}"
      f" (RL: 1 - 1/e = {1 - math.exp(-1):.3f})")

if args.plot:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(real.trace.times * 1e9, real.trace.samples * 1e3, "r", lw=0.8, label="photon")
    ax.plot(fake.trace.times * 1e9, fake.trace.samples * 1e3, "k", lw=0.8, label="fake")
    ax.axhline(thr * 1e3, ls=":", c="grey")
    ax.set_xlabel("t (ns)")
    ax.set_ylabel("amplifier output (mV)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.plot, dpi=150)
    print(f"wrote {args.plot}")
