"""Can the victim notice?

1. The DC bias-port voltage (V2) rises with the fraction of time the
   detector is blinded.
2. With a DC-coupled readout the fake pulses sit on a plateau and have a
   different shape; a linear classifier separates them.
3. But a patient Eve who blinds only 5% of the time and resends photons for
   the rest keeps V2 where normal high-rate counting leaves it.

    python demos/04_countermeasures.py [--pulses 200]   (about a minute)
"""

import argparse

from snspd_hack import countermeasure as cm
from snspd_hack.presets import preset

ap = argparse.ArgumentParser()
ap.add_argument("--pulses", type=int, default=200)
args = ap.parse_args()

p = preset("device1")
sweep = cm.v2_sweep(p.device, p.circuit, [0.0, 0.1, 0.2, 0.3, 0.4, 0.5], p.attack)
print("duty   V2 (mV)  alarm")
for d, v, a in zip(sweep.duty, sweep.mv, sweep.alarms()):
    print(f"{d:4.1f}   {v:7.3f}  {'!' if a else ''}")
print(f"fit: V2 = {sweep.intercept:.3f} + {sweep.slope:.3f}·duty mV, R² = {sweep.r2:.5f}")

shape = cm.shape_discrimination(p.device, p.circuit.replace(f_hp="dc"), p.attack, args.pulses)
print(f"\nDC-coupled shape classifier: AUC {shape.auc:.3f} on {shape.n_real}+{shape.n_fake} held-out pulses"
      f" (discriminator alone: {shape.auc_threshold_only:.2f})")
print("  confusion:", shape.confusion)

ev = cm.evasion(p.device, p.circuit, p.attack, duty=0.05)
print(f"\nlow-duty attack: {ev.fake_rate / 1e6:.2f} MHz of fake clicks, resend rate {ev.resend_rate:.3g} /s")
print(f"  V2 {ev.v2_attack_mv:.4f} mV vs normal {ev.v2_normal_mean_mv:.4f} ± {ev.v2_normal_sigma_mv:.4f} mV "
      f"(z = {ev.z:+.1f}); alarm at {ev.alarm_mv} mV -> {'evades' if ev.evades else 'caught'}")
