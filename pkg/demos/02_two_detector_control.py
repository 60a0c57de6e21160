"""Eve decides which detector clicks.

Two blinded detectors sit behind a passive beam splitter.  To make
detector 0 click at 0 and 30 ns, Eve drops its light by 20 dB for 20 ns
before each click; because the splitter is passive, detector 1 sees the
complementary +3 dB surge over the same windows.  Detector 0 clicks on
cue, detector 1 only shows the pulse from the blinding onset.

    python demos/02_two_detector_control.py [--trials 2000]
"""

import argparse

from snspd_hack import attack
from snspd_hack.presets import preset

ap = argparse.ArgumentParser()
ap.add_argument("--trials", type=int, default=2000)
args = ap.parse_args()

p = preset("device1")
sc = attack.reference_scenario(p.attack)
w0, w1 = attack.compile_scenario(sc)


def show(name, w):
    print(f"{name}:")
    for a, b, pw in w.segments:
        print(f"  [{a * 1e9:7.1f}, {b * 1e9:7.1f}) ns  {pw * 1e6:7.3f} µW")


show("detector 0 light", w0)
show("detector 1 light", w1)

rep = attack.run_scenario(sc, p.device, p.circuit, seed=0)
for k, d in enumerate(rep.detectors):
    ts = ", ".join(f"{t * 1e9:.2f}" for t in d.clicks.t)
    print(f"\ndetector {k}: clicks at [{ts}] ns")
    print(f"  planned {d.n_planned}, matched {d.n_matched}, premature {d.n_premature}, extra {d.n_extra}, "
          f"V2 over the window {d.dc_monitor_mv:.3f} mV")
print(f"\nfake rate {rep.achieved_rate / 1e6:.1f} MHz (ceiling {rep.max_rate / 1e6:.1f} MHz)")

summ = attack.scenario_trials(sc, p.device, p.circuit, args.trials, seed=1)
print(f"\n{args.trials} repeats: detector 0 matched {summ.n_matched[0]}/{summ.n_planned[0]}, "
      f"extra {summ.n_extra[0]}; detector 1 extra {summ.n_extra[1]}, premature {summ.n_premature[1]}")

try:
    attack.AttackScenario((0.0, 25e-9), (), p.attack, sc.blind_window).validate()
except attack.PlanError as exc:
    print(f"\n25 ns spacing is refused: {exc}")
