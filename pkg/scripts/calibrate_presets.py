"""Re-derive the calibrated constants frozen in snspd_hack.presets.

Prints one block per preset; paste the numbers into presets.py when the
model changes.  Takes a few minutes.
"""

import argparse

from snspd_hack import calibration as cal
from snspd_hack.presets import PRESETS, physical_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", default=sorted(PRESETS))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for name in args.names:
        dev, cir, att = physical_preset(name)
        noise = cal.calibrate_noise(dev, cir, seed=args.seed)
        aft = cal.calibrate_afterpulse(dev, cir, att)
        rate = cal.reference_count_rate(dev, cir)
        hold = cal.blinding_threshold(dev, cir)
        print(f"{name}: noise_rms={noise.noise_rms!r} tau_sub={aft.tau_sub!r} ap_rate={aft.ap_rate!r} "
              f"reference_rate={rate!r} hold={hold!r} (fwhm={noise.fwhm:.4g}, thr={noise.threshold:.4g})")


if __name__ == "__main__":
    main()
