import pytest

from snspd_hack import calibration
from snspd_hack.presets import physical_preset


@pytest.fixture(scope="module")
def small_cal():
    dev, cir, _ = physical_preset("device1")
    return calibration.calibrate_noise(dev, cir, n_photons=3000, noise_draws=2, seed=5), dev, cir


def test_noise_calibration_hits_target(small_cal):
    cal, _, _ = small_cal
    assert cal.fwhm == pytest.approx(calibration.JITTER_TARGET, abs=1e-12)
    # well below the threshold: the operating point is a clean 50% crossing
    assert 0 < cal.noise_rms < cal.threshold / 5


def test_noise_calibration_is_reproducible(small_cal):
    cal, dev, cir = small_cal
    again = calibration.calibrate_noise(dev, cir, n_photons=3000, noise_draws=2, seed=5)
    assert again == cal


def test_blinding_threshold_separates_holding_powers():
    dev, cir, _ = physical_preset("device1")
    thr = calibration.blinding_threshold(dev, cir)
    assert 1e-8 < thr < 1e-4
    assert calibration.holds_blinded(dev, cir, 2 * thr)
    assert not calibration.holds_blinded(dev, cir, 0.5 * thr)
