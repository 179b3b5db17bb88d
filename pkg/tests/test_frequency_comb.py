import pytest

from surftrap.constants import HYPERFINE_SPLITTING, TWO_PI
from surftrap.frequency_comb import (CombConfig, plan, raman_resonance, resonance_sensitivity,
                                     sideband_target, tuned)

TRAP = TWO_PI * 2.1e6


def test_resonant_configuration_gives_zero():
    c = CombConfig()
    c = CombConfig(delta_aom=c.delta_hf - c.harmonic_n * c.omega_rep)
    assert raman_resonance(c) == pytest.approx(0.0, abs=1e-6)


def test_tooth_difference_near_hyperfine():
    c = CombConfig()
    assert c.harmonic_n * c.omega_rep / TWO_PI == pytest.approx(12.616e9, rel=1e-9)
    # the remaining offset is small enough for an AOM
    assert abs(HYPERFINE_SPLITTING - c.harmonic_n * c.omega_rep) / TWO_PI < 50e6
    assert HYPERFINE_SPLITTING / TWO_PI == pytest.approx(12.6e9, rel=5e-3)


@pytest.mark.parametrize("eps", [1.0, -37.5, 1e3])
def test_rep_rate_sensitivity(eps):
    c = CombConfig()
    shifted = CombConfig(omega_rep=c.omega_rep + eps)
    assert raman_resonance(shifted) - raman_resonance(c) == pytest.approx(c.harmonic_n * eps, rel=1e-6)
    assert resonance_sensitivity(c) == 166


def test_carrier_target_is_rearrangement():
    c = CombConfig()
    assert sideband_target(c, TRAP, "carrier") == c.delta_hf - c.harmonic_n * c.omega_rep


def test_sideband_targets():
    c = CombConfig()
    carrier = sideband_target(c, TRAP, "carrier")
    red = sideband_target(c, TRAP, "red")
    blue = sideband_target(c, TRAP, "blue")
    assert red == pytest.approx(carrier - TRAP, abs=1e-3)
    assert blue - carrier == pytest.approx(carrier - red, abs=1e-3)


@pytest.mark.parametrize("branch, sign", [("carrier", 0), ("red", -1), ("blue", 1)])
def test_round_trip(branch, sign):
    c = tuned(CombConfig(), TRAP, branch)
    assert raman_resonance(c) == pytest.approx(sign * TRAP, abs=1e-3)


def test_plan_rows_in_hertz():
    p = plan(CombConfig(), TRAP)
    rows = dict(p.as_rows())
    assert rows["red_sideband"] - rows["carrier"] == pytest.approx(-2.1e6, abs=1e-3)
    assert rows["n_omega_rep"] == pytest.approx(166 * 76e6, rel=1e-12)


def test_validation():
    with pytest.raises(ValueError):
        CombConfig(omega_rep=0.0)
    with pytest.raises(ValueError):
        CombConfig(harmonic_n=0)
    with pytest.raises(ValueError):
        CombConfig(harmonic_n=2.5)
    with pytest.raises(ValueError):
        sideband_target(CombConfig(), -1.0, "red")
