"""Frozen values of the one-dimensional reference solutions."""
import numpy as np
import pytest

from fermicrit.oracles import (DUALITY_CONSTANT, critical_ratio_radial,
                               gaussian_energy_radial, radial_coulomb_levels)


def test_duality_constant():
    assert DUALITY_CONSTANT == pytest.approx(0.6 * 0.4 ** (2 / 3), rel=1e-15)
    assert DUALITY_CONSTANT == pytest.approx(0.32573, abs=1e-5)


def test_hydrogen_levels_match_closed_form():
    # -Delta - 1/|x|: E_n = -1/(4 n^2)
    s = radial_coulomb_levels(0, n_levels=2)
    p = radial_coulomb_levels(1, n_levels=1)
    assert s == pytest.approx([-0.25, -0.0625], rel=1e-5)
    assert p[0] == pytest.approx(-0.0625, rel=1e-5)


def test_hydrogen_levels_scale_with_charge():
    s = radial_coulomb_levels(0, charge=2.0, n_levels=1)
    assert s[0] == pytest.approx(-1.0, rel=1e-5)


@pytest.fixture(scope="module")
def profile():
    return critical_ratio_radial()


def test_critical_ratio_frozen(profile):
    # frozen from the shooting oracle
    assert profile.ratio == pytest.approx(9.578299, rel=1e-5)


def test_critical_profile_pohozaev(profile):
    # -Q'' - 2Q'/r + Q = Q^{7/3}: kinetic = (3/5) nonlinear, mass = (2/5) nonlinear
    assert profile.kinetic / profile.nonlinear == pytest.approx(0.6, rel=1e-4)
    assert profile.mass / profile.nonlinear == pytest.approx(0.4, rel=1e-4)


def test_gaussian_energy_closed_form():
    w = 1.3
    e = gaussian_energy_radial(width=w, a=0.5)
    assert e["kinetic"] == pytest.approx(1.5 / w**2, rel=1e-10)
    assert e["external"] == pytest.approx(-2 / (np.sqrt(np.pi) * w), rel=1e-10)
    nl = (np.pi * w * w) ** (-1.0) * (3 / 5) ** 1.5
    assert e["nonlinear"] == pytest.approx(nl, rel=1e-10)
