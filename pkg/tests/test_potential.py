import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fermicrit.errors import ConfigurationError, DomainError
from fermicrit.grid import make_grid
from fermicrit.potential import build_coulomb, coulomb_values, hardy_bound_check
from fermicrit.verify import smooth_random_field

GRID = make_grid(16, 16.0)
coord = st.floats(-3.5, 3.5, allow_nan=False)
point = st.tuples(coord, coord, coord)


def test_self_value_at_node_is_minus_two_over_spacing():
    pot = build_coulomb(GRID, [(0.0, 0.0, 0.0)])
    assert pot.values.min() == pytest.approx(-2.0 / GRID.spacing, rel=1e-14)


def test_values_are_read_only():
    pot = build_coulomb(GRID, [(0.0, 0.0, 0.0)])
    with pytest.raises(ValueError):
        pot.values[0, 0, 0] = 1.0


@settings(max_examples=20, deadline=None)
@given(point, point)
def test_adding_a_center_lowers_every_value(p, q):
    if np.allclose(p, q):
        return
    one = build_coulomb(GRID, [p]).values
    two = build_coulomb(GRID, [p, q]).values
    assert np.all(two < one)


def test_lattice_shift_shifts_values():
    h = GRID.spacing
    a = coulomb_values(GRID, [(0.3, -0.2, 0.1)])
    b = coulomb_values(GRID, [(0.3 + 2 * h, -0.2, 0.1 - h)])
    assert np.allclose(np.roll(a, (2, 0, -1), axis=(0, 1, 2))[4:-4, 4:-4, 4:-4],
                       b[4:-4, 4:-4, 4:-4], atol=1e-12)


def test_nearest_center():
    pot = build_coulomb(GRID, [(-2.0, 0.0, 0.0), (2.0, 0.0, 0.0)])
    assert pot.nearest_center((1.5, 0.3, 0.0)) == 1
    assert pot.nearest_center((-0.5, 0.0, 0.0)) == 0


@pytest.mark.parametrize("centers", [
    [],
    [(0.0, 0.0, 0.0), (0.0, 0.0, 0.0)],
    [(7.9, 0.0, 0.0)],
    [(np.nan, 0.0, 0.0)],
])
def test_invalid_centers_rejected(centers):
    with pytest.raises(ConfigurationError):
        build_coulomb(GRID, centers)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.25, 1.0, 4.0]))
def test_hardy_bound_slack_nonnegative(seed, eps):
    g = make_grid(24, 16.0)
    pot = build_coulomb(g, [(0.3, 0.2, 0.1), (-2.1, 1.3, 0.4)])
    f = smooth_random_field(g, np.random.default_rng(seed), 1, width=2.0)[0]
    assert hardy_bound_check(g, pot, f, eps) >= 0


def test_hardy_bound_rejects_degenerate_input():
    pot = build_coulomb(GRID, [(0.0, 0.0, 0.0)])
    with pytest.raises(DomainError):
        hardy_bound_check(GRID, pot, np.zeros(GRID.shape), 1.0)
    with pytest.raises(DomainError):
        hardy_bound_check(GRID, pot, np.ones(GRID.shape), 0.0)
