import numpy as np
import pytest

from fermicrit.errors import ConfigurationError, DimensionError
from fermicrit.grid import make_grid
from fermicrit.potential import build_coulomb
from fermicrit.solver import (SolverConfig, initial_orbitals, minimize, nonexistence_demo,
                              scaled_family_energy, scf_refine, virial_scale, write_trace_csv)
from fermicrit.state import DensityMatrix, lowdin

GRID = make_grid(24, 16.0)
POT1 = build_coulomb(GRID, [(0.3, 0.2, 0.1)])
POT2 = build_coulomb(GRID, [(-1.5, 0.0, 0.0), (1.5, 0.2, 0.0)])
CFG = SolverConfig(max_iters=400, grad_tol=1e-5)


@pytest.fixture(scope="module")
def hydrogen():
    return minimize(POT1, 0.0, 1.0, CFG)


@pytest.mark.parametrize("kwargs", [
    {"max_iters": 0}, {"grad_tol": 0.0}, {"armijo_c": 1.0}, {"armijo_shrink": 0.0},
    {"scf_mix": 0.0}, {"seed": -1},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SolverConfig(**kwargs)


def test_initial_orbitals_orthonormal_and_seeded():
    u = initial_orbitals(GRID, POT2.centers, 3, seed=4)
    assert np.max(np.abs(GRID.gram(u) - np.eye(3))) < 1e-10
    assert np.array_equal(u, initial_orbitals(GRID, POT2.centers, 3, seed=4))
    assert not np.array_equal(u, initial_orbitals(GRID, POT2.centers, 3, seed=5))


def test_hydrogen_ground_state(hydrogen):
    # coarse grid: within a few percent of -1/4
    assert hydrogen.converged
    assert hydrogen.multipliers[0] == pytest.approx(-0.25, rel=0.05)
    assert hydrogen.total == pytest.approx(hydrogen.multipliers[0], rel=1e-6)
    assert hydrogen.gamma.orthonormality_error() < 1e-8


def test_energy_decreases_along_the_trace(hydrogen):
    values = [t.value for t in hydrogen.trace]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_determinism_is_bitwise():
    a = minimize(POT2, 2.0, 2.0, CFG)
    b = minimize(POT2, 2.0, 2.0, CFG)
    assert a.iterations == b.iterations
    assert a.total == b.total
    assert np.array_equal(a.gamma.orbitals, b.gamma.orbitals)


def test_two_particle_state_and_refinement():
    st = minimize(POT2, 2.0, 2.0, CFG)
    assert st.converged and st.total < 0
    assert st.gamma.orthonormality_error() < 1e-8
    assert np.all(np.diff(st.multipliers) >= 0)
    ref = scf_refine(st, POT2, 2.0, CFG)
    assert np.max(ref.residuals) <= np.max(st.residuals)
    assert ref.spectrum is not None and len(ref.spectrum) == 4
    assert ref.aufbau_ok(1e-3)


def test_fractional_layout_energy_between_integers():
    e = [minimize(POT1, 1.0, lam, CFG).total for lam in (0.5, 1.0, 1.5)]
    assert e[0] >= e[1] - 2e-5 and e[1] >= e[2] - 2e-5


def test_warm_start_on_foreign_grid_rejected(hydrogen):
    other = build_coulomb(make_grid(16, 16.0), [(0.0, 0.0, 0.0)])
    with pytest.raises(DimensionError):
        minimize(other, 0.0, 1.0, CFG, warm_start=hydrogen.gamma)


def test_negative_coupling_rejected():
    with pytest.raises(ConfigurationError):
        minimize(POT1, -1.0, 1.0, CFG)


def test_trace_csv(tmp_path, hydrogen):
    path = tmp_path / "trace.csv"
    write_trace_csv(hydrogen.trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,energy,tangent_grad_norm,step"
    assert len(lines) == len(hydrogen.trace) + 1


def _gaussian_state(grid, width=1.0):
    u = np.exp(-grid.distance_to(grid.center) ** 2 / (2 * width**2))
    return DensityMatrix(grid, lowdin(grid, u[None]), [1.0])


def test_virial_scale_fixes_the_identity():
    q = _gaussian_state(make_grid(32, 16.0))
    s = virial_scale(q)
    p = scaled_family_energy(q, build_coulomb(q.grid, [(0.0, 0.0, 0.0)]), 0.0, s, (0.0, 0.0, 0.0))
    # on the co-scaled grid the Coulomb term is exactly -2 x nonlinear
    assert -p.external == pytest.approx(2 * p.nonlinear, rel=1e-3)


def test_scaled_family_kinetic_scales_quadratically():
    q = _gaussian_state(make_grid(32, 16.0))
    pot = build_coulomb(q.grid, [(0.0, 0.0, 0.0)])
    p1 = scaled_family_energy(q, pot, 1.0, 1.0, (0.0, 0.0, 0.0))
    p2 = scaled_family_energy(q, pot, 1.0, 2.0, (0.0, 0.0, 0.0))
    assert p2.kinetic == pytest.approx(4 * p1.kinetic, rel=1e-12)
    assert p2.nonlinear == pytest.approx(4 * p1.nonlinear, rel=1e-12)
    assert p2.truncated is False


def test_nonexistence_demo_guards():
    q = _gaussian_state(make_grid(32, 16.0))
    pot = build_coulomb(q.grid, [(0.0, 0.0, 0.0)])
    with pytest.raises(ConfigurationError):
        nonexistence_demo(pot, 1.0, [1, 2], q, a_star=2.0)
    with pytest.raises(ConfigurationError):
        nonexistence_demo(pot, 3.0, [2, 1], q, a_star=2.0)
    with pytest.raises(ConfigurationError):
        nonexistence_demo(pot, 3.0, [1], q, a_star=2.0)
