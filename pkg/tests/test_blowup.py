import math
from types import SimpleNamespace

import numpy as np
import pytest

from fermicrit.blowup import (BlowupRecord, classify_rank_degeneracy, core_width,
                              density_argmax, fit_tail_rates, rescale_minimizer,
                              run_continuation, test_function_bound as trial_bound,
                              verify_identities, w_frame, write_continuation_csv)
from fermicrit.critical import estimate_a_star
from fermicrit.energy import EnergyBreakdown
from fermicrit.errors import (ConfigurationError, DiagnosticError, DomainError,
                              ResolutionError)
from fermicrit.grid import Grid, make_grid
from fermicrit.potential import build_coulomb
from fermicrit.solver import GroundState, SolverConfig, minimize
from fermicrit.state import DensityMatrix, lowdin
from fermicrit.verify import smooth_random_field


def _state(grid, orbitals, occ=None):
    occ = np.ones(len(orbitals)) if occ is None else occ
    gamma = DensityMatrix(grid, orbitals, occ)
    return GroundState(gamma, EnergyBreakdown(0.0, 0.0, 0.0, 0.0), np.zeros(len(occ)),
                       np.zeros(len(occ)), 0, True)


def _gaussian(grid, width, center=None):
    c = grid.center if center is None else center
    u = np.exp(-grid.distance_to(c) ** 2 / (2 * width**2))
    return u / grid.norm(u)


@pytest.fixture(scope="module")
def q1():
    """Rank-1 optimizer on the co-scaled grid where the virial identity holds."""
    est = estimate_a_star(1, make_grid(32, 24.0))
    q = est.optimizer
    rho = q.orbitals[0] ** 2
    g = q.grid
    c = g.integrate(rho / np.maximum(g.distance_to(g.center), g.spacing / 2))
    d = g.integrate(rho ** (5 / 3))
    s = c / (2 * d)
    gs = Grid(g.n_per_axis, g.box_length / s, (0.0, 0.0, 0.0))
    return est.a_star, DensityMatrix(gs, q.orbitals * s**1.5, q.occupations)


def test_identity_rescaling_at_unit_eps():
    g = make_grid(32, 16.0)
    u = _gaussian(g, 1.5)[None]
    w = rescale_minimizer(_state(g, u), 2.0, 1.0, (0.0, 0.0, 0.0), frame=g)
    assert np.max(np.abs(w.orbitals - u)) < 1e-10


def test_rescaling_preserves_norm_and_scales_kinetic():
    g = make_grid(48, 16.0)
    u = _gaussian(g, 1.0, (0.5, 0.0, 0.0))[None]
    eps = 0.5
    w = rescale_minimizer(_state(g, u), 3.0, 3.0 - eps, (0.5, 0.0, 0.0), frame=make_grid(48, 16.0))
    fw = w.grid
    assert fw.norm(w.orbitals[0]) == pytest.approx(1.0, rel=1e-2)
    assert fw.kinetic(w.orbitals[0]) == pytest.approx(eps**2 * g.kinetic(u[0]), rel=2e-2)


def test_rescaling_guards():
    g = make_grid(16, 16.0)
    st = _state(g, _gaussian(g, 0.3)[None])
    with pytest.raises(ConfigurationError):
        rescale_minimizer(st, 1.0, 2.0, (0.0, 0.0, 0.0))
    with pytest.raises(ConfigurationError):
        rescale_minimizer(st, 2.0, 1.0, (20.0, 0.0, 0.0))
    with pytest.raises(ResolutionError):
        rescale_minimizer(st, 2.0, 1.0, (0.0, 0.0, 0.0))


def test_identities_hold_for_the_virial_gauge_optimizer(q1):
    a_star, w = q1
    res = verify_identities(w, a_star)
    assert res["virial"] < 1e-10
    assert res["energy_law"] < 1e-3


def test_dilated_limit_state_breaks_the_virial(q1):
    a_star, w = q1
    g = w.grid
    t = 2.0
    wt = DensityMatrix(Grid(g.n_per_axis, g.box_length / t, g.center),
                       w.orbitals * t**1.5, w.occupations)
    # C scales like t and D like t^2: residual |2t - 2t^2| / t^2 = 1 at t = 2
    assert verify_identities(wt, a_star)["virial"] == pytest.approx(1.0, rel=1e-6)


def test_identities_zero_density():
    g = make_grid(16, 8.0)
    with pytest.raises(DomainError):
        verify_identities(DensityMatrix(g, np.zeros((1,) + g.shape), [1.0]), 1.0)


def test_gaussian_identities_are_diagnostic_only():
    g = make_grid(32, 12.0)
    res = verify_identities(DensityMatrix(g, _gaussian(g, 1.0)[None], [1.0]), 9.58)
    assert set(res) == {"virial", "energy_law"}
    assert all(math.isfinite(v) for v in res.values())


def test_trial_bound_matches_closed_form(q1):
    a_star, w = q1
    rho = w.orbitals[0] ** 2
    d = w.grid.integrate(rho ** (5 / 3))
    # in the virial gauge C = 2D, so -C^2/(4D) = -D
    assert trial_bound(w) == pytest.approx(-d, rel=1e-8)


def test_core_width_and_argmax():
    g = make_grid(32, 16.0)
    c = (1.0, -0.5, 0.0)
    rho = _gaussian(g, 1.0, c) ** 2
    assert density_argmax(g, rho) == pytest.approx(c, abs=g.spacing)
    # half maximum of exp(-r^2) sits at r = sqrt(ln 2)
    assert core_width(g, rho) == pytest.approx(2 * math.sqrt(math.log(2)), rel=0.15)


def test_w_frame_is_centered_fresh_grid():
    g = make_grid(32, 10.0, (1.0, 2.0, 3.0))
    f = w_frame(g, 40.0)
    assert f.n_per_axis == 32 and f.box_length == 40.0 and f.center == (0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def hydrogen():
    g = make_grid(48, 36.0)
    pot = build_coulomb(g, [(0.3, 0.2, 0.1)])
    return minimize(pot, 0.0, 1.0, SolverConfig(grad_tol=1e-6))


def test_hydrogen_tail_rate(hydrogen):
    rate = fit_tail_rates(hydrogen)[0]
    assert rate == pytest.approx(math.sqrt(-hydrogen.multipliers[0]), rel=0.1)


def test_tail_fit_needs_a_large_box(hydrogen):
    g = make_grid(24, 18.0)
    pot = build_coulomb(g, [(0.3, 0.2, 0.1)])
    small = minimize(pot, 0.0, 1.0, SolverConfig(grad_tol=1e-6))
    with pytest.raises(DiagnosticError):
        fit_tail_rates(small)


def test_tail_fit_stops_at_noise_floor():
    # exp(-1.2 r) on top of a flat floor 1e-7 below the peak: the floor must not
    # flatten the fitted rate
    g = make_grid(48, 40.0)
    u = np.exp(-1.2 * g.distance_to((0.0, 0.0, 0.0))) + 1e-7
    u /= g.norm(u)
    state = SimpleNamespace(gamma=DensityMatrix(g, u[None], np.ones(1)))
    assert fit_tail_rates(state)[0] == pytest.approx(1.2, rel=0.05)
    assert fit_tail_rates(state, amplitude_floor=1e-12)[0] < 0.9


def _orthonormal_pair(g, seed=0):
    return lowdin(g, smooth_random_field(g, np.random.default_rng(seed), 2))


def test_classify_case_one():
    g = make_grid(16, 12.0)
    e1, e2 = _orthonormal_pair(g)
    n2 = 0.6
    c = math.sqrt(n2**-2 - 1)
    w = np.stack([e1, n2 * e2, c * n2 * e2])
    cls = classify_rank_degeneracy(DensityMatrix(g, w, np.ones(3)))
    assert cls.rank_found == 2 and cls.case == "case-1"


def test_classify_case_two():
    g = make_grid(16, 12.0)
    e1, e2 = _orthonormal_pair(g, 1)
    w = np.stack([e1, e2, np.zeros(g.shape)])
    cls = classify_rank_degeneracy(DensityMatrix(g, w, np.ones(3)))
    assert cls.rank_found == 2 and cls.case == "case-2"


def test_classify_full_rank_and_wrong_size():
    g = make_grid(16, 12.0)
    w = lowdin(g, smooth_random_field(g, np.random.default_rng(2), 3))
    cls = classify_rank_degeneracy(DensityMatrix(g, w, np.ones(3)))
    assert cls.rank_found == 3 and cls.case == "full-rank"
    with pytest.raises(ConfigurationError):
        classify_rank_degeneracy(DensityMatrix(g, w[:2], np.ones(2)))


@pytest.mark.parametrize("n, schedule", [
    (1, [1.0]), (4, [1.0]), (2, []), (2, [1.0, 2.0]), (2, [1.0, -0.5]), (2, [20.0, 1.0]),
])
def test_continuation_guards(n, schedule):
    g = make_grid(16, 16.0)
    pot = build_coulomb(g, [(-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)])
    with pytest.raises(ConfigurationError):
        run_continuation(n, pot, 9.5, schedule)


def test_short_continuation_records(tmp_path):
    g = make_grid(48, 12.0)
    pot = build_coulomb(g, [(-1.5, 0.0, 0.0), (2.0, 0.1, 0.0)])
    recs = run_continuation(2, pot, 9.576, [0.5 * 9.576, 0.4 * 9.576],
                            SolverConfig(max_iters=300), refine=False)
    assert len(recs) == 2
    for r in recs:
        assert isinstance(r, BlowupRecord)
        assert r.eps > 0 and 1 <= r.nearest_center_index <= 2
        assert r.scaled_energy == pytest.approx(r.eps * r.energy_total)
        assert r.rescaled.grid == recs[0].rescaled.grid
        assert math.isfinite(r.energy_law_gap)
    path = tmp_path / "c.csv"
    write_continuation_csv(recs, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("a,eps,energy_total,scaled_energy")
    assert lines[0].endswith("tail_rate_1,tail_rate_2,converged")
    assert len(lines) == 3
