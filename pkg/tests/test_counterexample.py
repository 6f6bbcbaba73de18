import numpy as np
import pytest
from scipy import integrate
from scipy.ndimage import gaussian_filter1d

from h12perim import counterexample as cx
from h12perim.field import Grid
from h12perim.functionals import smoothed_h12_energy
from h12perim.shapes import rasterize

Z, O, R, FA = cx.ZERO, cx.ONE, cx.RISE, cx.FALL


def _two_plateaus():
    edges = np.array([0, 0.1, 0.2, 0.3, 0.4, 0.55, 0.65, 0.8, 0.9, 1.0])
    return cx.CompatibleState(1, edges, np.array([Z, R, O, FA, Z, R, O, FA, Z]), np.zeros(9))


def test_step_integral_and_plateau_mass():
    assert cx.step_integral(1.0) == pytest.approx(0.5, abs=1e-14)
    for t in (0.05, 0.1, 0.3, 0.5):
        assert cx.plateau_mass(t) == pytest.approx(1 - 1.5 * t, abs=1e-13)
    assert cx.plateau_mass(0.1) == pytest.approx(0.85, abs=1e-13)


def test_ramp_profile_zero():
    p = cx.ramp_profile(0.0)
    assert p.kind == "zero" and p.integral == 0.0
    assert np.all(p(np.linspace(0, 1, 11)) == 0)


def test_ramp_profile_plateau():
    p = cx.ramp_profile(0.75)
    assert p.kind == "plateau"
    x = np.linspace(0, 1, 400001)
    assert integrate.trapezoid(p(x), x) == pytest.approx(0.75, abs=1e-10)
    assert p.t == pytest.approx(1 / 6, abs=1e-12)
    assert p.decided_measure >= 0.1
    assert np.all((p(x) >= 0) & (p(x) <= 1))


def test_ramp_profile_scaled_bump():
    p = cx.ramp_profile(0.3)
    assert p.kind == "bump"
    assert p.amplitude == pytest.approx(0.3 / 0.85, rel=1e-13)
    x = np.linspace(0, 1, 400001)
    assert integrate.trapezoid(p(x), x) == pytest.approx(0.3, abs=1e-10)
    # the zero set of psi_0.1 has measure exactly 0.1
    assert p.decided_measure == pytest.approx(0.1, abs=1e-14)
    zero = x[p(x) == 0]
    assert np.all((zero <= 0.05 + 1e-12) | (zero >= 0.95 - 1e-12))


def test_ramp_profile_rejects_out_of_range():
    with pytest.raises(ValueError):
        cx.ramp_profile(1.0)
    with pytest.raises(ValueError):
        cx.ramp_profile(-0.1)


def test_initial_state():
    s = cx.initial_state()
    assert s.undecided_measure == pytest.approx(0.96)
    assert s.interval_count == {"zero": 2, "one": 1}
    P = s.antiderivative(np.array([1.0]))[0]
    assert P == pytest.approx(0.5, abs=1e-13)  # symmetric rise and fall around the plateau


def test_select_refinement_two_plateaus_direct_convolution():
    s = _two_plateaus()
    n = cx.select_refinement_N(s, 1e-2, 1e-3, resolution_cap=2**16)
    assert 2 <= n <= 2**16
    child = cx.refine(s, n)
    N = 2**16
    d = cx.box_raster(s, N).samples - cx.box_raster(child, N).samples
    for r in (1e-2, 2e-2, 4e-2):
        v = gaussian_filter1d(d, r * N, mode="wrap", truncate=12.0)
        assert np.sqrt(np.mean(v**2)) < 1e-3
        assert np.max(np.abs(v)) < 1e-3


def test_select_refinement_huge_tolerance_is_minimal():
    s = cx.initial_state()
    n = cx.select_refinement_N(s, 1e-2, 10.0, resolution_cap=2**16)
    # twice the cell count is not binding; the level-set gap 0.02 needs 64 cells
    assert n == 64


def test_select_refinement_below_floor():
    with pytest.raises(cx.InfeasibleError) as exc:
        cx.select_refinement_N(cx.initial_state(), 1e-6, 1e-3, resolution_cap=2**16)
    assert exc.value.constraint == "grid floor"


def test_refine_single_ramp_grows_decided_region():
    p = cx.ramp_profile(0.6)
    s = cx.CompatibleState(1, np.array([0.0, 1.0]), np.array([cx.PLATEAU]), np.array([p.t]))
    child = cx.refine(s, 16)
    assert child.undecided_measure < s.undecided_measure
    cert = child.certification["refinement"]
    assert cert["inclusion_one"] and cert["inclusion_zero"]
    assert cert["unmatched_cells"] == 0


def test_refine_binary_state_has_only_trivial_cells():
    s = cx.CompatibleState(1, np.array([0, 0.25, 0.75, 1.0]), np.array([Z, O, Z]), np.zeros(3))
    child = cx.refine(s, 8)
    counts = child.kind_counts()
    assert counts["plateau"] == counts["bump"] == counts["rise"] == counts["fall"] == 0
    assert counts["copy"] + counts["zero"] + counts["one"] == 8


def test_refine_inclusions_cell_by_cell():
    s = _two_plateaus()
    child = cx.refine(s, 256)
    for a, b in s.one_set:
        assert np.any((child.one_set[:, 0] <= a) & (child.one_set[:, 1] >= b))
    for a, b in s.zero_set:
        assert np.any((child.zero_set[:, 0] <= a) & (child.zero_set[:, 1] >= b))
    # cell masses are preserved
    x = np.arange(257) / 256
    np.testing.assert_allclose(np.diff(child.antiderivative(x)), np.diff(s.antiderivative(x)), atol=1e-14)


def test_refine_rejects_crowded_cells():
    with pytest.raises(cx.InfeasibleError):
        cx.refine(cx.initial_state(), 2)


def test_select_epsilon():
    s = cx.initial_state()
    eps, e = cx.select_epsilon(s, 0.5, resolution=2**16)
    assert e < 0.5
    assert e == pytest.approx(smoothed_h12_energy(cx.box_raster(s, 2**16), eps), rel=1e-12)
    assert cx.select_epsilon(s, np.inf, resolution=2**16)[0] == 0.125
    with pytest.raises(cx.InfeasibleError):
        cx.select_epsilon(s, 0.0, resolution=2**16)


def test_build_depth_one():
    res = cx.build_sequence(1, resolution_cap=2**16)
    assert len(res.states) == 1 and len(res.eps) == 1
    assert res.all_certified


def test_build_depth_fifty_reports_infeasibility():
    with pytest.raises(cx.InfeasibleError) as exc:
        cx.build_sequence(50, resolution_cap=2**16)
    assert exc.value.stage is not None
    assert "resolution" in str(exc.value)


def test_limit_set_depth_one():
    s = cx.CompatibleState(1, np.array([0, 0.3, 0.4, 0.6, 0.7, 1.0]), np.array([Z, R, O, FA, Z]), np.zeros(5))
    ls = cx.limit_set([s])
    (iv,) = ls.shape.intervals
    assert iv[0] <= 0.4 and iv[1] >= 0.6
    assert ls.lower == pytest.approx(0.2) and ls.upper == pytest.approx(0.2 + s.undecided_measure)


def test_depth_three_certified(depth3):
    res = depth3
    assert len(res.states) == 3 and res.all_certified
    for k, s in enumerate(res.states, start=1):
        c = s.certification
        assert c["smoothness"]["energy"] < 2.0**-k
        assert s.undecided_measure < 0.99**k
        assert c["inclusions"] and c["averages"]
    assert res.energies[-1] < res.energies[0]
    for rep in res.compatibility:
        assert rep.ok and len(rep.r) == 4


def test_depth_three_limit_set(depth3):
    states = depth3.states
    ls = cx.limit_set(states)
    k = len(states)
    assert ls.lower <= ls.upper <= ls.lower + 0.99**k
    N = 2**20
    E = rasterize(ls.shape, Grid(1, 1.0, N)).samples
    phi = cx.box_raster(states[-1], N).samples
    assert np.mean(np.abs(E - phi)) <= 0.99**k


def test_depth_three_telescoping(depth3):
    for row in cx.telescoping_report(depth3.states, 2**20):
        assert row["ok"]


def test_dump_stages(tmp_path):
    res = cx.build_sequence(2, resolution_cap=2**18)
    paths = cx.dump_stages(res, tmp_path)
    assert [p.name for p in paths] == ["stage_01.json", "stage_02.json", "summary.json"]
    import json

    summary = json.loads(paths[-1].read_text())
    assert summary["all_certified"] is True and summary["depth"] == 2
