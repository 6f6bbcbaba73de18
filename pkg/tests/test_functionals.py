import json

import numpy as np
import pytest

from h12perim import functionals as fn
from h12perim.field import Grid, SampledField, UnderResolvedScaleError
from h12perim.kernels import phi_bandpass
from h12perim.shapes import Intervals, rasterize


def _half(n=2**16):
    g = Grid(1, 1.0, n)
    return rasterize(Intervals([[0.0, 0.5]]), g)


def test_energy_zero_field():
    g = Grid(1, 1.0, 1024)
    assert fn.smoothed_h12_energy(SampledField(g, np.zeros(1024)), 0.05) == 0.0


def test_energy_rejects_large_eps():
    with pytest.raises(ValueError):
        fn.smoothed_h12_energy(_half(1024), 1.0)


def test_energy_plateau_matches_jump_count(cf):
    u = _half()
    eps = 2.0 ** -np.arange(5, 11)
    vals = np.array([fn.smoothed_h12_energy(u, e) for e in eps])
    assert np.all(np.diff(vals) > 0)
    # the normalized energy approaches its plateau like 1 / |log eps|
    A = np.stack([np.ones_like(eps), 1 / np.abs(np.log(eps))], axis=1)
    plateau = np.linalg.lstsq(A, vals, rcond=None)[0][0]
    # each unit jump carries 1/pi per unit of |log eps|, that is c_f / log 2
    assert plateau == pytest.approx(2 * cf / np.log(2), rel=0.02)
    assert 2 * cf / np.log(2) == pytest.approx(2 / np.pi, rel=1e-5)


def test_energy_of_smooth_mode_vanishes():
    g = Grid(1, 1.0, 2**14)
    u = SampledField(g, np.cos(2 * np.pi * 4 * g.coordinates()))
    eps = 2.0 ** -np.array([6, 8, 10, 12])
    vals = np.array([fn.smoothed_h12_energy(u, e) for e in eps])
    assert np.all(np.diff(vals) < 0)
    # a fixed finite H^1/2 norm divided by |log eps|
    k = 2 * np.pi * 4
    np.testing.assert_allclose(vals * np.abs(np.log(eps)), k * 0.5 * np.exp(-((eps * k) ** 2)), rtol=1e-12)


def test_dyadic_telescoping_on_indicator():
    u = _half(2**14)
    eps = 2.0**-9
    dec = fn.dyadic_decomposition(u, eps)
    assert dec.identity_error() <= 1e-10
    for j, p in enumerate(dec.partial_sums):
        ref = fn.smoothed_h_half_sq(u, eps) - fn.smoothed_h_half_sq(u, eps * 2.0 ** (j + 1))
        assert abs(p - ref) <= 1e-10 * abs(ref)


def test_dyadic_zero_and_remainder():
    g = Grid(1, 1.0, 1024)
    dec = fn.dyadic_decomposition(SampledField(g, np.zeros(1024)), 0.01)
    assert np.all(dec.terms == 0) and dec.remainder == 0
    dec = fn.dyadic_decomposition(_half(2**12), 0.01)
    assert len(dec.terms) == int(np.ceil(np.log2(1 / 0.01)))
    assert dec.remainder <= dec.remainder_constant * dec.l2_sq * (1 + 1e-12)
    assert 0 < dec.remainder_constant < 10


def test_single_mode_concentrates_in_few_bands():
    g = Grid(1, 1.0, 2**12)
    eps = 2.0**-10
    for m in (3, 17, 100):
        u = SampledField(g, np.cos(2 * np.pi * m * g.coordinates()))
        dec = fn.dyadic_decomposition(u, eps)
        frac = dec.terms / dec.total
        # no band holds 90% on its own; four consecutive bands always do
        assert frac.max() < 0.9
        window = np.convolve(frac, np.ones(4), mode="valid")
        assert window.max() > 0.9


def test_localized_constant_is_zero():
    g = Grid(1, 1.0, 1024)
    u = SampledField(g, np.full(1024, 3.0))
    assert abs(fn.scale_localized_l2(u, phi_bandpass(1), 0.02)) < 1e-25


def _jump_raster(breaks, values, n):
    pc = fn.PiecewiseConstant1D(breaks, values, 1.0, "ramp")
    return pc, pc.raster(Grid(1, 1.0, n))


def test_localized_single_jump(cf):
    _, u = _jump_raster([0.5], [0.0, 1.0], 2**18)
    val = fn.scale_localized_l2(u, phi_bandpass(1), 2.0**-10)
    assert val == pytest.approx(cf, rel=0.02)


def test_localized_two_jumps_additive(cf):
    _, u = _jump_raster([0.25, 0.6], [0.0, 1.0, -0.5], 2**18)
    val = fn.scale_localized_l2(u, phi_bandpass(1), 2.0**-10)
    assert val == pytest.approx(cf * (1.0 + 2.25), rel=0.03)


def test_localized_window_locality():
    pc, u = _jump_raster([0.5], [0.0, 1.0], 2**16)
    vals = [fn.scale_localized_l2(u, phi_bandpass(1), r, window=(0.1, 0.3)) for r in (2.0**-6, 2.0**-8, 2.0**-10)]
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-3 * fn.scale_localized_l2(u, phi_bandpass(1), 2.0**-10)


def test_scale_scan_constant_and_errors():
    g = Grid(1, 1.0, 1024)
    u = SampledField(g, np.ones(1024))
    tr = fn.scale_scan(u, "localized", fn.dyadic_schedule(0.1, 5))
    assert np.all(tr.values == 0) and tr.limit_estimate == 0
    with pytest.raises(ValueError):
        fn.scale_scan(u, "localized", [0.01, 0.02])
    with pytest.raises(ValueError):
        fn.scale_scan(u, "localized", [0.01, 0.002])
    with pytest.raises(ValueError):
        fn.scale_scan(u, "nonsense", [0.1, 0.05])
    raw = fn.scale_scan(u, "localized", [0.1, 0.05])
    assert raw.raw and raw.beta is None


def test_fit_limit_recovers_model():
    r = fn.dyadic_schedule(0.1, 6)
    a, res, beta = fn.fit_limit(r, 2.0 + 3.0 * r)
    assert (a, beta) == (pytest.approx(2.0), 1.0) and res < 1e-12
    a, _, beta = fn.fit_limit(r, 2.0 + 3.0 * np.sqrt(r))
    assert a == pytest.approx(2.0) and beta == 0.5


def test_scale_trace_serialization():
    _, u = _jump_raster([0.5], [0.0, 1.0], 2**14)
    tr = fn.scale_scan(u, "localized", fn.dyadic_schedule(2.0**-5, 5), meta={"z": 1, "a": 2})
    text = tr.to_csv()
    assert text.startswith("r,value\n") and "\r" not in text
    assert len(text.strip().split("\n")) == 6
    d = json.loads(tr.to_json())
    assert list(d) == sorted(d)
    assert d["limit_estimate"] == tr.limit_estimate


def test_jump_functional(cf):
    none = fn.PiecewiseConstant1D([], [0.7], 1.0)
    assert fn.jump_functional_1d(none, cf) == 0.0
    one = fn.PiecewiseConstant1D([0.5], [0.0, 1.0], 1.0, "ramp")
    assert fn.jump_functional_1d(one, cf) == cf
    three = fn.PiecewiseConstant1D([0.2, 0.5, 0.8], [0.0, 1.0, -1.0, -0.5], 1.0, "ramp")
    assert [j for _, j in three.jumps()] == [1.0, -2.0, 0.5]
    assert fn.jump_functional_1d(three, cf) == pytest.approx(5.25 * cf)
    closed = fn.PiecewiseConstant1D([0.2, 0.5], [0.0, 1.0, 0.5], 1.0, "jump")
    assert [j for _, j in closed.jumps()] == [-0.5, 1.0, -0.5]


def test_piecewise_validation():
    with pytest.raises(ValueError):
        fn.PiecewiseConstant1D([0.5], [0.0])
    with pytest.raises(ValueError):
        fn.PiecewiseConstant1D([0.6, 0.4], [0, 1, 2])
    with pytest.raises(ValueError):
        fn.PiecewiseConstant1D([0.5], [0, 1], closure="wrap")


def test_product_check():
    E = Intervals([[0.0, 0.25]])
    for k in range(5, 10):
        res = fn.product_energy_check(E, 2.0**-k, resolution=2048)
        assert res.ok and res.ok_product
        assert res.lhs <= res.rhs_product <= res.rhs
    empty = fn.product_energy_check(Intervals(np.zeros((0, 2))), 2.0**-6, resolution=512)
    assert empty.lhs == 0.0 and empty.rhs == 0.0 and empty.ok
    tiny = fn.product_energy_check(Intervals([[0.5, 0.5 + 1 / 256]]), 2.0**-6, resolution=1024)
    assert tiny.ok
    with pytest.raises(ValueError):
        fn.product_energy_check(Intervals([[0.0, 1.0]]), 0.05, resolution=256)


def test_under_resolved_scale_raises():
    with pytest.raises(UnderResolvedScaleError):
        fn.scale_localized_l2(_half(256), phi_bandpass(1), 1e-3)
