import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from excursion_lab import continuum as cl
from excursion_lab import verify as vf
from excursion_lab.stats import ks_two_sample


def test_bridge_excursion_basic():
    e = cl.bessel3_bridge_excursion(256, np.random.default_rng(0))
    assert e.values[0] == 0 and e.values[-1] == 0
    assert np.all(e.values >= 0) and e.duration == pytest.approx(1.0)


def test_bridge_midpoint_mean_against_quadrature():
    # e_{1/2} is the norm of a centred 3-d Gaussian with variance 1/4 per coordinate
    var = 0.25
    dens = lambda r: 4 * math.pi * r**2 * (2 * math.pi * var) ** -1.5 * math.exp(-r**2 / (2 * var))
    mean, _ = integrate.quad(lambda r: r * dens(r), 0, np.inf)
    second, _ = integrate.quad(lambda r: r * r * dens(r), 0, np.inf)
    x = cl.bessel3_bridge_batch(8, np.random.default_rng(1), 100_000)[:, 4]
    sd = math.sqrt((second - mean**2) / x.size)
    assert abs(x.mean() - mean) < 4 * sd


def test_meander_weights_and_endpoint():
    rng = np.random.default_rng(2)
    ends, w = [], []
    for _ in range(40_000):
        p, wt = cl.meander(16, rng)
        ends.append(p.values[-1])
        w.append(wt)
    ends, w = np.array(ends), np.array(w)
    assert np.all(np.isfinite(w)) and np.all(w > 0)
    # oracle: BES(3) endpoint density r^2 exp(-r^2/2) reweighted by 1/r
    num, _ = integrate.quad(lambda r: r**2 * r * math.exp(-r * r / 2), 0, np.inf)
    den, _ = integrate.quad(lambda r: r * math.exp(-r * r / 2), 0, np.inf)
    target = num / den
    est = np.sum(w * ends**2) / w.sum()
    se = math.sqrt(np.sum(w**2 * (ends**2 - est) ** 2)) / w.sum()
    assert abs(est - target) < 4 * se
    a, _ = cl.meander(16, np.random.default_rng(3))
    b, _ = cl.meander(16, np.random.default_rng(3))
    assert np.array_equal(a.values, b.values)


def test_area_and_timechange_examples():
    one = cl.GridPath(np.ones(101), 0.01)
    prof, inv = cl.area_and_timechange(one)
    assert np.allclose(prof.running_area, np.linspace(0, 1, 101), atol=1e-14)
    assert inv(0.37) == pytest.approx(0.37, abs=1e-12)
    two = cl.GridPath(np.full(101, 2.0), 0.01)
    prof2, inv2 = cl.area_and_timechange(two)
    assert inv2(np.nextafter(1.0, 0)) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(cl.AreaExceeded):
        inv(1.5)
    zero_alpha, _ = cl.area_and_timechange(two, alpha=0.0)
    assert zero_alpha.total == pytest.approx(1.0)


def test_inverse_property_on_random_path():
    e = cl.bessel3_bridge_excursion(1024, np.random.default_rng(4))
    prof, inv = cl.area_and_timechange(e)
    t = np.linspace(0.05, 0.95, 50)
    A_t = np.interp(t, e.times, prof.running_area)
    assert np.max(np.abs(inv(A_t) - t)) <= e.h


def test_scale_examples():
    e = cl.bessel3_bridge_excursion(512, np.random.default_rng(5))
    same = cl.scale(e, 1.0)
    assert np.allclose(same.values, e.values, atol=1e-12) and same.h == e.h
    for c in (0.25, 2.0, 4.0):
        assert cl.scale(e, c).area() == pytest.approx(c**-1.5 * e.area(), rel=1e-12)
    assert cl.scale(e, 4.0).values.max() == pytest.approx(e.values.max() / 2)
    with pytest.raises(ValueError):
        cl.scale(e, 0.0)


def test_normalize_examples():
    m = 2**14
    t = np.linspace(0, 1, m + 1)
    w = cl.GridPath(np.sin(math.pi * t), 1.0 / m)
    n = cl.normalize_by_area(w)
    assert abs(n.area() - 1) < 1e-6
    assert n.duration == pytest.approx(w.area() ** (-2 / 3), rel=1e-12)
    again = cl.normalize_by_area(n)
    assert np.max(np.abs(again.values - n.values)) < 1e-9
    assert abs(again.h - n.h) < 1e-9
    unit = cl.GridPath(np.ones(11), 0.1)
    assert np.allclose(cl.normalize_by_area(unit).values, 1.0)
    with pytest.raises(cl.ZeroArea):
        cl.normalize_by_area(cl.GridPath(np.zeros(5), 0.25))


def test_normalisation_ignores_prior_scaling():
    rng = np.random.default_rng(6)
    batch = cl.bessel3_bridge_batch(256, rng, 100)
    for e in batch:
        p = cl.GridPath(e, 1 / 256)
        base = cl.normalize_by_area(p)
        for c in (0.25, 1.0, 4.0):
            v = cl.normalize_by_area(cl.scale(p, c))
            assert np.max(np.abs(v.values - base.values)) < 1e-9
            assert v.h == pytest.approx(base.h, rel=1e-9)


def test_area_normalised_ensemble():
    ens = cl.sample_area_normalized_excursion(200, 1024, np.random.default_rng(7))
    assert len(ens) == 200
    assert all(abs(p.area() - 1) < 1e-6 for p in ens.items)
    assert np.all(ens.weights > 0)
    # shape recovered from E at the rescaled clock equals the unit-length excursion
    rng = np.random.default_rng(7)
    raw = cl.bessel3_bridge_batch(1024, rng, 200)
    for e, E in zip(raw[:20], ens.items[:20]):
        R = E.duration
        s = np.linspace(0, 1, 33)
        assert np.allclose(E.at(s * R) / math.sqrt(R), np.interp(s, np.linspace(0, 1, 1025), e),
                           atol=1e-9)


def test_weighted_length_law_against_resampling():
    obs = cl.excursion_observables(20_000, 256, [0.5], np.random.default_rng(8))
    rng = np.random.default_rng(9)
    p = obs.weight / obs.weight.sum()
    resampled = obs.R[rng.choice(obs.R.size, size=20_000, p=p)]
    r = ks_two_sample(obs.R, resampled, wx=obs.weight)
    assert r.passed, r.statistic
    # the weighting shifts mass towards long excursions
    assert np.average(obs.R, weights=obs.weight) < obs.R.mean()


def test_besq_examples():
    rng = np.random.default_rng(10)
    assert np.all(cl.besq_path(0.0, 0.0, 64, rng).values == 0)
    z1 = cl.besq_paths(1.0, 0.0, 4, rng, size=100_000)[:, -1]
    assert abs(z1.mean() - 1) < 4 * z1.std() / math.sqrt(z1.size)
    one = cl.besq_step(np.zeros(20_000), 2.0, 0.3, rng)
    ref = np.random.default_rng(11).exponential(0.6, 20_000)
    assert ks_two_sample(one, ref).passed
    with pytest.raises(ValueError):
        cl.besq_paths(-1.0, 0.0, 4, rng)


def test_phi_examples():
    z = cl.GridPath(np.zeros(5), 0.25)
    assert np.all(cl.phi_map(z).values == 0)
    c = cl.GridPath(np.full(5, 2 / 3), 0.25)
    assert np.allclose(cl.phi_map(c).values, 1.0)
    r = np.linspace(0, 5, 100)
    assert np.all(np.diff(cl.phi_values(r)) > 0)
    with pytest.raises(cl.NegativeInput):
        cl.phi_values([-0.1])


def test_y_process_basic():
    y = cl.y_process(1024, 4.0, np.random.default_rng(12))
    assert y.values[0] == 0 and np.all(y.values >= 0) and y.m == 1024


def test_time_change_identity_for_abs_bm():
    a, run, h = cl._brownian_abs_until_area(1024, 4.0, np.random.default_rng(13))
    s = np.linspace(0, 0.999, 200)
    t = cl._inverse_staircase(run, h, s)
    back = np.interp(t, np.arange(run.size) * h, run)
    assert np.max(np.abs(back - s)) < 1e-12


def test_zero_set_examples():
    pos = cl.GridPath(np.full(11, 3.0), 0.1)
    assert cl.zero_set(pos, 0.01) == []
    v = np.ones(101)
    v[20:31] = 0.0
    zs = cl.zero_set(cl.GridPath(v, 0.01), 0.01)
    assert len(zs) == 1
    assert zs[0][0] <= 0.2 + 1e-12 and zs[0][1] >= 0.3 - 1e-12
    assert cl.last_zero_before(cl.GridPath(v, 0.01), 1.0, 0.01) == pytest.approx(0.3)


def test_last_zero_two_constructions_agree():
    # |B| by cumulative sums against |B| from a bridge plus an endpoint draw
    m, n = 2048, 4000
    rng = np.random.default_rng(14)
    first = []
    for _ in range(n):
        b = np.concatenate(([0.0], np.cumsum(rng.standard_normal(m) / math.sqrt(m))))
        first.append(cl.last_zero_before(cl.GridPath(np.abs(b), 1 / m)))
    rng2 = np.random.default_rng(15)
    second = []
    for chunk in range(n // 500):
        br = cl.brownian_bridges(m, rng2, 500)
        end = rng2.standard_normal(500)
        paths = br + np.linspace(0, 1, m + 1)[None, :] * end[:, None]
        second.extend(cl.last_zero_before(cl.GridPath(np.abs(p), 1 / m)) for p in paths)
    assert ks_two_sample(first, second).passed


def test_theorem_b_grid_refinement_stable():
    stats = {}
    for m in (512, 1024):
        cfg = vf.config_for("theorem-b", {"count": 1500, "m": m})
        stats[m] = {r.name: (r.statistic, r.critical_value) for r in vf.check_theorem_b(cfg)}
    for name, (d, crit) in stats[512].items():
        assert abs(stats[1024][name][0] - d) < crit


def test_grid_csv_round_trip():
    e = cl.bessel3_bridge_excursion(64, np.random.default_rng(16))
    back = cl.GridPath.from_csv(e.to_csv())
    assert np.array_equal(back.values, e.values)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=3, max_size=40), st.floats(0.1, 10.0))
def test_normalised_area_is_one(vals, c):
    p = cl.GridPath(np.array(vals), 1.0 / (len(vals) - 1))
    n = cl.normalize_by_area(cl.scale(p, c))
    assert abs(n.area() - 1) < 1e-9
