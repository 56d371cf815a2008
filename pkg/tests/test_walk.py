import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from excursion_lab.increment_laws import make_lazy_law
from excursion_lab.walk import (AreaNeverReached, LatticePath, chi, chi_staircase, evolve,
                                floor_index, functionals, rescaled_marginal, xi)


def path(*inc, start=0):
    return LatticePath.from_increments(start, inc)


def test_evolve_examples():
    assert list(path(1, -1).positions) == [1, 0]
    assert list(path(0, 0, 0, start=3).values) == [3, 3, 3, 3]
    law = make_lazy_law()
    a = evolve(0, law, 50, np.random.default_rng(5))
    b = evolve(0, law, 50, np.random.default_rng(5))
    assert np.array_equal(a.positions, b.positions)
    with pytest.raises(ValueError):
        evolve(0, law, 0, np.random.default_rng(5))


def test_functionals_examples():
    f = functionals(path(1, -1))
    assert list(f.algebraic_area) == [1, 1] and f.tau_tilde == 2
    assert f.tau_seq[0] == 2
    assert list(functionals(path(1, 1)).companion) == [1, 0]
    f = functionals(path(1, -2))
    assert list(f.positions) == [1, -1]
    assert list(f.geometric_area) == [1, 2]
    assert f.perturbed_area[1] == 4


def test_chi_xi_examples():
    f = functionals(path(1, -1, 2))  # S = (1, 0, 2), A = (1, 1, 3)
    assert list(f.algebraic_area) == [1, 1, 3]
    assert chi(f, 1) == 1 and chi(f, 2) == 3
    with pytest.raises(AreaNeverReached):
        chi(f, 4)
    g = functionals(path(1))  # K = (2,)
    g2 = functionals(path(1, 0))  # K = (2, 4)
    assert list(g2.perturbed_area) == [2, 4]
    assert xi(g, 0) == 0
    assert xi(g2, 3) == 2
    with pytest.raises(AreaNeverReached):
        xi(g2, 5)


def test_rescaled_marginal_examples():
    p = path(*([1] * 10))
    assert floor_index(0.55, 10) == 5
    assert rescaled_marginal(p, [0.55], 1.0)[0] == 5
    assert np.array_equal(rescaled_marginal(p, np.arange(11) / 10, 1.0), p.values)
    assert rescaled_marginal(p, [0.0], 2.0)[0] == 0
    # s = 1 hits the final point
    assert rescaled_marginal(p, [1.0], 1.0)[0] == 10


def test_floor_index_decimal_robust():
    assert floor_index(0.29, 100) == 29
    assert floor_index(0.57, 100) == 57


steps = st.lists(st.integers(-3, 3), min_size=1, max_size=60)


@settings(max_examples=200, deadline=None)
@given(steps, st.integers(-5, 5))
def test_functionals_match_definitions(inc, start):
    p = LatticePath.from_increments(start, inc)
    assert p.check()
    f = functionals(p)
    s = [start]
    for x in inc:
        s.append(s[-1] + x)
    a = g = 0
    sbar = 0
    for n in range(1, len(s)):
        a += s[n]
        g += abs(s[n])
        sbar += (-1) ** (n + 1) * (s[n] - s[n - 1])
        assert f.algebraic_area[n - 1] == a
        assert f.geometric_area[n - 1] == g
        assert f.perturbed_area[n - 1] == n + g
        assert f.companion[n - 1] == sbar
    hit = [n for n in range(1, len(s)) if s[n] <= 0]
    assert f.tau_tilde == (hit[0] if hit else None)
    taus = [n for n in range(1, len(s)) if s[n - 1] != 0 and s[n - 1] * s[n] <= 0]
    assert list(f.tau_seq) == taus


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-1, 1), min_size=1, max_size=80), st.floats(0.0, 1.0))
def test_chi_matches_staircase_inversion(tail, frac):
    # build an excursion: start up, wander, forced down to 0 at the end
    inc = [1]
    for x in tail:
        if inc and sum(inc) + x <= 0:
            break
        inc.append(x)
    inc.extend([-1] * sum(inc))
    f = functionals(LatticePath.from_increments(0, inc))
    assert f.tau_tilde == len(inc)
    s = frac * f.algebraic_area[-1]
    assert chi(f, s) == chi_staircase(f, s)


def test_csv_round_trip_bit_exact():
    law = make_lazy_law()
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = evolve(int(rng.integers(-3, 4)), law, 40, rng)
        text = p.to_csv()
        assert text.splitlines()[0] == "i,X_i,S_i,A_i,G_i,Sbar_i"
        q = LatticePath.from_csv(text)
        assert q.start == p.start and np.array_equal(q.increments, p.increments)
        assert q.to_csv() == text


def test_reconstruction_many_paths():
    law = make_lazy_law()
    rng = np.random.default_rng(3)
    inc = law.sample(rng, (10_000, 30))
    for row in inc:
        assert LatticePath.from_increments(0, row).check()
