import itertools
import math
from collections import defaultdict
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from excursion_lab import oracle as o
from excursion_lab.increment_laws import (IncrementLaw, make_laplace_law, make_lazy_law,
                                          make_mu_law)

LAZY = {-1: Fraction(1, 4), 0: Fraction(1, 2), 1: Fraction(1, 4)}


def brute_joint(n, constraint="free", steps=LAZY, start=0):
    """Exhaustive p_n(k, a) over all |support|^n words, exact rationals."""
    out = defaultdict(Fraction)
    for word in itertools.product(steps, repeat=n):
        s, a, p, ok = start, 0, Fraction(1), True
        for x in word:
            s += x
            a += s
            p *= steps[x]
            if constraint == "positive_interior" and s < 1:
                ok = False
                break
        if ok:
            out[(s, a)] += p
    return dict(out)


def brute_excursions(N, steps=LAZY):
    """Every length-N excursion 0 -> ... -> 0 with S_i >= 1 inside, with its probability."""
    for word in itertools.product(steps, repeat=N):
        s = np.cumsum(word)
        if s[-1] == 0 and np.all(s[:-1] >= 1):
            yield s, math.prod(steps[x] for x in word)


def test_one_step_free_table():
    t = o.build_table(make_lazy_law(), 0, 1, o.FREE)
    assert t.get(1, 1) == 0.25 and t.get(0, 0) == 0.5 and t.get(-1, -1) == 0.25


def test_two_step_positive_mass():
    t = o.build_table(make_lazy_law(), 0, 2, o.POSITIVE, exact=True)
    assert t.total() == Fraction(3, 16)


@pytest.mark.parametrize("n", range(1, 7))
@pytest.mark.parametrize("constraint", [o.FREE, o.POSITIVE])
def test_tables_equal_enumeration(n, constraint):
    t = o.build_table(make_lazy_law(), 0, n, constraint, exact=True)
    ref = brute_joint(n, constraint)
    got = {(int(k), int(a)): v for k in t.positions for a in t.areas
           if (v := t.get(int(k), int(a))) != 0}
    assert got == ref


def test_excursion_law_small():
    law = make_lazy_law()
    assert o.excursion_law(law, 2, exact=True) == {1: Fraction(1, 16)}
    assert o.excursion_law(law, 3, exact=True) == {2: Fraction(1, 32)}
    u4 = sum(p for _, p in brute_excursions(4))
    assert sum(o.excursion_law(law, 4, exact=True).values()) == u4
    assert o.return_probabilities(law, 4)[4] == float(u4)


def test_excursion_law_frozen_n6():
    # frozen from exhaustive enumeration of the 3^6 words
    ref = defaultdict(Fraction)
    for s, p in brute_excursions(6):
        ref[int(s.sum())] += p
    got = o.excursion_law(make_lazy_law(), 6, exact=True)
    assert got == dict(ref)
    assert got == {5: Fraction(1, 256), 6: Fraction(3, 1024), 7: Fraction(9, 4096),
                   8: Fraction(1, 1024), 9: Fraction(1, 4096)}


def test_area_terminal_law_small():
    atl = o.area_terminal_law(make_lazy_law(), 8)
    assert atl.v[0] == 0.0625 and atl.v[1] == 0.03125
    assert np.all(atl.v >= 0) and atl.v.sum() <= 1
    assert np.all(atl.tail_bound == 0)
    # v_L by brute force over all excursions of length <= L + 1
    for L in range(1, 6):
        tot = sum(p for N in range(2, L + 2) for s, p in brute_excursions(N) if s.sum() == L)
        assert atl.v[L - 1] == pytest.approx(float(tot), abs=1e-15)


def test_conditional_marginal_forced():
    law = make_lazy_law()
    cm = o.conditional_marginal(law, 3, [1 / 3])
    pl = cm.position_law()
    assert pl[1 - cm.x_lo[0]] == pytest.approx(1.0)
    cm4 = o.conditional_marginal(law, 4, [0.5])
    assert cm4.position_law().sum() == pytest.approx(1.0)


def test_conditional_marginal_matches_enumeration():
    law = make_lazy_law()
    N = 6
    t = [1 / 3, 2 / 3]
    cm = o.conditional_marginal(law, N, t)
    ref = defaultdict(Fraction)
    for s, p in brute_excursions(N):
        ref[(int(s[1]), int(s[3]), int(s.sum()))] += p
    tot = sum(ref.values())
    for (x1, x2, a), p in ref.items():
        got = cm.mass[x1 - cm.x_lo[0], x2 - cm.x_lo[1], a - cm.a_lo]
        assert got == pytest.approx(float(p / tot), abs=1e-14)
    assert cm.mass.sum() == pytest.approx(1.0, abs=1e-14)


def test_gradient_probe_one_step():
    g = o.gradient_probe(make_lazy_law(), 1)
    # p_1 entries 1/4, 1/2, 1/4 on the diagonal: largest jump is 1/2 against 0
    assert g["grad_k_sup"] == 0.5 and g["grad_a_sup"] == 0.5


def test_gradient_probe_settles():
    # the scaled supremum creeps up towards its limit with shrinking steps
    vals = [o.gradient_probe(make_lazy_law(), n)["grad_k_scaled"] for n in (16, 32, 64, 128)]
    steps = np.diff(vals)
    assert np.all(np.abs(steps[1:]) < np.abs(steps[:-1]))
    assert max(vals) / min(vals) < 1.1


def test_reflection_symmetry():
    t = o.build_table(make_lazy_law(), 0, 7, o.FREE)
    assert np.array_equal(t.mass, t.mass[::-1, ::-1])
    assert t.k_lo == -t.k_hi and t.a_lo == -t.a_hi
    # exact for any symmetric law in rational arithmetic; doubles differ by rounding only
    law = make_laplace_law(12.0)
    t = o.build_table(law, 0, 4, o.FREE, exact=True)
    assert np.array_equal(t.mass, t.mass[::-1, ::-1])
    f = o.build_table(make_laplace_law(3.0), 0, 7, o.FREE)
    assert np.abs(f.mass - f.mass[::-1, ::-1]).max() < 1e-15


def test_positive_mass_nonincreasing():
    masses = [t.total() for t in o.table_chain(make_lazy_law(), 0, 30, o.POSITIVE)]
    assert all(b <= a for a, b in zip(masses, masses[1:]))


def test_table_serialisation_round_trip():
    t = o.build_table(make_lazy_law(), 0, 9, o.POSITIVE)
    u = o.JointLawTable.from_bytes(t.to_bytes())
    assert u.step == t.step and u.constraint == t.constraint
    assert u.k_lo == t.k_lo and u.a_lo == t.a_lo and np.array_equal(u.mass, t.mass)
    assert t.to_csv().startswith("k,a,p\n")


def test_survival_and_bound_probe_small():
    law = make_lazy_law()
    assert o.survival_probabilities(law, 1)[1] == 0.25
    b = o.bound_probe(law, [1, 2, 4, 8])
    assert b["tau_tail"][0] == 0.25
    assert set(b) >= {"joint_sup", "pos_sup", "grad_joint_k", "N"}


def test_backward_sample_unique_paths():
    law = make_lazy_law()
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert list(o.backward_sample(law, 3, rng).values) == [0, 1, 1, 0]
        assert list(o.backward_sample(law, 2, rng).values) == [0, 1, 0]


def test_backward_sample_frequencies():
    law = make_lazy_law()
    N = 5
    exact = defaultdict(Fraction)
    for s, p in brute_excursions(N):
        exact[tuple(int(x) for x in s)] += p
    tot = sum(exact.values())
    chain = o.LengthChain(law, N, 4 * N * N)
    rng = np.random.default_rng(1)
    draws = 100_000
    counts = defaultdict(int)
    for _ in range(draws):
        counts[tuple(int(x) for x in chain.sample(N, None, rng).positions)] += 1
    assert set(counts) <= set(exact)
    for key, p in exact.items():
        q = float(p / tot)
        sd = math.sqrt(q * (1 - q) / draws)
        assert abs(counts[key] / draws - q) < 4 * sd


def test_length_weights_match_excursion_law():
    law = make_lazy_law()
    chain = o.LengthChain(law, 12, 40)
    for L in (4, 9, 15):
        w = chain.length_weights(L)
        for N in range(2, 13):
            assert w[N] == pytest.approx(float(o.excursion_law(law, N, exact=True).get(L, 0)),
                                         abs=1e-16)


def test_budget_enforced():
    with pytest.raises(o.BudgetExceeded):
        o.build_table(make_lazy_law(), 0, 200, o.FREE, budget=10_000)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=1, max_size=3), st.integers(1, 25))
def test_dp_conservation_random_symmetric_laws(weights, n):
    # symmetric law on {-m..m} built from positive weights; always centred
    m = len(weights)
    w = np.array(weights[::-1] + [sum(weights)] + weights, dtype=float)
    law = IncrementLaw(np.arange(-m, m + 1), w / w.sum())
    t = o.build_table(law, 0, n, o.FREE)
    assert abs(math.fsum(t.mass.ravel()) - 1) < 1e-12
    assert np.all(t.mass >= 0)


# --- IPDSAW-type conditioning -----------------------------------------------------------


def brute_ipdsaw(steps, start, L, zero_end):
    """Exact conditional marginals of |S_i| (i < tau) by depth-first enumeration."""
    marg = defaultdict(float)
    total = 0.0
    stack = [((s0,), p0) for s0, p0 in start.items()]
    while stack:
        path, p = stack.pop()
        i = len(path) - 1
        k = i + sum(abs(x) for x in path[1:])
        for x, q in steps.items():
            s = path[-1] + x
            if path[-1] != 0 and path[-1] * s <= 0:
                if k == L - 1 and (s == 0 or not zero_end):
                    total += p * q
                    for j, y in enumerate(path):
                        marg[(j, abs(y))] += p * q
                continue
            if k + 1 + abs(s) <= L - 1:
                stack.append((path + (s,), p * q))
    return {key: v / total for key, v in marg.items()}, total


@pytest.mark.parametrize("L", [1, 3, 4, 5, 6])
@pytest.mark.parametrize("zero_end", [True, False])
def test_ipdsaw_law_matches_enumeration(L, zero_end):
    law, mu = make_laplace_law(2.0), make_mu_law(2.0)
    steps = {int(k): float(p) for k, p in zip(law.support, law.probabilities)}
    start = {int(k): float(p) for k, p in zip(mu.support, mu.probabilities)}
    ref, total = brute_ipdsaw(steps, start, L, zero_end)
    got = o.ipdsaw_conditional_law(law, mu, L, zero_end)
    assert got.conditioning_mass == pytest.approx(total, rel=1e-10)
    for (i, x), v in ref.items():
        assert got.marginals[i, x] == pytest.approx(v, abs=1e-12)
    assert got.marginals.sum() == pytest.approx(sum(ref.values()), abs=1e-12)


def test_ipdsaw_zero_mass_raises():
    with pytest.raises(o.ZeroConditioningMass):
        o.ipdsaw_conditional_law(make_laplace_law(2.0), make_mu_law(2.0), 2, True)


def test_ipdsaw_end_invariance_small():
    law, mu = make_laplace_law(2.0), make_mu_law(2.0)
    for L in (5, 9, 14):
        a = o.ipdsaw_conditional_law(law, mu, L, True).marginals
        b = o.ipdsaw_conditional_law(law, mu, L, False).marginals
        assert np.abs(a - b).max() < 1e-9
