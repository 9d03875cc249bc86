import warnings
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fermat_rays.morse import (DegenerateRecordWarning, MorseLedger, assemble_series, build_ledger,
                               check_relations, first_negative, format_ledger, one_plus_k_times,
                               parity_check, s_recursion)


def rec(mu, nondegenerate=True):
    return SimpleNamespace(index_mu=mu, nondegenerate=nondegenerate)


def ledger(counts, betti=None, L=None):
    return check_relations(MorseLedger(counts, {0: 1} if betti is None else betti,
                                       max_degree=3 if L is None else L))


degree_maps = st.dictionaries(st.integers(0, 5), st.integers(0, 4), max_size=6)


# ---------------------------------------------------------------- assemble_series


def test_assemble_examples():
    assert assemble_series([rec(0)]) == {0: 1}
    assert assemble_series([rec(0), rec(1)]) == {0: 1, 1: 1}
    assert assemble_series([]) == {}


def test_degenerate_records_are_excluded():
    notes = []
    with pytest.warns(DegenerateRecordWarning):
        counts = assemble_series([rec(0), rec(1, nondegenerate=False), rec(None)], notes)
    assert counts == {0: 1} and len(notes) == 2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        led = build_ledger([rec(0), rec(2, nondegenerate=False)])
    assert led.degenerate_warning and led.verdict == "degenerate_warning"


@given(st.lists(st.integers(0, 6), max_size=12), st.randoms())
def test_assemble_is_permutation_invariant(mus, random):
    records = [rec(m) for m in mus]
    shuffled = list(records)
    random.shuffle(shuffled)
    assert assemble_series(records) == assemble_series(shuffled)


# ---------------------------------------------------------------- check_relations


def test_relation_examples():
    one = ledger({0: 1})
    assert one.s_coeffs == [0, 0, 0, 0] and one.verdict == "consistent"
    three = ledger({0: 2, 1: 1})
    assert three.s_coeffs[:2] == [1, 0] and three.verdict == "consistent"
    assert three.total_count == 3 == three.total_betti + 2 * three.s_at_one
    empty = ledger({})
    assert empty.s_coeffs[0] == -1 and empty.verdict == "violated" and empty.violated_at == 0


def test_per_degree_inequalities():
    led = ledger({1: 1}, {0: 1, 1: 1}, L=2)
    assert led.inequalities == {0: False, 1: True, 2: True}


def test_default_truncation_degree():
    led = build_ledger([rec(0), rec(1)])
    assert led.max_degree == 3
    # two rays of indices 0 and 1 cannot close off over a contractible base
    assert led.verdict == "violated" and led.violated_at == 2
    assert build_ledger([rec(0), rec(1)], max_degree=1).verdict == "consistent"


def test_ignored_high_degrees_are_noted():
    led = build_ledger([rec(0), rec(4)], max_degree=2)
    assert any("above 2" in n for n in led.notes)


def test_ledger_rejects_negative_entries():
    with pytest.raises(ValueError):
        MorseLedger({0: -1}, {0: 1}, 2)
    with pytest.raises(ValueError):
        MorseLedger({0: 1}, {0: 1}, -1)


@given(degree_maps, degree_maps, st.integers(0, 6))
def test_recursion_identity(counts, betti, L):
    led = ledger(counts, betti, L)
    c = np.array([counts.get(k, 0) for k in range(L + 1)])
    b = np.array([betti.get(k, 0) for k in range(L + 1)])
    prod = one_plus_k_times(np.array(led.s_coeffs))
    assert np.array_equal(prod[:L + 1], c - b)
    assert prod[L + 1] == led.s_coeffs[L] == led.remainder
    # summing the identity at k = 1 gives the count relation up to the remainder
    assert c.sum() == b.sum() + 2 * led.s_at_one - led.remainder


@given(degree_maps, degree_maps, st.integers(0, 5), st.integers(0, 6))
def test_verdict_monotone_in_added_rays(counts, betti, l, L):
    before = ledger(counts, betti, L)
    more = dict(counts)
    more[l] = more.get(l, 0) + 1
    after = ledger(more, betti, L)
    assert after.s_coeffs[:l] == before.s_coeffs[:l]
    if before.verdict == "consistent" and after.verdict == "violated":
        assert after.violated_at >= l


def test_vectorized_helpers_agree_with_loops():
    rng = np.random.default_rng(0)
    c = rng.integers(0, 4, (50, 5))
    b = rng.integers(0, 4, (50, 5))
    S = s_recursion(c, b)
    for row in range(50):
        ref = []
        for l in range(5):
            ref.append(c[row, l] - b[row, l] - (ref[-1] if ref else 0))
        assert list(S[row]) == ref
        neg = [k for k, v in enumerate(ref) if v < 0]
        assert first_negative(S[row]) == (neg[0] if neg else -1)


# ---------------------------------------------------------------- parity


def test_parity_examples():
    one = parity_check(ledger({0: 1}), contractible=True)
    assert one.consistent
    two = parity_check(ledger({0: 1, 1: 1}), contractible=True)
    assert not two.consistent and "undercounted or non-minimal configuration" in two.message
    assert parity_check(ledger({0: 1, 1: 1}), contractible=False).consistent


def test_infinite_betti_note():
    rep = parity_check(ledger({0: 2, 1: 1}, {0: 1, 1: 1}), contractible=False, betti_infinite=True)
    assert rep.consistent and "cannot be verified" in rep.message and rep.largest_index == 1


def test_format_ledger_mentions_verdict_and_parity():
    led = ledger({0: 1, 1: 1}, L=3)
    text = format_ledger(led, parity_check(led, True))
    assert "violated at degree 2" in text and "WARNING" in text and "up to degree 3" in text
    assert "Z/2" in text
