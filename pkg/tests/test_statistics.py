import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import naive
from conftest import toy_events
from rhem.events import Event
from rhem.statistics import (
    Covariates, StatCatalog, StatState, Statistic, closure, evaluate_row, hyperedge_degree,
    num_collab, parse_catalog, prior_success, sub_rep, succ_disparity,
)

ALL = parse_catalog("sub_rep:1-4, prior_succ:1-4, closure, succ_disparity, num_collab, "
                    "num_collab_succ, num_auth")


def toy_state(backend, half_life=None):
    s = StatState("n", half_life=half_life, backend=backend)
    for ev in toy_events():
        s.advance([ev])
    return s


def test_toy_worked_values(backend):
    s = toy_state(backend)
    t = 6.0
    assert sub_rep(s, "CFG", 1, t) == 2
    assert sub_rep(s, "DEH", 2, t) == 1 / 3
    assert sub_rep(s, "FHI", 3, t) == 1
    assert closure(s, "CFG", t) == 3
    assert closure(s, "DEH", t) == 5 / 3
    assert closure(s, "AI", t) == 0
    assert num_collab(s, "F", t) == 6
    assert list(evaluate_row(s, "CFG", t, parse_catalog("sub_rep:1, closure"))) == [2, 3]
    assert evaluate_row(s, "CFG", t, StatCatalog()).shape == (0,)


def test_toy_degrees(backend):
    s = toy_state(backend)
    assert hyperedge_degree(s, "A", 6.0) == 2
    assert hyperedge_degree(s, "DE", 6.0) == 1
    assert hyperedge_degree(s, "AI", 6.0) == 0
    assert hyperedge_degree(s, ("nobody",), 6.0) == 0
    assert s.pair_weight("C", "D", 6.0) == 1
    assert s.co_actors("F", 6.0) == {"C": 1, "D": 1, "E": 1, "G": 1, "H": 1, "I": 1}


def test_same_time_events_invisible(backend):
    s = StatState("n", backend=backend)
    s.advance([Event("a", 1.0, "n", ("A", "B")), Event("b", 1.0, "n", ("A", "B"))])
    assert sub_rep(s, "AB", 2, 1.0) == 0
    assert sub_rep(s, "AB", 2, 1.5) == 2


def test_advance_errors():
    s = StatState("n")
    with pytest.raises(ValueError, match="mixes times"):
        s.advance([Event("a", 1.0, "n", ("A",)), Event("b", 2.0, "n", ("B",))])
    s.advance([Event("a", 2.0, "n", ("A",))])
    with pytest.raises(ValueError, match="backwards"):
        s.advance([Event("b", 1.0, "n", ("B",))])
    with pytest.raises(ValueError, match="network"):
        s.advance([Event("c", 3.0, "other", ("B",))])
    with pytest.raises(ValueError):
        StatState(half_life=0)


def test_query_validation():
    s = StatState()
    with pytest.raises(ValueError, match="empty"):
        s.evaluate([()], ALL)
    with pytest.raises(ValueError, match="repeats"):
        s.evaluate([("A", "A")], ALL)
    with pytest.raises(ValueError):
        sub_rep(s, "AB", 0)
    with pytest.raises(ValueError):
        Statistic("sub_rep", 0)
    with pytest.raises(ValueError):
        hyperedge_degree(s, ())


def test_prior_success_examples(backend):
    s = StatState(backend=backend)
    assert prior_success(s, "AB", 1, 1.0) == 0
    s.advance([Event("e", 1.0, "n", ("A", "B"), None, 3.0)])
    assert prior_success(s, "AB", 1, 2.0) == 3
    z = StatState(backend=backend)
    z.advance([Event("e", 1.0, "n", ("A", "B"), None, 0.0)])
    for p in (1, 2, 3):
        assert prior_success(z, "ABC", p, 2.0) == 0


def test_succ_disparity_examples(backend):
    s = StatState(backend=backend)
    s.advance([Event("e", 1.0, "n", ("B",), None, 2.0), Event("f", 1.0, "n", ("C", "D"), None, 1.0)])
    assert succ_disparity(s, "A", 2.0) == 0
    assert succ_disparity(s, "AB", 2.0) == math.sqrt(2)
    assert succ_disparity(s, "CD", 2.0) == 0


def test_num_collab_examples(backend):
    s = StatState(backend=backend)
    assert num_collab(s, "AB", 1.0) == 0
    for i, h in enumerate(["AB", "ABC", "BD"]):
        s.advance([Event(f"e{i}", float(i + 1), "n", tuple(h), None, 1.0)])
    assert num_collab(s, "AB", 9.0, success_weighted=True) == num_collab(s, "AB", 9.0)


def test_decay_exact_half(backend):
    dec = StatState("n", half_life=5.0, backend=backend)
    dec.advance([Event("only", 1.0, "n", tuple("CDEFG"), None, 2.0)])
    raw1 = StatState("n", backend=backend)
    raw1.advance([Event("only", 1.0, "n", tuple("CDEFG"), None, 2.0)])
    qs = [tuple("CFG"), tuple("DEH"), tuple("CD"), tuple("C")]
    cat = parse_catalog("sub_rep:1-3, closure, num_collab, num_collab_succ")
    a = dec.evaluate(qs, cat, 6.0)
    b = raw1.evaluate(qs, cat, 6.0)
    assert np.array_equal(a, 0.5 * b)
    assert dec.weight(1.0, 6.0) == 0.5
    # ratios are unaffected by a common factor
    cat2 = parse_catalog("prior_succ:1-2")
    assert np.array_equal(dec.evaluate(qs, cat2, 6.0), raw1.evaluate(qs, cat2, 6.0))


def test_decay_limit(backend):
    slow = toy_state(backend, half_life=1e9)
    raw = toy_state(backend)
    qs = [tuple("CFG"), tuple("DEH"), tuple("FHI"), tuple("AB")]
    np.testing.assert_allclose(slow.evaluate(qs, ALL, 6.0), raw.evaluate(qs, ALL, 6.0), rtol=1e-6)


def random_instance(rng, decay):
    n_act = rng.randint(2, 12)
    actors = [chr(65 + i) for i in range(n_act)]
    events = []
    for i in range(rng.randint(0, 30)):
        h = tuple(rng.sample(actors, rng.randint(1, min(6, n_act))))
        events.append((float(rng.randint(0, 10)), h, float(rng.randint(-3, 5))))
    half_life = rng.uniform(0.5, 8.0) if decay else None
    queries = [tuple(rng.sample(actors, rng.randint(1, min(6, n_act)))) for _ in range(3)]
    return events, half_life, queries, rng.choice([0.5, 3.0, 5.5, 10.5, 11.0])


def check_against_oracle(events, half_life, queries, t, backend):
    s = StatState(half_life=half_life, backend=backend)
    for time, grp in itertools.groupby(sorted(events, key=lambda e: e[0]), key=lambda e: e[0]):
        batch = [Event(f"e{i}_{time}", time, "n", h, None, y) for i, (_, h, y) in enumerate(grp)]
        s.advance(batch)
    got = s.evaluate(queries, ALL, t)
    for q, h in enumerate(queries):
        for j, stat in enumerate(ALL):
            want = naive.evaluate(events, h, stat, t, half_life)
            if half_life is None and stat.kind != "succ_disparity":
                assert got[q, j] == want, (stat.name, h, got[q, j], want)
            else:
                assert got[q, j] == pytest.approx(want, rel=1e-9, abs=1e-12), (stat.name, h)


@pytest.mark.parametrize("decay", [False, True])
def test_oracle_random(backend, decay):
    rng = random.Random(11 if decay else 7)
    for _ in range(40):
        check_against_oracle(*random_instance(rng, decay), backend)


@given(st.integers(0, 2 ** 32), st.booleans())
def test_oracle_hypothesis(seed, decay):
    check_against_oracle(*random_instance(random.Random(seed), decay), None)


@given(st.integers(0, 2 ** 32))
def test_nesting_and_permutation(seed):
    rng = random.Random(seed)
    events, _, queries, t = random_instance(rng, False)
    s = StatState()
    for i, (time, h, y) in enumerate(sorted(events, key=lambda e: e[0])):
        s.advance([Event(f"e{i}", time, "n", h, None, y)])
    s2 = StatState()
    for i, (time, h, y) in enumerate(sorted(events, key=lambda e: e[0])):
        s2.advance([Event(f"e{i}", time, "n", tuple(reversed(h)), None, y)])
    cat = parse_catalog("sub_rep:1-4")
    for h in queries:
        vals = s.evaluate([h], cat, t)[0]
        for p in range(1, 4):
            if vals[p] > 0:
                assert vals[p - 1] > 0
        perm = tuple(rng.sample(h, len(h)))
        np.testing.assert_allclose(s.evaluate([perm], ALL, t), s.evaluate([h], ALL, t), rtol=1e-12)
        np.testing.assert_allclose(s2.evaluate([h], ALL, t), s.evaluate([h], ALL, t), rtol=1e-12)


def test_intersection_identity():
    rng = random.Random(3)
    for _ in range(20):
        events, _, queries, t = random_instance(rng, False)
        for h in queries:
            for p in range(1, len(h) + 1):
                lhs = sum(naive.degree(events, sub, t) for sub in itertools.combinations(h, p))
                rhs = sum(math.comb(len(set(h) & set(he)), p) for te, he, _ in events if te < t)
                assert lhs == rhs


def test_closure_zero_without_shared_coactor(backend):
    s = StatState(backend=backend)
    s.advance([Event("a", 1.0, "n", ("A", "X")), Event("b", 1.0, "n", ("B", "Y"))])
    assert closure(s, "AB", 2.0) == 0


def test_covariates(tmp_path):
    p = tmp_path / "cov.csv"
    p.write_text("actor,affil,age\nA,u1,30\nB,u1,40\nC,u2,50\n")
    cov = Covariates.from_csv(p)
    s = StatState(covariates=cov)
    cat = parse_catalog("cov_same:affil, cov_mean:age, cov_disparity:age")
    out = s.evaluate([("A", "B"), ("A", "B", "C"), ("A",)], cat, 1.0)
    assert out[0].tolist() == [1.0, 35.0, pytest.approx(math.sqrt(50))]
    assert out[1, 0] == pytest.approx(2 / 3)
    assert out[2].tolist() == [1.0, 30.0, 0.0]
    with pytest.raises(KeyError, match="no covariates"):
        StatState().evaluate([("A",)], cat, 1.0)
    with pytest.raises(KeyError, match="not in data"):
        s.evaluate([("A",)], parse_catalog("cov_mean:height"), 1.0)
    with pytest.raises(ValueError, match="numeric"):
        s.evaluate([("A",)], parse_catalog("cov_mean:affil"), 1.0)


def test_catalog_parsing():
    cat = parse_catalog("sub_rep:1-3, closure, prior_succ:2, succ_disparity")
    assert cat.names == ["sub_rep_1", "sub_rep_2", "sub_rep_3", "closure", "prior_succ_2",
                         "succ_disparity"]
    assert cat.needs_outcome
    assert not parse_catalog("sub_rep:1, closure").needs_outcome
    for bad in ["sub_rep", "sub_rep:0", "sub_rep:3-1", "closure:2", "bogus", "cov_mean", "sub_rep:x"]:
        with pytest.raises(ValueError):
            parse_catalog(bad)
    with pytest.raises(ValueError, match="duplicate"):
        parse_catalog("closure, closure")
    with pytest.raises(ValueError, match="num_auth"):
        parse_catalog("closure, num_auth").check_rhem()
    for s in parse_catalog("sub_rep:10, cov_same:affil_x, num_collab_succ, closure"):
        assert Statistic.from_name(s.name) == s
