import io
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdfdr import CompetitionResult, Label, RngHandle, ScoredVariable, make_rng
from tdfdr.core import format_float, parallel_map
from tdfdr.exceptions import InputError


def test_label_parse():
    assert Label.parse("T") is Label.TARGET
    assert Label.parse(" d ") is Label.DECOY
    with pytest.raises(InputError):
        Label.parse("X")


def test_scored_variable_rejects_nan():
    with pytest.raises(InputError):
        ScoredVariable(0, Label.TARGET, float("nan"))


def test_counts_match_labels():
    res = CompetitionResult([0, 1, 2, 3], [True, True, False, True], [1.0, 2.0, 3.0, 4.0])
    assert res.n_target == 3 and res.n_decoy == 1
    assert res.n_target + res.n_decoy == len(res)
    assert [v.label for v in res.variables].count(Label.DECOY) == 1
    np.testing.assert_array_equal(res.target_indices, [0, 1, 3])


def test_result_rejects_duplicates_and_nan():
    with pytest.raises(InputError):
        CompetitionResult([0, 0], [True, False], [1.0, 2.0])
    with pytest.raises(InputError):
        CompetitionResult([0, 1], [True, False], [1.0, np.inf])


def test_result_is_read_only():
    res = CompetitionResult([0], [True], [1.0])
    with pytest.raises(ValueError):
        res.scores[0] = 2.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(),
                          st.floats(allow_nan=False, allow_infinity=False, width=64)),
                min_size=0, max_size=30))
def test_csv_round_trip(rows):
    res = CompetitionResult(np.arange(len(rows)), [r[0] for r in rows], [r[1] for r in rows])
    back = CompetitionResult.from_csv(res.to_csv())
    np.testing.assert_array_equal(back.indices, res.indices)
    np.testing.assert_array_equal(back.is_target, res.is_target)
    np.testing.assert_array_equal(back.scores, res.scores)


def test_csv_accepts_scientific_notation():
    res = CompetitionResult.from_csv("index,label,score\n3,T,1.5e-3\n7,D,2E2\n")
    np.testing.assert_array_equal(res.scores, [1.5e-3, 200.0])


@pytest.mark.parametrize("text, line", [
    ("index,label,score\n0,T,1\n1,X,2\n", "line 3"),
    ("index,label,score\n0,T,abc\n", "line 2"),
    ("index,label,score\nzz,T,1\n", "line 2"),
    ("index,label,score\n0,T\n", "line 2"),
    ("idx,lab,sc\n0,T,1\n", "line 1"),
    ("", "line 1"),
])
def test_csv_errors_carry_line_numbers(text, line):
    with pytest.raises(InputError, match=line):
        CompetitionResult.from_csv(io.StringIO(text))


def test_format_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, np.nextafter(1.0, 2.0)):
        assert float(format_float(x)) == x


def test_rng_determinism_and_streams():
    a = make_rng(42, 0).generator.random(100)
    b = make_rng(42, 0).generator.random(100)
    c = make_rng(42, 1).generator.random(100)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rng_children_independent_of_creation_order():
    root = make_rng(5)
    first = [root.child(k).generator.random(3) for k in range(4)]
    second = [root.child(k).generator.random(3) for k in reversed(range(4))][::-1]
    for x, y in zip(first, second):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(first[0], first[1])


def test_rng_streams_identical_across_threads():
    def draw(stream):
        return make_rng(42, stream).generator.random(50)

    serial = [draw(s) for s in range(16)]
    threaded = parallel_map(draw, range(16), threads=8)
    for x, y in zip(serial, threaded):
        np.testing.assert_array_equal(x, y)


def test_rng_rejects_bad_seed():
    with pytest.raises(InputError):
        RngHandle(-1)
    with pytest.raises(InputError):
        RngHandle(2**64)
    RngHandle(2**64 - 1)


def test_parallel_map_preserves_order():
    seen = set()

    def f(x):
        seen.add(threading.get_ident())
        return x * x

    assert parallel_map(f, range(50), threads=4) == [x * x for x in range(50)]
