import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from prethermal.pauli_algebra import ExtensiveOperator, pauli
from prethermal.sampling import random_operator
from prethermal.serialization import OperatorFormatError, dumps, loads, read_operator, write_operator

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_single_record_layout():
    text = dumps(pauli("Z0"))
    assert json.loads(text) == {"sites": [[0]], "letters": ["Z"], "re": 1.0, "im": 0.0}


@given(seeds)
def test_round_trip_is_exact(seed):
    A = random_operator(np.random.default_rng(seed), 6, 3, self_adjoint=False)
    B = loads(dumps(A))
    assert set(A.supports) == set(B.supports)
    for s in A.supports:
        assert np.array_equal(A.block(s), B.block(s))
    assert dumps(B) == dumps(A)


def test_file_round_trip(tmp_path):
    A = pauli("X0 Y1", 0.3)
    write_operator(tmp_path / "a.jsonl", A)
    assert read_operator(tmp_path / "a.jsonl").allclose(A, atol=0)


def test_empty_operator():
    assert dumps(ExtensiveOperator()) == ""
    assert loads("\n\n").is_zero


def test_duplicate_string_names_record():
    rec = '{"sites": [[0]], "letters": ["Z"], "re": 1, "im": 0}\n'
    with pytest.raises(OperatorFormatError, match="record 2: duplicate string"):
        loads(rec + rec)


@pytest.mark.parametrize(
    "line, message",
    [
        ('{"sites": [[0]], "letters": ["Z"]}', "malformed"),
        ("not json", "malformed"),
        ('{"sites": [[0], [1]], "letters": ["Z"], "re": 1, "im": 0}', "letters"),
        ('{"sites": [[0], [0]], "letters": ["Z", "Z"], "re": 1, "im": 0}', "repeated site"),
        ('{"sites": [[0]], "letters": ["X"], "re": 1, "im": 0}', "invalid letter"),
        ('{"sites": [[3]], "letters": ["Z"], "support": [[0]], "re": 1, "im": 0}', "outside"),
    ],
)
def test_malformed_records(line, message):
    with pytest.raises(OperatorFormatError, match=message):
        loads(line)


def test_nonfinite_coefficient_rejected():
    with pytest.raises(OperatorFormatError):
        dumps(pauli("Z0", float("nan")))


def test_negative_zero_is_written_canonically():
    op = pauli("X0", complex(-0.0, 0.5))
    text = dumps(op)
    assert '"re": 0,' in text
    assert dumps(loads(text)) == text
