"""Domain types, CSV ingestion, normalization, extremity."""

import numpy as np
import pytest

from fairpace.model import (
    AgentWeights,
    InstanceError,
    ValueSequence,
    extremity,
    load_csv,
    normalize_values,
    save_csv,
    validate_instance,
)


def test_validate_wellformed():
    report = validate_instance(ValueSequence([[1, 0], [0, 1]]), AgentWeights([1, 1]))
    assert report.ok and report.failures == ()


def test_validate_negative_value_located():
    report = validate_instance(ValueSequence([[1, 0], [0, -1]]), AgentWeights([1, 1]))
    assert not report.ok
    assert "negative value at item 2, agent 2" in report.failures


def test_validate_dimension_mismatch_and_all_zero_agent():
    report = validate_instance(ValueSequence([[1, 0], [1, 0]]), AgentWeights([1, 51, 2]))
    assert not report.ok
    assert any("dimension mismatch" in f for f in report.failures)
    assert any("agent 2 has all-zero values" in f for f in report.failures)


def test_nonpositive_weight_rejected():
    with pytest.raises(InstanceError, match="nonpositive weight at agent 2"):
        AgentWeights([1, 0])


def test_validate_nan_located():
    report = validate_instance(ValueSequence([[1, float("nan")]]), AgentWeights([1, 1]))
    assert not report.ok
    assert any("non-finite value at item 1, agent 2" in f for f in report.failures)


def test_load_csv_basic(tmp_path):
    path = tmp_path / "inst.csv"
    path.write_text("a,b\n1,0\n0,1\n")
    vs = load_csv(path)
    assert vs.t == 2 and vs.n == 2
    assert vs.agents == ("a", "b")
    assert np.array_equal(vs.matrix, [[1, 0], [0, 1]])


def test_load_csv_malformed_number(tmp_path):
    path = tmp_path / "inst.csv"
    path.write_text("a,b\n1,0\n1,x\n")
    with pytest.raises(InstanceError, match="line 3: malformed number"):
        load_csv(path)


def test_load_csv_ragged_row(tmp_path):
    path = tmp_path / "inst.csv"
    path.write_text("a,b\n1,0,3\n")
    with pytest.raises(InstanceError, match="line 2: ragged row"):
        load_csv(path)


def test_load_csv_no_items(tmp_path):
    path = tmp_path / "inst.csv"
    path.write_text("a,b\n")
    with pytest.raises(InstanceError, match="no items"):
        load_csv(path)


def test_csv_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(42)
    for k in range(5):
        m = rng.random((7, 3)) * 10.0 ** float(rng.integers(-12, 12))
        m[0, 0] = 1 / 3  # not exactly representable in decimal
        m[1, 1] = 1e-300
        vs = ValueSequence(m, ("x", "y", "z"))
        path = tmp_path / f"rt{k}.csv"
        save_csv(path, vs)
        back = load_csv(path)
        assert back.agents == vs.agents
        assert np.array_equal(back.matrix, vs.matrix)  # bitwise


def test_normalize_examples():
    # single agent whose mean is already one
    out = normalize_values(ValueSequence([[2.0], [0.0]]))
    assert np.array_equal(out.matrix, [[2.0], [0.0]])
    # scale by a half
    out = normalize_values(ValueSequence([[4.0], [0.0]]))
    assert np.array_equal(out.matrix, [[2.0], [0.0]])
    # per-column scaling: column sums become t
    vs = ValueSequence([[1.0, 3.0], [1.0, 1.0]])
    scale = vs.t / vs.matrix.sum(axis=0)  # independent column-sum arithmetic
    expected = vs.matrix * scale
    out = normalize_values(vs)
    assert np.allclose(out.matrix, expected, rtol=0, atol=0)
    assert np.allclose(out.matrix, [[1.0, 1.5], [1.0, 0.5]])
    assert np.allclose(out.matrix.sum(axis=0), vs.t, rtol=1e-12)


def test_normalize_idempotent():
    rng = np.random.default_rng(3)
    m = rng.random((20, 4))
    once = normalize_values(ValueSequence(m))
    twice = normalize_values(once)
    assert np.allclose(once.matrix, twice.matrix, rtol=1e-12)


def test_normalize_all_zero_agent_error():
    with pytest.raises(InstanceError, match="agent 2"):
        normalize_values(ValueSequence([[1.0, 0.0], [1.0, 0.0]]))


def test_extremity_examples():
    assert extremity(ValueSequence([[1.0], [1.0], [0.0]])) == 1.0
    assert extremity(ValueSequence([[0.1], [1.0]])) == pytest.approx(0.1)
    vs = ValueSequence([[0.5, 0.2], [1.0, 0.0], [0.5, 1.0]])
    assert extremity(vs) == pytest.approx(0.2)


def test_extremity_all_zero_error():
    with pytest.raises(InstanceError, match="agent 1"):
        extremity(ValueSequence([[0.0, 1.0]]))


def test_extremity_scale_free_under_normalization():
    rng = np.random.default_rng(11)
    for _ in range(10):
        m = rng.random((12, 3))
        m[m < 0.3] = 0.0
        m[0, :] = rng.uniform(0.2, 1.0, 3)  # keep every agent positive somewhere
        vs = ValueSequence(m)
        assert extremity(normalize_values(vs)) == pytest.approx(extremity(vs), rel=1e-12)


def test_values_are_immutable():
    vs = ValueSequence([[1.0, 2.0]])
    with pytest.raises(ValueError):
        vs.matrix[0, 0] = 5.0
