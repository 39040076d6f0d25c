import math

import pytest

from pipeforge import canonical


def test_number_formatting_is_fixed_width():
    assert canonical.canonical_number(0.1 + 0.2) == 0.3
    assert canonical.canonical_number(2.0) == 2.0
    assert canonical.canonical_number(7) == 7


def test_nan_and_inf_rejected():
    with pytest.raises(ValueError):
        canonical.canonical_number(float("nan"))
    with pytest.raises(ValueError):
        canonical.canonical_number(math.inf)


def test_dumps_sorts_keys_and_ends_with_newline():
    text = canonical.dumps({"b": 1, "a": {"z": 2, "y": [1.0, 2]}})
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("\n")


def test_dumps_rejects_unserializable():
    with pytest.raises(TypeError):
        canonical.dumps({"x": object()})


def test_digest_is_stable_across_key_order():
    a = {"x": 1, "y": [1, 2, 3]}
    b = {"y": [1, 2, 3], "x": 1}
    assert canonical.digest(a) == canonical.digest(b)


def test_round_trip(tmp_path):
    obj = {"a": 1.5, "b": ["x", True, None]}
    path = tmp_path / "obj.json"
    canonical.dump_path(obj, path)
    assert canonical.load_path(path) == obj
