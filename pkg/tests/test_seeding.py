import numpy as np
import pytest

from clt_lab.seeding import child_rng, child_seed


def test_same_key_same_stream():
    a = child_rng(7, "x", 3).standard_normal(8)
    b = child_rng(7, "x", 3).standard_normal(8)
    assert np.array_equal(a, b)


def test_distinct_keys_distinct_streams():
    a = child_rng(7, "x", 3).standard_normal(8)
    b = child_rng(7, "x", 4).standard_normal(8)
    c = child_rng(7, "y", 3).standard_normal(8)
    d = child_rng(8, "x", 3).standard_normal(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_nesting_via_child_seed_matches_flat_key():
    flat = child_rng(7, "est", 64, "wp-rep", 2).standard_normal(4)
    nested = child_rng(child_seed(7, "est", 64), "wp-rep", 2).standard_normal(4)
    assert np.array_equal(flat, nested)


def test_generator_passthrough_and_branch_refusal():
    g = child_rng(5)
    assert child_rng(g) is g
    with pytest.raises(TypeError):
        child_rng(g, "branch")
    with pytest.raises(TypeError):
        child_seed(g, "branch")


def test_string_labels_are_stable():
    # crc32-keyed labels must not collide with the raw int they hash to
    a = child_rng(0, "pool").standard_normal(4)
    b = child_rng(0, "est").standard_normal(4)
    assert not np.array_equal(a, b)


def test_negative_key_rejected():
    with pytest.raises(ValueError):
        child_rng(0, -3)
