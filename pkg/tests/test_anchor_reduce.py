import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dcsurv.anchor import (column_ranges, generate_anchor, read_anchor, slice_anchor,
                           write_anchor)
from dcsurv.data import ValidationError
from dcsurv.reduce import (DimensionError, PrivacyError, apply_reducer, check_private_dim,
                           default_dim, encode_party, fit_reducer)


def test_anchor_support(rng):
    a = generate_anchor([(0, 1)] * 4, 100, rng)
    assert a.X.shape == (100, 4)
    assert a.X.min() >= 0 and a.X.max() <= 1


def test_degenerate_range(rng):
    a = generate_anchor([(0, 1), (2, 2)], 50, rng)
    assert np.all(a.X[:, 1] == 2)


def test_bad_range(rng):
    with pytest.raises(ValidationError):
        generate_anchor([(1, 0)], 5, rng)
    with pytest.raises(ValidationError):
        generate_anchor([(0, 1)], 0, rng)


def test_anchor_reproducible():
    ranges = [(-2, 3), (0, 10)]
    a = generate_anchor(ranges, 30, np.random.default_rng(4))
    b = generate_anchor(ranges, 30, np.random.default_rng(4))
    assert np.array_equal(a.X, b.X)


def test_slice_anchor(rng):
    a = generate_anchor([(0, 1)] * 6, 20, rng)
    assert np.array_equal(slice_anchor(a, range(6)), a.X)
    assert np.array_equal(slice_anchor(a, [0, 1, 2]), a.X[:, :3])
    glued = np.hstack([slice_anchor(a, [0, 1, 2]), slice_anchor(a, [3, 4, 5])])
    assert np.array_equal(glued, a.X)
    with pytest.raises(IndexError):
        slice_anchor(a, [6])


def test_anchor_roundtrip(tmp_path, rng):
    X = rng.standard_normal((40, 3))
    a = generate_anchor(column_ranges(X), 40, rng, seed=1)
    write_anchor(a, tmp_path)
    b = read_anchor(tmp_path)
    assert np.array_equal(a.X, b.X)
    assert b.ranges == a.ranges


# ----------------------------------------------------------------------------- reducers

def test_full_rank_pca_is_lossless(rng):
    X = rng.standard_normal((50, 4))
    model = fit_reducer(X, 4)
    Y = apply_reducer(model, X)
    back = Y @ model.components.T * model.col_scales + model.col_means
    assert np.allclose(back, X, atol=1e-10, rtol=0)
    assert np.allclose(model.components.T @ model.components, np.eye(4), atol=1e-10)


def test_rank_one_explained_variance(rng):
    v = np.array([1.0, -2.0, 0.5])
    X = rng.standard_normal((30, 1)) * v
    model = fit_reducer(X, 1)
    assert model.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-10)


def test_sign_canonical_and_deterministic(rng):
    X = rng.standard_normal((40, 5))
    a, b = fit_reducer(X, 3), fit_reducer(X.copy(), 3)
    assert np.array_equal(a.components, b.components)
    idx = np.argmax(np.abs(a.components), axis=0)
    assert np.all(a.components[idx, range(3)] > 0)


def test_apply_examples(rng):
    X = rng.standard_normal((60, 3)) + 5
    model = fit_reducer(X, 2, standardize=True)
    Y = apply_reducer(model, X)
    assert np.allclose(Y.mean(axis=0), 0, atol=1e-10)
    assert np.allclose(apply_reducer(model, model.col_means[None, :]), 0, atol=1e-12)
    anchor = rng.uniform(size=(17, 3))
    assert apply_reducer(model, anchor).shape == (17, 2)
    with pytest.raises(DimensionError):
        apply_reducer(model, np.zeros((2, 4)))


def test_dimension_errors(rng):
    X = rng.standard_normal((10, 3))
    with pytest.raises(DimensionError):
        fit_reducer(X, 4)
    with pytest.raises(DimensionError):
        fit_reducer(X[:1], 1)


def test_zero_variance_column_standardized(rng, caplog):
    X = np.column_stack([rng.standard_normal(20), np.full(20, 3.0)])
    model = fit_reducer(X, 1, standardize=True)
    assert model.col_scales[1] == 1.0
    assert "zero-variance" in caplog.text


@settings(max_examples=50, deadline=None)
@given(X=arrays(float, (12, 4), elements=st.floats(-10, 10)),
       a=st.floats(-3, 3), k=st.integers(1, 4))
def test_linearity_and_nonexpansion(X, a, k):
    model = fit_reducer(X, k)
    u, w = X[0], X[1]
    lhs = apply_reducer(model, a * u + (1 - a) * w)
    rhs = a * apply_reducer(model, u) + (1 - a) * apply_reducer(model, w)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(X).max()))
    centered = (X - model.col_means) / model.col_scales
    out = apply_reducer(model, X)
    assert np.all(np.linalg.norm(out, axis=1) <= np.linalg.norm(centered, axis=1) + 1e-10)


def test_private_dimension_rule():
    assert default_dim(3) == 2 and default_dim(13) == 7
    check_private_dim(2, 3)
    with pytest.raises(PrivacyError):
        check_private_dim(3, 3)


def test_reducer_never_pickles(rng):
    model = fit_reducer(rng.standard_normal((10, 3)), 2)
    with pytest.raises(TypeError):
        pickle.dumps(model)


def test_encode_party_protocol_refuses_full_dim(rng):
    from dcsurv.data import PartyBlock
    block = PartyBlock(1, 1, np.arange(10), rng.standard_normal((10, 3)), ("a", "b", "c"),
                       col_index=np.arange(3))
    anchor = rng.uniform(size=(8, 3))
    d, a = encode_party(block, anchor, 2, protocol=True)
    assert d.matrix.shape == (10, 2) and a.matrix.shape == (8, 2)
    with pytest.raises(PrivacyError):
        encode_party(block, anchor, 3, protocol=True)
