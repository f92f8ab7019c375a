"""Tape op unit tests: frozen examples plus independent oracles."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sfhand import tensor as T
from sfhand.errors import DimensionError, UsageError


def make_tape(dtype="float64"):
    return T.Tape(dtype=dtype)


def triple_loop_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i, t] * b[t, j]
            out[i, j] = s
    return out


class TestMatmul:
    def test_identity(self):
        tape = make_tape()
        x = tape.constant(np.arange(9.0).reshape(3, 3))
        eye = tape.constant(np.eye(3))
        npt.assert_array_equal(T.matmul(eye, x).value, x.value)

    def test_forced_by_definition(self):
        tape = make_tape()
        a = tape.constant([[1.0, 2.0], [3.0, 4.0]])
        b = tape.constant([[1.0], [1.0]])
        npt.assert_array_equal(T.matmul(a, b).value, [[3.0], [7.0]])

    def test_against_triple_loop_oracle(self):
        rng = np.random.default_rng(7)
        tape = make_tape("float64")
        a = rng.standard_normal((5, 4))
        b = rng.standard_normal((4, 3))
        got = T.matmul(tape.constant(a), tape.constant(b)).value
        npt.assert_allclose(got, triple_loop_matmul(a, b), atol=1e-12)

    def test_shape_mismatch(self):
        tape = make_tape()
        with pytest.raises(DimensionError):
            T.matmul(tape.constant(np.zeros((2, 3))), tape.constant(np.zeros((2, 3))))


class TestSoftmax:
    def test_uniform_on_constant_row(self):
        tape = make_tape()
        out = T.softmax_rows(tape.constant([[0.0, 0.0, 0.0]]))
        npt.assert_allclose(out.value, [[1 / 3, 1 / 3, 1 / 3]], atol=1e-15)

    def test_shift_invariance(self):
        tape = make_tape()
        x = np.array([[0.3, -1.2, 4.0, 0.0]])
        a = T.softmax_rows(tape.constant(x)).value
        b = T.softmax_rows(tape.constant(x + 123.456)).value
        npt.assert_allclose(a, b, atol=1e-14)

    def test_direct_formula_oracle(self):
        tape = make_tape()
        x = np.array([[1.0, 2.0, 3.0]])
        out = T.softmax_rows(tape.constant(x)).value
        e = np.exp(x)
        npt.assert_allclose(out, e / e.sum(), atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.lists(st.floats(-60, 60), min_size=2, max_size=6),
            min_size=1,
            max_size=4,
        ).filter(lambda rows: len({len(r) for r in rows}) == 1)
    )
    def test_rows_sum_to_one(self, rows):
        x = np.array(rows)
        tape64 = make_tape("float64")
        s64 = T.softmax_rows(tape64.constant(x)).value
        npt.assert_allclose(s64.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all(s64 >= 0)
        tape32 = make_tape("float32")
        s32 = T.softmax_rows(tape32.constant(x)).value
        npt.assert_allclose(s32.sum(axis=-1), 1.0, atol=1e-6)


class TestBackward:
    def test_sum_gives_ones(self):
        tape = make_tape()
        p = tape.parameter("p", np.random.default_rng(0).standard_normal((3, 4)))
        grads = tape.backward(T.sum_(p))
        npt.assert_array_equal(grads["p"], np.ones((3, 4)))

    def test_squared_norm_gives_2p(self):
        tape = make_tape()
        vals = np.random.default_rng(1).standard_normal(5)
        p = tape.parameter("p", vals)
        grads = tape.backward(T.sum_(T.mul(p, p)))
        npt.assert_allclose(grads["p"], 2 * vals, atol=1e-12)

    def test_non_scalar_loss_rejected(self):
        tape = make_tape()
        p = tape.parameter("p", np.ones(3))
        with pytest.raises(UsageError):
            tape.backward(p)

    def test_reset_keeps_parameters(self):
        tape = make_tape()
        p = tape.parameter("p", np.ones(3))
        T.sum_(T.mul(p, p))
        assert len(tape.nodes) > 1
        tape.reset()
        assert tape.nodes == [p]
        grads = tape.backward(T.sum_(p))
        npt.assert_array_equal(grads["p"], np.ones(3))

    def test_unused_parameter_gets_zero_grad(self):
        tape = make_tape()
        p = tape.parameter("p", np.ones(3))
        q = tape.parameter("q", np.ones(2))
        grads = tape.backward(T.sum_(p))
        npt.assert_array_equal(grads["q"], np.zeros(2))


class TestOpValues:
    def test_concat_and_slice_roundtrip(self):
        tape = make_tape()
        a = tape.constant(np.arange(6.0).reshape(2, 3))
        b = tape.constant(np.arange(9.0).reshape(3, 3))
        cat = T.concat([a, b], axis=0)
        npt.assert_array_equal(cat.value[0:2], a.value)
        npt.assert_array_equal(cat[2:5].value, b.value)

    def test_embedding_lookup(self):
        tape = make_tape()
        table = tape.parameter("emb", np.arange(12.0).reshape(4, 3))
        out = T.embedding(table, np.array([3, 0, 3]))
        npt.assert_array_equal(out.value, table.value[[3, 0, 3]])
        grads = tape.backward(T.sum_(out))
        # duplicate row 3 accumulates twice
        npt.assert_array_equal(grads["emb"][3], 2 * np.ones(3))
        npt.assert_array_equal(grads["emb"][1], np.zeros(3))

    def test_layer_norm_normalizes(self):
        tape = make_tape()
        x = tape.constant(np.random.default_rng(3).standard_normal((4, 8)) * 5 + 2)
        g = tape.parameter("g", np.ones(8))
        b = tape.parameter("b", np.zeros(8))
        out = T.layer_norm(x, g, b).value
        npt.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        npt.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)

    def test_cross_entropy_matches_manual(self):
        tape = make_tape()
        logits = np.array([[2.0, 0.5, -1.0], [0.0, 0.0, 0.0]])
        targets = np.array([0, 2])
        ce = T.cross_entropy(tape.constant(logits), targets).item()
        probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        manual = -np.mean([np.log(probs[0, 0]), np.log(probs[1, 2])])
        npt.assert_allclose(ce, manual, atol=1e-12)

    def test_cross_entropy_weights(self):
        tape = make_tape()
        logits = np.array([[1.0, -1.0], [1.0, -1.0]])
        targets = np.array([0, 1])
        full = T.cross_entropy(tape.constant(logits), targets, weights=[1.0, 0.0]).item()
        only_first = T.cross_entropy(tape.constant(logits[:1]), targets[:1]).item()
        npt.assert_allclose(full, only_first / 2, atol=1e-12)

    def test_min_max_values(self):
        tape = make_tape()
        a = tape.constant([1.0, 5.0, 2.0])
        b = tape.constant([3.0, 3.0, 3.0])
        npt.assert_array_equal(T.maximum(a, b).value, [3.0, 5.0, 3.0])
        npt.assert_array_equal(T.minimum(a, b).value, [1.0, 3.0, 2.0])

    def test_cross_tape_mixing_rejected(self):
        t1, t2 = make_tape(), make_tape()
        with pytest.raises(UsageError):
            T.add(t1.constant(1.0), t2.constant(1.0))
