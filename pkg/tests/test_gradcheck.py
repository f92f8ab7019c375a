"""Finite-difference checks of every differentiable tape op."""

import numpy as np

from sfhand import tensor as T
from sfhand.gradcheck import grad_check


def tape_fn(build):
    """Wrap a graph builder into the (params -> loss, grads) shape."""

    def fn(params):
        tape = T.Tape(dtype="float64")
        handles = {k: tape.parameter(k, v) for k, v in params.items()}
        loss = build(tape, handles)
        grads = tape.backward(loss)
        return loss.item(), grads

    return fn


def run(build, params, tol=1e-4, **kw):
    report = grad_check(tape_fn(build), params, **kw)
    assert report.passed(tol), f"\n{report}"
    return report


def test_quadratic_bowl_near_exact():
    # Central differences are exact for quadratics up to roundoff.
    report = run(
        lambda tape, h: T.sum_(T.mul(h["p"], h["p"])),
        {"p": np.random.default_rng(0).standard_normal(7)},
        tol=1e-8,
    )
    assert report.max_rel_err <= 1e-8


def test_matmul_chain():
    rng = np.random.default_rng(1)
    run(
        lambda tape, h: T.sum_(T.matmul(h["a"], h["b"])),
        {"a": rng.standard_normal((3, 4)), "b": rng.standard_normal((4, 2))},
    )


def test_softmax_cross_entropy_composite():
    rng = np.random.default_rng(2)
    targets = np.array([2, 0, 1])

    def build(tape, h):
        logits = T.matmul(h["x"], h["w"])
        return T.cross_entropy(logits, targets)

    report = run(
        build,
        {"x": rng.standard_normal((3, 5)), "w": rng.standard_normal((5, 4))},
        tol=1e-6,
    )
    assert report.max_rel_err <= 1e-6


def test_elementwise_ops():
    rng = np.random.default_rng(3)
    run(
        lambda tape, h: T.sum_(
            T.div(T.mul(T.gelu(h["a"]), T.sigmoid(h["b"])), T.add(T.abs_(h["c"]), 1.5))
        ),
        {
            "a": rng.standard_normal((2, 3)),
            "b": rng.standard_normal((2, 3)),
            "c": rng.standard_normal((2, 3)) + 3.0,  # keep |c| away from the kink
        },
    )


def test_min_max_at_generic_points():
    rng = np.random.default_rng(4)
    run(
        lambda tape, h: T.sum_(
            T.add(T.maximum(h["a"], h["b"]), T.minimum(T.mul(h["a"], 2.0), h["b"]))
        ),
        {"a": rng.standard_normal(6), "b": rng.standard_normal(6)},
    )


def test_layer_norm_and_embedding():
    rng = np.random.default_rng(5)
    ids = np.array([1, 3, 1])

    def build(tape, h):
        x = T.embedding(h["table"], ids)
        return T.mean_(T.layer_norm(x, h["g"], h["b"]) )

    run(
        build,
        {
            "table": rng.standard_normal((5, 4)),
            "g": rng.uniform(0.5, 1.5, 4),
            "b": rng.standard_normal(4),
        },
    )


def test_softmax_rows_through_matmul():
    rng = np.random.default_rng(6)

    def build(tape, h):
        attn = T.softmax_rows(T.matmul(h["q"], T.transpose(h["k"])))
        out = T.matmul(attn, h["v"])
        return T.sum_(T.mul(out, out))

    run(
        build,
        {
            "q": rng.standard_normal((3, 4)),
            "k": rng.standard_normal((5, 4)),
            "v": rng.standard_normal((5, 4)),
        },
    )


def test_concat_slice_reshape():
    rng = np.random.default_rng(7)

    def build(tape, h):
        cat = T.concat([h["a"], h["b"]], axis=0)
        part = cat[1:4]
        return T.sum_(T.mul(T.reshape(part, (1, -1)), 3.0))

    run(
        build,
        {"a": rng.standard_normal((2, 3)), "b": rng.standard_normal((3, 3))},
    )


def test_report_counts_coordinates():
    p = {"p": np.random.default_rng(8).standard_normal(50)}
    report = grad_check(
        tape_fn(lambda tape, h: T.sum_(T.mul(h["p"], h["p"]))),
        p,
        max_coords_per_param=10,
    )
    assert report.params[0].checked <= 10
    assert report.total_checked >= 1
