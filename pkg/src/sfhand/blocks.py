"""Shared transformer building blocks (pre-LN, multi-head, tape ops)."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tape, Tensor

MASK_BIAS = -1e9  # additive score for keys excluded from attention


def init_linear(tape: Tape, rng: np.random.Generator, name: str, nin: int, nout: int):
    w = tape.parameter(f"{name}.w", rng.normal(0.0, 1.0 / np.sqrt(nin), (nin, nout)))
    b = tape.parameter(f"{name}.b", np.zeros(nout))
    return {"w": w, "b": b}


def init_layernorm(tape: Tape, name: str, dim: int):
    g = tape.parameter(f"{name}.g", np.ones(dim))
    b = tape.parameter(f"{name}.b", np.zeros(dim))
    return {"g": g, "b": b}


def init_table(tape: Tape, rng: np.random.Generator, name: str, rows: int, dim: int,
               std: float = 0.02) -> Tensor:
    return tape.parameter(name, rng.normal(0.0, std, (rows, dim)))


def init_attention(tape: Tape, rng: np.random.Generator, name: str, d: int):
    return {
        "q": init_linear(tape, rng, f"{name}.q", d, d),
        "k": init_linear(tape, rng, f"{name}.k", d, d),
        "v": init_linear(tape, rng, f"{name}.v", d, d),
        "o": init_linear(tape, rng, f"{name}.o", d, d),
    }


def init_block(tape: Tape, rng: np.random.Generator, name: str, d: int, mlp_ratio: int,
               cross: bool = False):
    p = {
        "ln1": init_layernorm(tape, f"{name}.ln1", d),
        "attn": init_attention(tape, rng, f"{name}.attn", d),
        "ln_mlp": init_layernorm(tape, f"{name}.ln_mlp", d),
        "mlp1": init_linear(tape, rng, f"{name}.mlp1", d, d * mlp_ratio),
        "mlp2": init_linear(tape, rng, f"{name}.mlp2", d * mlp_ratio, d),
    }
    if cross:
        p["ln_x"] = init_layernorm(tape, f"{name}.ln_x", d)
        p["xattn"] = init_attention(tape, rng, f"{name}.xattn", d)
    return p


def linear(x: Tensor, p) -> Tensor:
    return T.add(T.matmul(x, p["w"]), p["b"])


def layer_norm(x: Tensor, p) -> Tensor:
    return T.layer_norm(x, p["g"], p["b"])


def attention(q_in: Tensor, kv_in: Tensor, p, heads: int, key_mask=None,
              key_pos: Tensor | None = None) -> Tensor:
    """Multi-head scaled dot-product attention.

    ``key_mask`` is a binary vector over keys (0 = excluded); ``key_pos``
    is an optional positional tensor added to keys only.
    """
    d = q_in.value.shape[1]
    dh = d // heads
    q = linear(q_in, p["q"])
    k_src = T.add(kv_in, key_pos) if key_pos is not None else kv_in
    k = linear(k_src, p["k"])
    v = linear(kv_in, p["v"])
    bias = None
    if key_mask is not None:
        bias = (1.0 - np.asarray(key_mask, dtype=q_in.tape.dtype)) * MASK_BIAS
    outs = []
    for h in range(heads):
        cols = slice(h * dh, (h + 1) * dh)
        scores = T.mul(T.matmul(q[:, cols], T.transpose(k[:, cols])), 1.0 / np.sqrt(dh))
        if bias is not None:
            scores = T.add(scores, bias)
        outs.append(T.matmul(T.softmax_rows(scores), v[:, cols]))
    merged = outs[0] if heads == 1 else T.concat(outs, axis=1)
    return linear(merged, p["o"])


def mlp(x: Tensor, p) -> Tensor:
    return linear(T.gelu(linear(x, p["mlp1"])), p["mlp2"])


def encoder_block(x: Tensor, p, heads: int, key_mask=None) -> Tensor:
    h = layer_norm(x, p["ln1"])
    x = T.add(x, attention(h, h, p["attn"], heads, key_mask=key_mask))
    x = T.add(x, mlp(layer_norm(x, p["ln_mlp"]), p))
    return x


def decoder_block(x: Tensor, mem: Tensor, p, heads: int,
                  mem_pos: Tensor | None = None) -> Tensor:
    h = layer_norm(x, p["ln1"])
    x = T.add(x, attention(h, h, p["attn"], heads))
    x = T.add(x, attention(layer_norm(x, p["ln_x"]), mem, p["xattn"], heads,
                           key_pos=mem_pos))
    x = T.add(x, mlp(layer_norm(x, p["ln_mlp"]), p))
    return x
