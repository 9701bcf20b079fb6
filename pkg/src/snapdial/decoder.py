"""The three conditional LSTM generation cells (lm / mem / hybrid), the
vocabulary output head, and teacher-forced turn evaluation with gate and
action-vector tracing. Backward passes are hand-derived per cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import (DimensionError, Parameter, Rng, sigmoid, softmax,
                       tanh)
from .encoder import init_tensor

VARIANTS = ("lm", "mem", "hybrid")


class DecoderParams:
    """Weights of one generation network. The 4n x 3n block acts on the
    concatenation (m, w_j, h_{j-1}); its four row groups are (input,
    forget, output, candidate-or-reading) gates in that order."""

    def __init__(self, vocab_size: int, n: int, variant: str,
                 rng: Rng | None = None, init_range: float = 0.3):
        if variant not in VARIANTS:
            raise ValueError(f"unknown decoder variant {variant!r}")
        self.variant = variant
        self.n = n
        self.vocab_size = vocab_size
        self.emb = Parameter("dec.emb",
                             init_tensor(rng, (vocab_size, n), init_range))
        self.W_big = Parameter("dec.W_big",
                               init_tensor(rng, (4 * n, 3 * n), init_range))
        self.W_c = None
        if variant != "lm":
            self.W_c = Parameter("dec.W_c",
                                 init_tensor(rng, (n, 2 * n), init_range))
        self.W_out = Parameter("dec.W_out",
                               init_tensor(rng, (vocab_size, n), init_range))
        self.b_out = Parameter("dec.b_out", np.zeros(vocab_size))
        self.params = [self.emb, self.W_big]
        if self.W_c is not None:
            self.params.append(self.W_c)
        self.params += [self.W_out, self.b_out]


def cell_step(dp: DecoderParams, m: np.ndarray, w: np.ndarray,
              h: np.ndarray, c: np.ndarray):
    """One decoder step; returns (h', c', cache for the backward pass)."""
    n = dp.n
    if not (m.shape == w.shape == h.shape == c.shape == (n,)):
        raise DimensionError("cell_step operands must all have size n")
    xcat = np.concatenate([m, w, h])
    a = dp.W_big.value @ xcat
    if dp.variant == "lm":
        g = sigmoid(a[:3 * n])
        i, f, o = g[:n], g[n:2 * n], g[2 * n:]
        chat = tanh(a[3 * n:])
        c2 = f * c + i * chat
        tc = tanh(c2)
        h2 = o * tc
        cache = (xcat, m, h, c, i, f, o, None, chat, None, c2, tc)
        return h2, c2, cache
    g = sigmoid(a)
    i, f, o, r = g[:n], g[n:2 * n], g[2 * n:3 * n], g[3 * n:]
    wh = xcat[n:]
    chat = tanh(dp.W_c.value @ wh)
    if dp.variant == "mem":
        c2 = f * c + i * chat + r * m
        tc = tanh(c2)
        h2 = o * tc
    else:  # hybrid
        c2 = f * c + i * chat
        tc = tanh(c2)
        h2 = o * tc + r * m
    cache = (xcat, m, h, c, i, f, o, r, chat, wh, c2, tc)
    return h2, c2, cache


def cell_backward_core(dp: DecoderParams, cache, dh: np.ndarray,
                       dc_in: np.ndarray):
    """Chain rule for one step without touching gradient accumulators.

    Returns (dm, dw, dh_prev, dc_prev, da, dpre_c); the caller owns the
    dW_big += da (x) xcat and dW_c += dpre_c (x) wh rank-one updates (batched
    per turn in backward_teacher)."""
    n = dp.n
    xcat, m, h_prev, c_prev, i, f, o, r, chat, wh, c2, tc = cache
    if dp.variant == "hybrid":
        do = dh * tc
        dr = dh * m
        dm = dh * r
        dc = dc_in + dh * o * (1.0 - tc * tc)
    else:
        do = dh * tc
        dc = dc_in + dh * o * (1.0 - tc * tc)
        if dp.variant == "mem":
            dr = dc * m
            dm = dc * r
        else:
            dr = None
            dm = np.zeros(n)
    df = dc * c_prev
    di = dc * chat
    dchat = dc * i
    dc_prev = dc * f

    da = np.empty(4 * n)
    da[:n] = di * i * (1 - i)
    da[n:2 * n] = df * f * (1 - f)
    da[2 * n:3 * n] = do * o * (1 - o)
    dpre_c = None
    if dp.variant == "lm":
        da[3 * n:] = dchat * (1.0 - chat * chat)
        dw = np.zeros(n)
        dh_out = np.zeros(n)
    else:
        da[3 * n:] = dr * r * (1.0 - r)
        dpre_c = dchat * (1.0 - chat * chat)
        dwh = dp.W_c.value.T @ dpre_c
        dw = dwh[:n]
        dh_out = dwh[n:]

    dxcat = dp.W_big.value.T @ da
    dm = dm + dxcat[:n]
    dw = dw + dxcat[n:2 * n]
    dh_prev = dh_out + dxcat[2 * n:]
    return dm, dw, dh_prev, dc_prev, da, dpre_c


def cell_backward(dp: DecoderParams, cache, dh: np.ndarray, dc_in: np.ndarray):
    """Backward for one step; accumulates dW_big / dW_c and returns
    (dm, dw, dh_prev, dc_prev)."""
    dm, dw, dh_prev, dc_prev, da, dpre_c = cell_backward_core(dp, cache, dh,
                                                              dc_in)
    xcat = cache[0]
    dp.W_big.grad += da[:, None] * xcat[None, :]
    if dpre_c is not None:
        dp.W_c.grad += dpre_c[:, None] * cache[9][None, :]
    return dm, dw, dh_prev, dc_prev


def output_dist(dp: DecoderParams, h: np.ndarray) -> np.ndarray:
    return softmax(dp.W_out.value @ h + dp.b_out.value)


def output_logprobs(dp: DecoderParams, h: np.ndarray) -> np.ndarray:
    logits = dp.W_out.value @ h + dp.b_out.value
    z = logits - np.max(logits)
    return z - np.log(np.sum(np.exp(z)))


class FixedConditioning:
    """Turn-constant action vector; gradient contributions are summed and
    handed back to the policy network after the turn."""

    def __init__(self, m: np.ndarray):
        self.m = m
        self.dm = np.zeros_like(m)
        self._zero = np.zeros_like(m)

    def step(self, j, w, h_prev):
        return self.m

    def backward_step(self, j, dm):
        self.dm += dm
        return self._zero, self._zero


class AttentiveConditioning:
    """Per-step action vector from an attention turn context."""

    def __init__(self, att_turn):
        self.turn = att_turn
        self.alphas: list[np.ndarray] = []

    def step(self, j, w, h_prev):
        m = self.turn.step(j, w, h_prev)
        self.alphas.append(self.turn.steps[-1][3])
        return m

    def backward_step(self, j, dm):
        return self.turn.backward_step(j, dm)


@dataclass
class TurnTape:
    """Everything recorded during one teacher-forced turn."""
    input_ids: list[int]
    target_ids: list[int]
    caches: list = field(repr=False, default_factory=list)
    H: np.ndarray | None = None
    m_rows: np.ndarray | None = None
    gates: dict | None = None
    token_logprobs: np.ndarray | None = None
    probs: np.ndarray | None = None
    alphas: np.ndarray | None = None

    @property
    def loss(self) -> float:
        return -float(np.sum(self.token_logprobs))


def forward_teacher(dp: DecoderParams, target_ids: list[int], provider,
                    bos_id: int, keep_probs: bool = True) -> TurnTape:
    """Teacher-forced evaluation of one turn. Starts from zero state and a
    beginning-of-sentence embedding, consumes the gold token at every
    step, and records log-probs, gate traces, and action vectors."""
    if not target_ids:
        raise DimensionError("forward_teacher needs at least one target")
    n = dp.n
    inputs = [bos_id] + list(target_ids[:-1])
    h = np.zeros(n)
    c = np.zeros(n)
    caches = []
    hs = []
    ms = []
    for j, tok in enumerate(inputs):
        w = dp.emb.value[tok]
        m = provider.step(j, w, h)
        h, c, cache = cell_step(dp, m, w, h, c)
        caches.append(cache)
        hs.append(h)
        ms.append(m)
    H = np.stack(hs)
    logits = H @ dp.W_out.value.T + dp.b_out.value
    zmax = logits.max(axis=1, keepdims=True)
    z = logits - zmax
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    idx = np.arange(len(target_ids))
    tape = TurnTape(input_ids=inputs, target_ids=list(target_ids),
                    caches=caches, H=H, m_rows=np.stack(ms))
    tape.token_logprobs = logp[idx, target_ids]
    if keep_probs:
        tape.probs = np.exp(logp)
    gates = {
        "i": np.stack([cc[4] for cc in caches]),
        "f": np.stack([cc[5] for cc in caches]),
        "o": np.stack([cc[6] for cc in caches]),
    }
    if dp.variant != "lm":
        gates["r"] = np.stack([cc[7] for cc in caches])
    tape.gates = gates
    if isinstance(provider, AttentiveConditioning):
        tape.alphas = np.stack(provider.alphas)
    return tape


def backward_teacher(dp: DecoderParams, tape: TurnTape, provider,
                     dm_hat: np.ndarray | None = None):
    """Backward pass over a recorded turn: output head, cells in reverse,
    and per-step conditioning contributions. `dm_hat`, when given, is a
    (steps x d) gradient block added onto the leading components of each
    step's action-vector gradient."""
    if tape.probs is None:
        raise DimensionError("tape was recorded without probabilities")
    J = len(tape.target_ids)
    dlogits = tape.probs.copy()
    dlogits[np.arange(J), tape.target_ids] -= 1.0
    dp.W_out.grad += dlogits.T @ tape.H
    dp.b_out.grad += dlogits.sum(axis=0)
    dH = dlogits @ dp.W_out.value

    dh_next = np.zeros(dp.n)
    dc_next = np.zeros(dp.n)
    da_rows = [None] * J
    dpre_rows = [None] * J
    for j in reversed(range(J)):
        dh = dH[j] + dh_next
        dm, dw, dh_prev, dc_prev, da, dpre_c = cell_backward_core(
            dp, tape.caches[j], dh, dc_next)
        da_rows[j] = da
        dpre_rows[j] = dpre_c
        if dm_hat is not None:
            dm[:dm_hat.shape[1]] += dm_hat[j]
        dwx, dhx = provider.backward_step(j, dm)
        dw = dw + dwx
        dp.emb.grad[tape.input_ids[j]] += dw
        dh_next = dh_prev + dhx
        dc_next = dc_prev
    # batched rank-one accumulations for the heavy weight blocks
    da_mat = np.stack(da_rows)
    xcat_mat = np.stack([c[0] for c in tape.caches])
    dp.W_big.grad += da_mat.T @ xcat_mat
    if dp.variant != "lm":
        dpre_mat = np.stack(dpre_rows)
        wh_mat = xcat_mat[:, dp.n:]
        dp.W_c.grad += dpre_mat.T @ wh_mat
