"""Conditioning-side networks: the intent LSTM sentence encoder, the
database operator (6-bin match vector + entity pointer), and the policy
network that fuses intent, match vector, and tracker beliefs into the
action vector — in both fixed per-turn and attention-based per-step forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import corpus as cp
from .numerics import (DimensionError, Parameter, Rng, sigmoid,
                       softmax, softmax_backward, tanh)


def init_tensor(rng: Rng | None, shape, init_range: float) -> np.ndarray:
    if rng is None:
        return np.zeros(shape)
    return rng.uniform(-init_range, init_range, shape)


class IntentNet:
    """Word embeddings + a standard LSTM; the final hidden state is the
    sentence representation."""

    def __init__(self, vocab_size: int, n: int, rng: Rng | None = None,
                 init_range: float = 0.3):
        self.n = n
        self.emb = Parameter("intent.emb",
                             init_tensor(rng, (vocab_size, n), init_range))
        self.W = Parameter("intent.W",
                           init_tensor(rng, (4 * n, 2 * n), init_range))
        self.params = [self.emb, self.W]

    def forward(self, token_ids: list[int], bos_id: int | None = None):
        """Returns (z, cache). An empty token list is encoded as a single
        end-of-sentence step when `bos_id` (the fallback token) is given."""
        ids = list(token_ids)
        if not ids:
            if bos_id is None:
                raise DimensionError("cannot encode an empty token sequence")
            ids = [bos_id]
        n = self.n
        h = np.zeros(n)
        c = np.zeros(n)
        steps = []
        for tok in ids:
            x = self.emb.value[tok]
            xh = np.concatenate([x, h])
            a = self.W.value @ xh
            g = sigmoid(a[:3 * n])
            i, f, o = g[:n], g[n:2 * n], g[2 * n:]
            chat = tanh(a[3 * n:])
            c_new = f * c + i * chat
            tc = tanh(c_new)
            h_new = o * tc
            steps.append((tok, xh, h, c, i, f, o, chat, c_new, tc))
            h, c = h_new, c_new
        return h, steps

    def backward(self, dz: np.ndarray, steps):
        n = self.n
        dh = dz.copy()
        dc = np.zeros(n)
        da_rows = []
        xh_rows = []
        for tok, xh, h_prev, c_prev, i, f, o, chat, c_new, tc in reversed(steps):
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            df = dc * c_prev
            di = dc * chat
            dchat = dc * i
            da = np.empty(4 * n)
            da[:n] = di * i * (1 - i)
            da[n:2 * n] = df * f * (1 - f)
            da[2 * n:3 * n] = do * o * (1 - o)
            da[3 * n:] = dchat * (1 - chat * chat)
            da_rows.append(da)
            xh_rows.append(xh)
            dxh = self.W.value.T @ da
            self.emb.grad[tok] += dxh[:n]
            dh = dxh[n:]
            dc = dc * f
        self.W.grad += np.stack(da_rows).T @ np.stack(xh_rows)


@dataclass
class DbResult:
    x: np.ndarray
    matches: list[str]
    pointer: str | None


def db_query(belief, ontology: cp.Ontology, database: cp.Database,
             rng: Rng, previous_pointer: str | None = None) -> DbResult:
    """Constraint per informable slot = argmax over its belief classes
    (dontcare / not-mentioned leave the slot unconstrained); match count
    expressed as a 6-bin one-hot {0,1,2,3,4,>=5}. The entity pointer is
    kept while it still matches, re-sampled uniformly otherwise, absent
    when nothing matches."""
    constraints = {}
    for slot in ontology.informable_slots:
        classes = ontology.informable[slot] + [cp.DONTCARE, cp.NOT_MENTIONED]
        top = classes[int(np.argmax(belief.informable[slot]))]
        constraints[slot] = top
    matches = database.query(constraints)
    names = [e["name"] for e in matches]
    x = np.zeros(6)
    x[min(len(names), 5)] = 1.0
    if not names:
        pointer = None
    elif previous_pointer in names:
        pointer = previous_pointer
    else:
        pointer = rng.choice(names)
    return DbResult(x=x, matches=names, pointer=pointer)


class PolicyNet:
    """Action-vector network. The fixed form fuses intent z, match vector
    x, and all tracker beliefs once per turn; the attentive form reweights
    the per-tracker terms at every generation step."""

    def __init__(self, ontology: cp.Ontology, representation: str, n: int,
                 rng: Rng | None = None, init_range: float = 0.3,
                 attention: bool = False):
        self.ontology = ontology
        self.representation = representation
        self.n = n
        self.attention = attention
        # an informable slot and its requestable twin are distinct
        # trackers; requestable tracker keys carry a req. prefix
        self.slot_dims: dict[str, int] = {}
        for slot in ontology.informable_slots:
            if representation == "summary":
                self.slot_dims[slot] = 3
            else:
                self.slot_dims[slot] = len(ontology.informable[slot]) + 2
        for slot in ontology.requestable:
            self.slot_dims[f"req.{slot}"] = 1
        self.slots = (list(ontology.informable_slots)
                      + [f"req.{slot}" for slot in ontology.requestable])

        self.W_zm = Parameter("pol.W_zm", init_tensor(rng, (n, n), init_range))
        self.W_xm = Parameter("pol.W_xm", init_tensor(rng, (n, 6), init_range))
        self.W_pm = {
            slot: Parameter(f"pol.W_pm.{slot}",
                            init_tensor(rng, (n, self.slot_dims[slot]),
                                        init_range))
            for slot in self.slots}
        self.params = [self.W_zm, self.W_xm] + [self.W_pm[s] for s in self.slots]
        if attention:
            self.A = Parameter("att.A", init_tensor(rng, (n, n), init_range))
            self.B = {slot: Parameter(f"att.B.{slot}",
                                      init_tensor(rng, (n, self.slot_dims[slot]),
                                                  init_range))
                      for slot in self.slots}
            self.C = Parameter("att.C", init_tensor(rng, (n, n), init_range))
            self.D = Parameter("att.D", init_tensor(rng, (n, n), init_range))
            self.r = Parameter("att.r", init_tensor(rng, (n,), init_range))
            self.P = Parameter("att.P", init_tensor(rng, (n, 6), init_range))
            self.params += ([self.A] + [self.B[s] for s in self.slots]
                            + [self.C, self.D, self.r, self.P])

    def _check(self, bel_vecs):
        if [s for s, _ in bel_vecs] != self.slots:
            raise DimensionError("belief vectors do not match tracker slots")
        for s, v in bel_vecs:
            if v.shape != (self.slot_dims[s],):
                raise DimensionError(
                    f"belief vector for {s} has shape {v.shape}, "
                    f"expected ({self.slot_dims[s]},)")

    # -- fixed form (one action vector per turn)

    def forward(self, z: np.ndarray, x: np.ndarray, bel_vecs):
        self._check(bel_vecs)
        u = self.W_zm.value @ z + self.W_xm.value @ x
        for s, p in bel_vecs:
            u = u + self.W_pm[s].value @ p
        m = tanh(u)
        return m, (z, x, bel_vecs, m)

    def backward(self, dm: np.ndarray, cache) -> np.ndarray:
        z, x, bel_vecs, m = cache
        du = dm * (1.0 - m * m)
        self.W_zm.grad += du[:, None] * z[None, :]
        self.W_xm.grad += du[:, None] * x[None, :]
        for s, p in bel_vecs:
            self.W_pm[s].grad += du[:, None] * p[None, :]
        return self.W_zm.value.T @ du

    # -- attentive form (one action vector per generation step)

    def att_turn(self, z: np.ndarray, x: np.ndarray, bel_vecs) -> "AttTurn":
        self._check(bel_vecs)
        return AttTurn(self, z, x, bel_vecs)


class AttTurn:
    """Per-turn attention context; step() computes m_j and records what the
    backward pass needs, eval_step() is the recording-free variant used
    during decoding. Per-step backward work is kept to matvecs; the
    rank-one parameter updates are batched in finish_backward()."""

    def __init__(self, net: PolicyNet, z, x, bel_vecs):
        self.net = net
        self.z = z
        self.x = x
        self.bel_vecs = bel_vecs
        self.base = net.W_zm.value @ z + net.W_xm.value @ x
        self.v = z + net.P.value @ x
        self.Av = net.A.value @ self.v
        self.q = np.stack([net.W_pm[s].value @ p for s, p in bel_vecs])
        self.Bp = np.stack([net.B[s].value @ p for s, p in bel_vecs])
        self.steps = []
        self.dz = np.zeros(net.n)
        self._du = {}
        self._dsum = {}
        self._dpre_acc = np.zeros_like(self.Bp)
        self._dr_acc = np.zeros(net.n)
        self._finished = False

    def _scores(self, w: np.ndarray, h_prev: np.ndarray):
        pre = self.Av + self.Bp + (self.net.C.value @ w
                                   + self.net.D.value @ h_prev)
        T = np.tanh(pre)
        alpha = softmax(T @ self.net.r.value)
        return T, alpha

    def eval_step(self, w: np.ndarray, h_prev: np.ndarray):
        T, alpha = self._scores(w, h_prev)
        m = tanh(self.base + alpha @ self.q)
        return m, alpha

    def step(self, j: int, w: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
        T, alpha = self._scores(w, h_prev)
        m = tanh(self.base + alpha @ self.q)
        self.steps.append((w, h_prev, T, alpha, m))
        return m

    def backward_step(self, j: int, dm: np.ndarray):
        net = self.net
        w, h_prev, T, alpha, m = self.steps[j]
        du = dm * (1.0 - m * m)
        self._du[j] = du
        dalpha = self.q @ du
        de = softmax_backward(dalpha, alpha)
        self._dr_acc += T.T @ de
        dpre = de[:, None] * net.r.value[None, :]
        dpre *= (1.0 - T * T)
        self._dpre_acc += dpre
        dsum = dpre.sum(axis=0)
        self._dsum[j] = dsum
        dw = net.C.value.T @ dsum
        dh = net.D.value.T @ dsum
        return dw, dh

    def finish_backward(self):
        """Flush the batched parameter-gradient contributions; idempotent."""
        if self._finished or not self._du:
            self._finished = True
            return
        net = self.net
        order = sorted(self._du)
        DU = np.stack([self._du[j] for j in order])
        DS = np.stack([self._dsum[j] for j in order])
        W_rows = np.stack([self.steps[j][0] for j in order])
        H_rows = np.stack([self.steps[j][1] for j in order])
        alphas = np.stack([self.steps[j][3] for j in order])
        du_sum = DU.sum(axis=0)
        ds_sum = DS.sum(axis=0)
        net.W_zm.grad += du_sum[:, None] * self.z[None, :]
        net.W_xm.grad += du_sum[:, None] * self.x[None, :]
        slot_du = alphas.T @ DU
        for k, (s, p) in enumerate(self.bel_vecs):
            net.W_pm[s].grad += slot_du[k][:, None] * p[None, :]
            net.B[s].grad += self._dpre_acc[k][:, None] * p[None, :]
        net.r.grad += self._dr_acc
        net.A.grad += ds_sum[:, None] * self.v[None, :]
        net.C.grad += DS.T @ W_rows
        net.D.grad += DS.T @ H_rows
        dv = net.A.value.T @ ds_sum
        net.P.grad += dv[:, None] * self.x[None, :]
        self.dz += net.W_zm.value.T @ du_sum + dv
        self._finished = True


def policy_attentive(net: PolicyNet, z, x, bel_vecs, w, h_prev):
    """One-shot attentive policy evaluation: (m_j, {slot: weight})."""
    turn = net.att_turn(z, x, bel_vecs)
    m, alpha = turn.eval_step(w, h_prev)
    return m, {s: float(a) for (s, _), a in zip(bel_vecs, alpha)}
