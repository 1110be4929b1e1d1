"""Miniature frozen decoder-only language model with exact manual gradients.

Sequences mix three kinds of items: base-vocabulary ids, concept identifier ids
(resolved to the concept block's identifier row), and injected embedding
vectors (projected image tokens, soft concept tokens, or raw vectors). The
backward pass yields exact gradients either for the trainable concept
parameters only (token blocks + new classifier columns) or, for the one-off
pretraining build step, for every weight of the network.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InputError
from .token_init import ConceptTokenBlock
from .tokenizer import BOS_ID, EOS_ID, Vocabulary

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 64
    layers: int = 2
    heads: int = 2
    context: int = 512
    vocab: int = 512  # base vocabulary size N
    mlp_ratio: int = 4

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "layers": self.layers,
            "heads": self.heads,
            "context": self.context,
            "vocab": self.vocab,
            "mlp_ratio": self.mlp_ratio,
        }


@dataclass
class ThetaParams:
    """The trainable parameter set: one token block per concept plus the new
    classifier columns appended for the concept identifier ids."""

    blocks: list[ConceptTokenBlock]
    classifier: np.ndarray  # (D, m)

    @property
    def m(self) -> int:
        return len(self.blocks)

    def copy(self) -> "ThetaParams":
        return ThetaParams(
            blocks=[
                ConceptTokenBlock(b.concept_id, b.sks.copy(), b.tokens.copy())
                for b in self.blocks
            ],
            classifier=self.classifier.copy(),
        )


@dataclass
class ThetaGrads:
    blocks: list[np.ndarray]  # per concept: (k+1, D), row 0 = identifier row
    classifier: np.ndarray  # (D, m)


class SoftToken:
    """Reference to soft token `index` of concept `concept` inside a sequence."""

    __slots__ = ("concept", "index")

    def __init__(self, concept: int, index: int):
        self.concept = concept
        self.index = index


@dataclass
class SequenceBatch:
    """One training/evaluation sequence: optional projected image prefix,
    system-prompt items, question items, and answer ids (end with EOS)."""

    image: np.ndarray | None
    prompt: list
    question: list
    answer: list[int] = field(default_factory=list)


def init_weights(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded random weights, GPT-2 style scaling on residual projections."""
    rng = np.random.default_rng(seed)
    d, ratio = config.dim, config.mlp_ratio
    res_scale = 1.0 / math.sqrt(2 * config.layers)
    w = {
        "tok_emb": rng.normal(0, 0.02, (config.vocab, d)),
        "pos_emb": rng.normal(0, 0.02, (config.context, d)),
        "lnf.g": np.ones(d),
        "lnf.b": np.zeros(d),
        "head": rng.normal(0, 0.02, (d, config.vocab)),
    }
    for i in range(config.layers):
        w[f"l{i}.ln1.g"] = np.ones(d)
        w[f"l{i}.ln1.b"] = np.zeros(d)
        w[f"l{i}.attn.wq"] = rng.normal(0, 0.02, (d, d))
        w[f"l{i}.attn.wk"] = rng.normal(0, 0.02, (d, d))
        w[f"l{i}.attn.wv"] = rng.normal(0, 0.02, (d, d))
        w[f"l{i}.attn.wo"] = rng.normal(0, 0.02 * res_scale, (d, d))
        w[f"l{i}.ln2.g"] = np.ones(d)
        w[f"l{i}.ln2.b"] = np.zeros(d)
        w[f"l{i}.mlp.w1"] = rng.normal(0, 0.02, (d, ratio * d))
        w[f"l{i}.mlp.b1"] = np.zeros(ratio * d)
        w[f"l{i}.mlp.w2"] = rng.normal(0, 0.02 * res_scale, (ratio * d, d))
        w[f"l{i}.mlp.b2"] = np.zeros(d)
    return w


def _gelu(x):
    u = math.sqrt(2 / math.pi) * (x + 0.044715 * x**3)
    return 0.5 * x * (1.0 + np.tanh(u))


def _gelu_grad(x):
    c = math.sqrt(2 / math.pi)
    u = c * (x + 0.044715 * x**3)
    t = np.tanh(u)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3 * 0.044715 * x**2)


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layer_norm_grad(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        - dxhat.mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


class TinyVLM:
    """Frozen 2-layer causal transformer over the expandable vocabulary.

    All arithmetic is float64. The instance is immutable after construction
    and safe for concurrent reads; trainable state lives in ThetaParams.
    """

    def __init__(
        self,
        config: ModelConfig,
        weights: dict[str, np.ndarray],
        vocab: Vocabulary | None = None,
    ):
        self.config = config
        self.weights = {k: np.asarray(v, dtype=np.float64) for k, v in weights.items()}
        self.vocab = vocab

    # -- sequence assembly ---------------------------------------------------

    def _items(self, batch: SequenceBatch):
        items: list = [BOS_ID]
        image_len = 0
        if batch.image is not None:
            img = np.asarray(batch.image, dtype=np.float64)
            if img.ndim != 2 or img.shape[1] != self.config.dim:
                raise InputError(
                    f"image prefix must be (q, {self.config.dim}), got {img.shape}"
                )
            items.extend(img)
            image_len = img.shape[0]
        items.extend(batch.prompt)
        items.extend(batch.question)
        items.extend(int(a) for a in batch.answer)
        return items, image_len

    def _embed(self, batch: SequenceBatch, theta: ThetaParams | None):
        items, _ = self._items(batch)
        L = len(items)
        if L > self.config.context:
            raise CapacityError(
                f"sequence length {L} exceeds context {self.config.context}"
            )
        n_base = self.config.vocab
        m = theta.m if theta is not None else 0
        d = self.config.dim
        emb = np.empty((L, d))
        id_positions: list[tuple[int, int]] = []  # (pos, base id)
        theta_positions: list[tuple[int, int, int]] = []  # (pos, concept, row)
        for pos, item in enumerate(items):
            if isinstance(item, (int, np.integer)):
                tid = int(item)
                if tid < 0 or tid >= n_base + m:
                    raise InputError(f"unknown token id {tid}")
                if tid < n_base:
                    emb[pos] = self.weights["tok_emb"][tid]
                    id_positions.append((pos, tid))
                else:
                    j = tid - n_base
                    emb[pos] = theta.blocks[j].sks
                    theta_positions.append((pos, j, 0))
            elif isinstance(item, SoftToken):
                if theta is None or item.concept >= theta.m:
                    raise InputError("soft token refers to a missing concept block")
                emb[pos] = theta.blocks[item.concept].tokens[item.index]
                theta_positions.append((pos, item.concept, item.index + 1))
            else:
                vec = np.asarray(item, dtype=np.float64)
                if vec.shape != (d,):
                    raise InputError(f"injected vector must have shape ({d},)")
                emb[pos] = vec
        emb = emb + self.weights["pos_emb"][:L]
        return emb, items, id_positions, theta_positions

    # -- transformer body ----------------------------------------------------

    def _forward_hidden(self, emb: np.ndarray):
        w = self.config
        x = emb
        caches = []
        scale = 1.0 / math.sqrt(w.dim // w.heads)
        L = x.shape[0]
        mask = np.triu(np.full((L, L), -np.inf), k=1)
        for i in range(w.layers):
            p = f"l{i}"
            a, ln1c = _layer_norm(x, self.weights[f"{p}.ln1.g"], self.weights[f"{p}.ln1.b"])
            q = a @ self.weights[f"{p}.attn.wq"]
            k = a @ self.weights[f"{p}.attn.wk"]
            v = a @ self.weights[f"{p}.attn.wv"]
            hd = w.dim // w.heads
            qh = q.reshape(L, w.heads, hd).transpose(1, 0, 2)
            kh = k.reshape(L, w.heads, hd).transpose(1, 0, 2)
            vh = v.reshape(L, w.heads, hd).transpose(1, 0, 2)
            scores = qh @ kh.transpose(0, 2, 1) * scale + mask
            scores -= scores.max(axis=-1, keepdims=True)
            probs = np.exp(scores)
            probs /= probs.sum(axis=-1, keepdims=True)
            ctx = (probs @ vh).transpose(1, 0, 2).reshape(L, w.dim)
            o = ctx @ self.weights[f"{p}.attn.wo"]
            x1 = x + o
            b, ln2c = _layer_norm(x1, self.weights[f"{p}.ln2.g"], self.weights[f"{p}.ln2.b"])
            pre = b @ self.weights[f"{p}.mlp.w1"] + self.weights[f"{p}.mlp.b1"]
            act = _gelu(pre)
            mlp_out = act @ self.weights[f"{p}.mlp.w2"] + self.weights[f"{p}.mlp.b2"]
            x2 = x1 + mlp_out
            caches.append((a, ln1c, qh, kh, vh, probs, ctx, x1, b, ln2c, pre, act))
            x = x2
        h, lnfc = _layer_norm(x, self.weights["lnf.g"], self.weights["lnf.b"])
        return h, (caches, lnfc)

    def _backward_hidden(self, dh: np.ndarray, cache, want_weights: bool):
        caches, lnfc = cache
        w = self.config
        grads: dict[str, np.ndarray] = {}
        dx, dg, db = _layer_norm_grad(dh, self.weights["lnf.g"], lnfc)
        if want_weights:
            grads["lnf.g"] = dg
            grads["lnf.b"] = db
        scale = 1.0 / math.sqrt(w.dim // w.heads)
        L = dh.shape[0]
        hd = w.dim // w.heads
        for i in reversed(range(w.layers)):
            p = f"l{i}"
            a, ln1c, qh, kh, vh, probs, ctx, x1, b, ln2c, pre, act = caches[i]
            # mlp branch
            dmlp_out = dx
            dact = dmlp_out @ self.weights[f"{p}.mlp.w2"].T
            dpre = dact * _gelu_grad(pre)
            dbm = dpre @ self.weights[f"{p}.mlp.w1"].T
            if want_weights:
                grads[f"{p}.mlp.w2"] = act.T @ dmlp_out
                grads[f"{p}.mlp.b2"] = dmlp_out.sum(axis=0)
                grads[f"{p}.mlp.w1"] = b.T @ dpre
                grads[f"{p}.mlp.b1"] = dpre.sum(axis=0)
            dx1_from_ln2, dg2, db2 = _layer_norm_grad(dbm, self.weights[f"{p}.ln2.g"], ln2c)
            if want_weights:
                grads[f"{p}.ln2.g"] = dg2
                grads[f"{p}.ln2.b"] = db2
            dx1 = dx + dx1_from_ln2
            # attention branch
            do = dx1
            dctx = do @ self.weights[f"{p}.attn.wo"].T
            if want_weights:
                grads[f"{p}.attn.wo"] = ctx.T @ do
            dctx_h = dctx.reshape(L, w.heads, hd).transpose(1, 0, 2)
            dprobs = dctx_h @ vh.transpose(0, 2, 1)
            dvh = probs.transpose(0, 2, 1) @ dctx_h
            dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
            dqh = dscores @ kh * scale
            dkh = dscores.transpose(0, 2, 1) @ qh * scale
            dq = dqh.transpose(1, 0, 2).reshape(L, w.dim)
            dk = dkh.transpose(1, 0, 2).reshape(L, w.dim)
            dv = dvh.transpose(1, 0, 2).reshape(L, w.dim)
            da = (
                dq @ self.weights[f"{p}.attn.wq"].T
                + dk @ self.weights[f"{p}.attn.wk"].T
                + dv @ self.weights[f"{p}.attn.wv"].T
            )
            if want_weights:
                grads[f"{p}.attn.wq"] = a.T @ dq
                grads[f"{p}.attn.wk"] = a.T @ dk
                grads[f"{p}.attn.wv"] = a.T @ dv
            dx_from_ln1, dg1, db1 = _layer_norm_grad(da, self.weights[f"{p}.ln1.g"], ln1c)
            if want_weights:
                grads[f"{p}.ln1.g"] = dg1
                grads[f"{p}.ln1.b"] = db1
            dx = dx1 + dx_from_ln1
        return dx, grads

    # -- public ops ------------------------------------------------------------

    def forward(self, batch: SequenceBatch, theta: ThetaParams | None = None) -> np.ndarray:
        """Per-position logits over the (possibly expanded) vocabulary.

        Base-vocabulary logits are computed from the frozen classifier columns
        with a shape-stable matmul, so expanding the vocabulary can never
        perturb them.
        """
        emb, _, _, _ = self._embed(batch, theta)
        h, _ = self._forward_hidden(emb)
        base = h @ self.weights["head"]
        if theta is None or theta.m == 0:
            return base
        return np.concatenate([base, h @ theta.classifier], axis=1)

    def _answer_rows(self, batch: SequenceBatch, items) -> np.ndarray:
        T = len(batch.answer)
        if T < 1:
            raise InputError("answer must contain at least one token")
        start = len(items) - T
        return np.arange(start - 1, start - 1 + T)

    def _loss_core(self, batch: SequenceBatch, theta: ThetaParams | None):
        emb, items, id_positions, theta_positions = self._embed(batch, theta)
        h, cache = self._forward_hidden(emb)
        rows = self._answer_rows(batch, items)
        hs = h[rows]
        logits = hs @ self.weights["head"]
        if theta is not None and theta.m > 0:
            logits = np.concatenate([logits, hs @ theta.classifier], axis=1)
        targets = np.asarray(batch.answer, dtype=int)
        shifted = logits - logits.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        loss = float((lse - logits[np.arange(len(targets)), targets]).sum())
        return loss, (emb, items, id_positions, theta_positions, h, cache, rows, hs, logits, targets)

    def loss(self, batch: SequenceBatch, theta: ThetaParams | None = None) -> float:
        """Masked-LM loss: negative log-likelihood summed over answer positions."""
        return self._loss_core(batch, theta)[0]

    def _grads(self, batch: SequenceBatch, theta: ThetaParams | None, want_weights: bool):
        loss, ctx = self._loss_core(batch, theta)
        emb, items, id_positions, theta_positions, h, cache, rows, hs, logits, targets = ctx
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        dlogits = probs
        dlogits[np.arange(len(targets)), targets] -= 1.0
        n_base = self.config.vocab
        dh = np.zeros_like(h)
        dhs = dlogits[:, :n_base] @ self.weights["head"].T
        theta_grads = None
        if theta is not None and theta.m > 0:
            dhs = dhs + dlogits[:, n_base:] @ theta.classifier.T
            dclassifier = hs.T @ dlogits[:, n_base:]
            theta_grads = ThetaGrads(
                blocks=[np.zeros((b.k + 1, b.dim)) for b in theta.blocks],
                classifier=dclassifier,
            )
        dh[rows] = dhs
        demb, weight_grads = self._backward_hidden(dh, cache, want_weights)
        if theta_grads is not None:
            for pos, j, row in theta_positions:
                theta_grads.blocks[j][row] += demb[pos]
        if want_weights:
            weight_grads["head"] = hs.T @ dlogits[:, :n_base]
            tok_grad = np.zeros_like(self.weights["tok_emb"])
            for pos, tid in id_positions:
                tok_grad[tid] += demb[pos]
            weight_grads["tok_emb"] = tok_grad
            pos_grad = np.zeros_like(self.weights["pos_emb"])
            pos_grad[: demb.shape[0]] = demb
            weight_grads["pos_emb"] = pos_grad
        return loss, theta_grads, weight_grads

    def grad_theta(self, batch: SequenceBatch, theta: ThetaParams):
        """Loss and exact gradients for every trainable concept parameter."""
        if theta is None or theta.m == 0:
            raise InputError("grad_theta requires at least one concept block")
        loss, theta_grads, _ = self._grads(batch, theta, want_weights=False)
        return loss, theta_grads

    def loss_and_weight_grads(self, batch: SequenceBatch, theta: ThetaParams | None = None):
        """Loss and gradients for all network weights (pretraining build step only)."""
        loss, _, weight_grads = self._grads(batch, theta, want_weights=True)
        return loss, weight_grads

    def generate(
        self,
        batch: SequenceBatch,
        theta: ThetaParams | None = None,
        max_new: int = 16,
    ) -> list[int]:
        """Greedy decoding; stops at EOS or after max_new tokens."""
        if max_new < 1:
            raise InputError(f"max_new must be >= 1, got {max_new}")
        if batch.answer:
            raise InputError("generation prompt must not contain an answer")
        work = SequenceBatch(
            image=batch.image,
            prompt=list(batch.prompt),
            question=list(batch.question),
            answer=[],
        )
        out: list[int] = []
        for _ in range(max_new):
            emb, _, _, _ = self._embed(work, theta)
            h, _ = self._forward_hidden(emb)
            last = h[-1:]
            logits = last @ self.weights["head"]
            if theta is not None and theta.m > 0:
                logits = np.concatenate([logits, last @ theta.classifier], axis=1)
            nxt = int(logits[0].argmax())
            out.append(nxt)
            if nxt == EOS_ID:
                break
            work.question = work.question + [nxt]
        return out

    # -- persistence helpers ---------------------------------------------------

    def weight_bytes(self) -> dict[str, bytes]:
        """Frozen parameters as little-endian float32 bytes, for byte-identity checks."""
        return {
            name: np.ascontiguousarray(arr, dtype="<f4").tobytes()
            for name, arr in sorted(self.weights.items())
        }
