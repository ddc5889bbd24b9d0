"""Dense numpy encoder layer with tree-masked relation-aware attention.

Forward and reverse-mode passes are written out by hand in double precision so
the gradients can be checked against central finite differences.  Shapes use
``n`` vertices, model width ``d``, key width ``m`` and ``H`` heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .features import FeatureBundle, build_features, motif_table


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class AttnConfig:
    d: int = 16
    m: int = 8
    heads: int = 2
    d_ff: int = 32
    bag_size: int = 3
    d_subgraph: int | None = None
    d_motif: int | None = None
    d_depth: int | None = None
    use_depth: bool = True
    max_depth: int = 8
    activation: str = "relu"  # or "identity"
    norm: str = "post"  # or "pre"
    fill: float = -1e9
    ln_eps: float = 1e-5
    vocab: tuple[str, ...] = ()

    def __post_init__(self):
        # [path, subgraph, motif, depth] widths follow [d, 128, 64, 64] at d = 512;
        # without depths [subgraph, motif] are [128, 128].
        quarter = max(1, self.d // 4)
        eighth = max(1, self.d // 8)
        if self.d_subgraph is None:
            object.__setattr__(self, "d_subgraph", quarter)
        if self.d_motif is None:
            object.__setattr__(self, "d_motif", eighth if self.use_depth else quarter)
        if self.d_depth is None:
            object.__setattr__(self, "d_depth", eighth if self.use_depth else 0)
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.norm not in ("post", "pre"):
            raise ValueError(f"unknown norm placement {self.norm!r}")

    @classmethod
    def full_scale(cls, **kw):
        return cls(d=512, m=64, heads=8, d_ff=1024, **kw)

    @property
    def slots(self) -> int:
        return self.bag_size * (self.bag_size - 1)

    @property
    def n_motifs(self) -> int:
        return len(motif_table(self.bag_size - 1)) + 1

    @property
    def relation_width(self) -> int:
        return self.d + self.d_motif + self.d_subgraph + self.d_depth


def vocab_for(bundle: FeatureBundle) -> tuple[str, ...]:
    return tuple(sorted({lab for labels in bundle.paths.values() for lab in labels}))


@dataclass
class ParamSet:
    config: AttnConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "ParamSet":
        return ParamSet(self.config, {k: v.copy() for k, v in self.tensors.items()})


def param_shapes(cfg: AttnConfig) -> dict[str, tuple[int, ...]]:
    shapes = {
        "Q": (cfg.heads, cfg.d, cfg.m),
        "K": (cfg.heads, cfg.d, cfg.m),
        "V": (cfg.heads, cfg.d, cfg.d),
        "path_emb": (max(1, len(cfg.vocab)), cfg.d),
        "motif_emb": (cfg.n_motifs, cfg.d_motif),
        "W1": (cfg.d_subgraph, cfg.slots * cfg.d),
        "b1": (cfg.d_subgraph,),
        "W2": (cfg.d, cfg.relation_width),
        "b2": (cfg.d,),
        "F1": (cfg.heads * cfg.d, cfg.d_ff),
        "c1": (cfg.d_ff,),
        "F2": (cfg.d_ff, cfg.d),
        "c2": (cfg.d,),
        "gamma": (cfg.d,),
        "beta": (cfg.d,),
    }
    if cfg.use_depth:
        shapes["depth_emb"] = (cfg.max_depth + 1, cfg.d_depth)
    return shapes


def init_params(cfg: AttnConfig, seed: int = 0, scale: float = 0.1) -> ParamSet:
    """Uniform(-scale, scale) draws from a seeded generator, in a fixed order."""
    rng = np.random.default_rng(seed)
    return ParamSet(cfg, {name: rng.uniform(-scale, scale, shape)
                          for name, shape in param_shapes(cfg).items()})


# --------------------------------------------------------------------------
# Index preparation


@dataclass(frozen=True)
class EncoderInputs:
    mask: np.ndarray  # (n, n) bool
    path_counts: np.ndarray  # (n*n, vocab): row-normalized label counts, the mean aggregator
    motif: np.ndarray
    group: np.ndarray
    depth: np.ndarray
    slot_pairs: np.ndarray  # (bags, slots): flat pair index i*n+j of each bag slot, -1 if empty

    @property
    def n(self):
        return self.mask.shape[0]


def prepare_inputs(bundle: FeatureBundle, cfg: AttnConfig) -> EncoderInputs:
    n = bundle.n
    index = {lab: i for i, lab in enumerate(cfg.vocab)}
    counts = np.zeros((n * n, max(1, len(cfg.vocab))))
    for (i, j), labels in bundle.paths.items():
        for lab in labels:
            if lab not in index:
                raise ShapeError(f"path label {lab!r} is not in the vocabulary")
            counts[i * n + j, index[lab]] += 1.0 / len(labels)
    if bundle.motif.max(initial=0) >= cfg.n_motifs:
        raise ShapeError("motif id outside the motif table")
    if cfg.use_depth and bundle.rel_depth.max(initial=0) > cfg.max_depth:
        raise ShapeError("relative depth outside the depth table")
    slots = np.full((len(bundle.bags), cfg.slots), -1, dtype=int)
    for b, bag in enumerate(bundle.bags):
        if len(bag) > cfg.bag_size:
            raise ShapeError(f"bag {b} has {len(bag)} vertices; slots allow {cfg.bag_size}")
        rel = set(bundle.bag_relations(b))
        for s, (p, q) in enumerate(_slot_positions(cfg.bag_size)):
            if p < len(bag) and q < len(bag) and (bag[p], bag[q]) in rel:
                slots[b, s] = bag[p] * n + bag[q]
    return EncoderInputs(bundle.mask.astype(bool), counts, bundle.motif.astype(int),
                         bundle.group.astype(int), bundle.rel_depth.astype(int), slots)


def _slot_positions(size):
    """Row-major off-diagonal cells of a size x size adjacency matrix."""
    return [(p, q) for p in range(size) for q in range(size) if p != q]


# --------------------------------------------------------------------------
# Building blocks


def _act(x, kind):
    return np.maximum(x, 0.0) if kind == "relu" else x


def _act_grad(pre, kind):
    return (pre > 0).astype(float) if kind == "relu" else np.ones_like(pre)


def subgraph_embedding(R_s: np.ndarray, params: ParamSet) -> np.ndarray:
    """``act(W1 r + b1)`` for one stacked, zero-padded bag of relation embeddings."""
    cfg = params.config
    R_s = np.asarray(R_s, dtype=float).reshape(-1)
    if R_s.size != cfg.slots * cfg.d:
        raise ShapeError(f"expected {cfg.slots} slots of width {cfg.d}, got {R_s.size} values")
    return _act(params["W1"] @ R_s + params["b1"], cfg.activation)


def _relations_forward(inputs: EncoderInputs, params: ParamSet):
    cfg = params.config
    n, d = inputs.n, cfg.d
    Rt = (inputs.path_counts @ params["path_emb"]).reshape(n, n, d)
    flat = np.concatenate([Rt.reshape(n * n, d), np.zeros((1, d))])
    Rs = flat[inputs.slot_pairs].reshape(len(inputs.slot_pairs), cfg.slots * d)
    B_pre = Rs @ params["W1"].T + params["b1"]
    B = _act(B_pre, cfg.activation)
    B_full = np.concatenate([np.zeros((1, cfg.d_subgraph)), B])  # group 0 -> zero vector
    parts = [Rt, params["motif_emb"][inputs.motif], B_full[inputs.group]]
    if cfg.use_depth:
        parts.append(params["depth_emb"][inputs.depth])
    z = np.concatenate(parts, axis=-1)
    R = (z @ params["W2"].T + params["b2"]) * inputs.mask[..., None]
    cache = dict(Rt=Rt, Rs=Rs, B_pre=B_pre, z=z)
    return R, cache


def assemble_relation_embeddings(bundle_or_inputs, params: ParamSet) -> np.ndarray:
    """``W2 [path; motif; subgraph; depth] + b2`` for every unmasked pair; zeros elsewhere."""
    inputs = bundle_or_inputs
    if isinstance(inputs, FeatureBundle):
        inputs = prepare_inputs(inputs, params.config)
    return _relations_forward(inputs, params)[0]


def _relations_backward(dR, inputs, params, cache, grads):
    cfg = params.config
    n, d = inputs.n, cfg.d
    dR = dR * inputs.mask[..., None]
    z = cache["z"]
    grads["W2"] += np.einsum("ijo,ijr->or", dR, z)
    grads["b2"] += dR.sum(axis=(0, 1))
    dz = dR @ params["W2"]
    o = 0
    dRt = dz[..., o:o + d].copy()
    o += d
    np.add.at(grads["motif_emb"], inputs.motif, dz[..., o:o + cfg.d_motif])
    o += cfg.d_motif
    dB_full = np.zeros((len(inputs.slot_pairs) + 1, cfg.d_subgraph))
    np.add.at(dB_full, inputs.group, dz[..., o:o + cfg.d_subgraph])
    o += cfg.d_subgraph
    if cfg.use_depth:
        np.add.at(grads["depth_emb"], inputs.depth, dz[..., o:o + cfg.d_depth])
    dB_pre = dB_full[1:] * _act_grad(cache["B_pre"], cfg.activation)
    grads["W1"] += dB_pre.T @ cache["Rs"]
    grads["b1"] += dB_pre.sum(axis=0)
    dRs = (dB_pre @ params["W1"]).reshape(len(inputs.slot_pairs), cfg.slots, d)
    dflat = np.zeros((n * n + 1, d))
    np.add.at(dflat, inputs.slot_pairs, dRs)
    dRt = dRt.reshape(n * n, d) + dflat[:-1]
    grads["path_emb"] += inputs.path_counts.T @ dRt


def masked_attention(X, R, R_T=None, mask=None, params: ParamSet = None, _cache=None):
    """Multi-head attention with relation terms on both query and key side.

    Score for query ``i`` and key ``j`` in head ``h`` is
    ``((X_i + R_ij) Q_h) . ((X_j + R_ji) K_h) / sqrt(m)``; disallowed pairs get
    the fill value before the softmax.  Returns the ``(n, H*d)`` concatenation
    of ``A_h (X V_h)``.
    """
    cfg = params.config
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if X.shape != (n, cfg.d) or R.shape != (n, n, cfg.d):
        raise ShapeError(f"X {X.shape} / R {R.shape} do not match n={n}, d={cfg.d}")
    if R_T is None:
        R_T = R.transpose(1, 0, 2)
    if mask is None:
        mask = np.ones((n, n), dtype=bool)
    if not mask.diagonal().all():
        raise ShapeError("attention mask must allow every vertex to see itself")
    Pq = X[:, None, :] + R  # query side, (i, j)
    Pk = X[None, :, :] + R_T  # key side, (i, j) holds X_j + R_ji
    scale = 1.0 / np.sqrt(cfg.m)
    outs = []
    heads = []
    for h in range(cfg.heads):
        q = Pq @ params["Q"][h]
        k = Pk @ params["K"][h]
        s = np.where(mask, np.einsum("ijm,ijm->ij", q, k) * scale, cfg.fill)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        A = e / e.sum(axis=1, keepdims=True)
        XV = X @ params["V"][h]
        outs.append(A @ XV)
        heads.append((q, k, A, XV))
    if _cache is not None:
        _cache.update(Pq=Pq, Pk=Pk, heads=heads, mask=mask, X=X)
    return np.concatenate(outs, axis=1)


def attention_weights(X, R, mask, params: ParamSet) -> np.ndarray:
    """Per-head softmax weights, shape ``(H, n, n)``."""
    cache = {}
    masked_attention(X, R, None, mask, params, _cache=cache)
    return np.stack([A for _, _, A, _ in cache["heads"]])


def _attention_backward(dY, params, cache, grads):
    cfg = params.config
    X, Pq, Pk, mask = cache["X"], cache["Pq"], cache["Pk"], cache["mask"]
    d = cfg.d
    scale = 1.0 / np.sqrt(cfg.m)
    dX = np.zeros_like(X)
    dPq = np.zeros_like(Pq)
    dPk = np.zeros_like(Pk)
    for h, (q, k, A, XV) in enumerate(cache["heads"]):
        dout = dY[:, h * d:(h + 1) * d]
        dA = dout @ XV.T
        dXV = A.T @ dout
        grads["V"][h] += X.T @ dXV
        dX += dXV @ params["V"][h].T
        ds = A * (dA - (dA * A).sum(axis=1, keepdims=True))
        ds = np.where(mask, ds, 0.0) * scale
        dq = ds[..., None] * k
        dk = ds[..., None] * q
        grads["Q"][h] += np.einsum("ijd,ijm->dm", Pq, dq)
        grads["K"][h] += np.einsum("ijd,ijm->dm", Pk, dk)
        dPq += dq @ params["Q"][h].T
        dPk += dk @ params["K"][h].T
    dX += dPq.sum(axis=1) + dPk.sum(axis=0)
    dR = dPq + dPk.transpose(1, 0, 2)
    return dX, dR


def _layer_norm(z, gamma, beta, eps):
    mu = z.mean(axis=-1, keepdims=True)
    var = z.var(axis=-1, keepdims=True)
    sigma = np.sqrt(var + eps)
    xhat = (z - mu) / sigma
    return xhat * gamma + beta, (xhat, sigma)


def _layer_norm_backward(dout, gamma, cache, grads):
    xhat, sigma = cache
    grads["gamma"] += (dout * xhat).sum(axis=0)
    grads["beta"] += dout.sum(axis=0)
    dxhat = dout * gamma
    return (dxhat - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)) / sigma


# --------------------------------------------------------------------------
# Encoder layer


def encoder_forward(X, inputs: EncoderInputs, params: ParamSet):
    cfg = params.config
    X = np.asarray(X, dtype=float)
    R, rcache = _relations_forward(inputs, params)
    acache = {}
    if cfg.norm == "pre":
        Xin, ln = _layer_norm(X, params["gamma"], params["beta"], cfg.ln_eps)
    else:
        Xin = X
    Y = masked_attention(Xin, R, None, inputs.mask, params, _cache=acache)
    H1 = Y @ params["F1"] + params["c1"]
    A1 = _act(H1, cfg.activation)
    F = A1 @ params["F2"] + params["c2"]
    Z = X + F
    if cfg.norm == "post":
        out, ln = _layer_norm(Z, params["gamma"], params["beta"], cfg.ln_eps)
    else:
        out = Z
    cache = dict(X=X, R=R, rcache=rcache, acache=acache, Y=Y, H1=H1, A1=A1, ln=ln, inputs=inputs)
    return out, cache


def encoder_backward(dout, cache, params: ParamSet) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss for every parameter tensor and for ``X``."""
    cfg = params.config
    grads = {name: np.zeros_like(t) for name, t in params.tensors.items()}
    if cfg.norm == "post":
        dZ = _layer_norm_backward(dout, params["gamma"], cache["ln"], grads)
    else:
        dZ = dout
    dX = dZ.copy()
    grads["F2"] += cache["A1"].T @ dZ
    grads["c2"] += dZ.sum(axis=0)
    dH1 = (dZ @ params["F2"].T) * _act_grad(cache["H1"], cfg.activation)
    grads["F1"] += cache["Y"].T @ dH1
    grads["c1"] += dH1.sum(axis=0)
    dY = dH1 @ params["F1"].T
    dXin, dR = _attention_backward(dY, params, cache["acache"], grads)
    if cfg.norm == "pre":
        dX += _layer_norm_backward(dXin, params["gamma"], cache["ln"], grads)
    else:
        dX += dXin
    _relations_backward(dR, cache["inputs"], params, cache["rcache"], grads)
    grads["X"] = dX
    return grads


def encoder_layer(X, bundle, params: ParamSet) -> np.ndarray:
    """One post-norm (or pre-norm) sub-layer; no dropout."""
    inputs = bundle if isinstance(bundle, EncoderInputs) else prepare_inputs(bundle, params.config)
    return encoder_forward(X, inputs, params)[0]


def relu_margin(X, inputs: EncoderInputs, params: ParamSet) -> float:
    """Smallest |pre-activation| over every rectifier input (inf without rectifiers)."""
    if params.config.activation != "relu":
        return float("inf")
    _, cache = encoder_forward(X, inputs, params)
    pre = [np.abs(cache["H1"]).ravel(), np.abs(cache["rcache"]["B_pre"]).ravel()]
    return float(np.concatenate(pre).min())


# --------------------------------------------------------------------------
# Copy mechanism


def copy_mixture(p_hat, p_cp, A_t, concept_sets, tol=1e-9) -> np.ndarray:
    """Mix generation with copying: ``(1 - p_cp) p_hat + p_cp * sum of A_t over each token's concepts``.

    ``concept_sets`` maps a vocabulary index to the concept indices it copies
    from; every concept must belong to exactly one token.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    A_t = np.asarray(A_t, dtype=float)
    if not 0.0 <= p_cp <= 1.0:
        raise ValueError(f"copy probability {p_cp} outside [0, 1]")
    if abs(p_hat.sum() - 1.0) > tol or (p_hat < 0).any():
        raise ValueError("generation distribution is not normalized")
    if abs(A_t.sum() - 1.0) > tol or (A_t < 0).any():
        raise ValueError("attention row is not normalized")
    owner = np.full(A_t.shape[0], -1)
    for token, concepts in dict(concept_sets).items():
        if not 0 <= token < p_hat.shape[0]:
            raise ValueError(f"token {token} outside the vocabulary")
        for c in concepts:
            if owner[c] >= 0:
                raise ValueError(f"concept {c} maps to more than one token")
            owner[c] = token
    if (owner < 0).any():
        raise ValueError(f"concepts {np.flatnonzero(owner < 0).tolist()} map to no token")
    copied = np.zeros_like(p_hat)
    np.add.at(copied, owner, A_t)
    return (1.0 - p_cp) * p_hat + p_cp * copied


# --------------------------------------------------------------------------
# Gradient check


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_tensor: dict[str, float]
    seed: int | None = None

    def to_dict(self):
        return {"seed": self.seed, "max_rel_err": self.max_rel_err, "per_tensor": self.per_tensor}


def squared_loss(X, inputs, params):
    out, cache = encoder_forward(X, inputs, params)
    return float((out ** 2).sum()), out, cache


def rel_error(analytic, reference, floor=1e-8):
    """Error of ``analytic`` relative to the finite-difference ``reference``."""
    return abs(analytic - reference) / max(abs(reference), floor)


def grad_check(X, inputs: EncoderInputs, params: ParamSet, eps: float = 1e-5, samples: int = 200,
               seed: int = 0, corrupt: str | None = None) -> GradCheckReport:
    """Compare analytic gradients of ``sum(encoder_layer(X) ** 2)`` with central differences.

    Up to ``samples`` coordinates per tensor (all of them when fewer) are
    checked.  ``corrupt`` names a tensor whose largest sampled analytic partial
    is doubled, to confirm the checker notices.
    """
    X = np.array(X, dtype=float)
    loss, out, cache = squared_loss(X, inputs, params)
    if not np.isfinite(loss):
        raise FloatingPointError("loss is not finite")
    grads = encoder_backward(2.0 * out, cache, params)
    rng = np.random.default_rng(seed)
    work = params.copy()
    targets = dict(work.tensors)
    targets["X"] = X
    per_tensor = {}
    for name in sorted(targets):
        arr = targets[name]
        size = arr.size
        picks = np.arange(size) if size <= samples else rng.choice(size, samples, replace=False)
        worst = 0.0
        boosted = max(picks, key=lambda f: abs(grads[name].flat[f])) if corrupt == name else None
        for flat in picks:
            idx = np.unravel_index(flat, arr.shape)
            orig = arr[idx]
            arr[idx] = orig + eps
            up = encoder_forward(X, inputs, work)[0]
            arr[idx] = orig - eps
            down = encoder_forward(X, inputs, work)[0]
            arr[idx] = orig
            # L(+) - L(-) factored as sum((o+ - o-)(o+ + o-)) to avoid cancelling two large sums
            numeric = float(((up - down) * (up + down)).sum()) / (2 * eps)
            analytic = grads[name][idx]
            if flat == boosted:
                analytic = 2 * analytic
            worst = max(worst, rel_error(analytic, numeric))
        per_tensor[name] = worst
    return GradCheckReport(max(per_tensor.values()), per_tensor, seed)


def with_config(params: ParamSet, **changes) -> ParamSet:
    return ParamSet(replace(params.config, **changes), params.tensors)


GRADCHECK_SCALE = 0.5
RELU_MARGIN = 1e-4


def random_point(seed: int, n: int = 8, extra_edges: int = 2, scale: float = GRADCHECK_SCALE,
                 margin: float = RELU_MARGIN, **config):
    """A seeded ``(X, inputs, params)`` triple for gradient checking.

    The graph is a random connected graph on ``n`` vertices, decomposed at the
    smallest width up to 3.  Parameters are drawn from uniform(-scale, scale):
    at the 0.1 initialization scale several partials shrink to 1e-9, where
    finite differences are mostly rounding noise.  Parameter draws are retried
    (sub-seeds ``seed * 1000 + t``) until every rectifier input is at least
    ``margin`` from zero.
    """
    from .randgraph import random_connected_graph
    from .treedec import best_td_with_retry

    g = random_connected_graph(n, n - 1 + extra_edges, seed)
    td, _, _ = best_td_with_retry(g, k=1, max_k=3)
    bundle = build_features(g, td, td.width)
    cfg = AttnConfig(bag_size=td.width + 1, vocab=vocab_for(bundle), **config)
    inputs = prepare_inputs(bundle, cfg)
    for t in range(1000):
        rng = np.random.default_rng(seed * 1000 + t)
        X = rng.uniform(0.0, 1.0, (n, cfg.d)) if cfg.activation == "identity" else rng.uniform(-1, 1, (n, cfg.d))
        params = init_params(cfg, seed * 1000 + t, scale=scale)
        if relu_margin(X, inputs, params) >= margin:
            return X, inputs, params
    raise RuntimeError(f"no draw with rectifier margin {margin} for seed {seed}")
