"""Entity-encoder actor/critic with beta action heads, in plain numpy.

Architecture (per network, actor and critic each own a full copy)::

    teammate rows  --[local ++ row]--> shared MLP (ELU) --max-pool--> 16
    opponent rows  --[local ++ row]--> shared MLP (ELU) --max-pool--> 16
    [local, pooled teammates, pooled opponents] --> MLP (ELU hidden) --> out

The actor's 10 outputs are raw (alpha, beta) values for the five actions,
turned into ``1 + softplus(raw)`` so every beta density is unimodal.  The
critic outputs one scalar.  All gradients are analytic; the forward passes
return caches that the backward passes consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

N_ACTIONS = 5
LN2 = np.log(2.0)
_U_EPS = 1e-6


@dataclass(frozen=True)
class NetDims:
    local_dim: int
    entity_dim: int
    hidden_encoder: tuple = (64, 32)
    encoder_out: int = 16
    hidden_head: tuple = (128, 128, 128)
    n_actions: int = N_ACTIONS

    @property
    def encoder_in(self) -> int:
        return self.local_dim + self.entity_dim

    @property
    def head_in(self) -> int:
        return self.local_dim + 2 * self.encoder_out

    def layer_sizes(self, part: str, net: str) -> list[int]:
        if part in ("mate", "opp"):
            return [self.encoder_in, *self.hidden_encoder, self.encoder_out]
        out = 2 * self.n_actions if net == "actor" else 1
        return [self.head_in, *self.hidden_head, out]

    def to_dict(self) -> dict:
        return {"local_dim": self.local_dim, "entity_dim": self.entity_dim,
                "hidden_encoder": list(self.hidden_encoder), "encoder_out": self.encoder_out,
                "hidden_head": list(self.hidden_head), "n_actions": self.n_actions}

    @classmethod
    def from_dict(cls, d: dict) -> "NetDims":
        return cls(int(d["local_dim"]), int(d["entity_dim"]), tuple(d["hidden_encoder"]),
                   int(d["encoder_out"]), tuple(d["hidden_head"]), int(d.get("n_actions", N_ACTIONS)))


NETS = ("actor", "critic")
PARTS = ("mate", "opp", "head")


@dataclass
class NetworkParams:
    """Ordered name -> array map.  Names look like ``actor.mate.0.W``."""
    dims: NetDims
    arrays: dict = field(default_factory=dict)

    def layers(self, net: str, part: str) -> list[tuple[np.ndarray, np.ndarray]]:
        n = len(self.dims.layer_sizes(part, net)) - 1
        return [(self.arrays[f"{net}.{part}.{i}.W"], self.arrays[f"{net}.{part}.{i}.b"]) for i in range(n)]

    @property
    def dtype(self):
        return next(iter(self.arrays.values())).dtype

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.dims, {k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams(self.dims, {k: np.zeros_like(v) for k, v in self.arrays.items()})

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(self.dims, {k: v.astype(dtype) for k, v in self.arrays.items()})

    def n_params(self, prefix: str = "") -> int:
        return sum(v.size for k, v in self.arrays.items() if k.startswith(prefix))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())

    def equals(self, other: "NetworkParams") -> bool:
        return self.arrays.keys() == other.arrays.keys() and all(
            np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items())


def _orthogonal(rng, n_in, n_out, gain):
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


def init_params(dims: NetDims, rng: np.random.Generator, dtype=np.float32) -> NetworkParams:
    """Orthogonal init, gain sqrt(2) for hidden layers; the policy output
    layer starts near zero (gain 0.01), the value output with gain 1."""
    arrays = {}
    for net in NETS:
        for part in PARTS:
            sizes = dims.layer_sizes(part, net)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
                last = part == "head" and i == len(sizes) - 2
                gain = (0.01 if net == "actor" else 1.0) if last else np.sqrt(2.0)
                arrays[f"{net}.{part}.{i}.W"] = _orthogonal(rng, a, b, gain).astype(dtype)
                arrays[f"{net}.{part}.{i}.b"] = np.zeros(b, dtype=dtype)
    return NetworkParams(dims, arrays)


# --- building blocks -------------------------------------------------------

def elu(z):
    return np.where(z > 0, z, np.expm1(np.minimum(z, 0)))


def elu_grad(z):
    return np.where(z > 0, 1.0, np.exp(np.minimum(z, 0))).astype(z.dtype)


def mlp_forward(x, layers, final_act: bool):
    cache = []
    n = len(layers)
    for i, (W, b) in enumerate(layers):
        z = x @ W + b
        cache.append((x, z))
        x = elu(z) if (i < n - 1 or final_act) else z
    return x, cache


def mlp_backward(dout, layers, cache, final_act: bool, need_input: bool = False):
    grads = [None] * len(layers)
    n = len(layers)
    d = dout
    for i in range(n - 1, -1, -1):
        W, _ = layers[i]
        x, z = cache[i]
        if i < n - 1 or final_act:
            d = d * elu_grad(z)
        grads[i] = (x.T @ d, d.sum(axis=0))
        if i > 0 or need_input:
            d = d @ W.T
    return (d if need_input else None), grads


def softplus(x):
    return np.logaddexp(0, x)


# --- entity encoder --------------------------------------------------------

def encode_entities(local, entities, mask, layers):
    """Max-pooled encoding of a set of entity rows.

    Every valid row is concatenated with the full local vector and passed
    through the shared encoder; the pooled feature is the element-wise
    maximum over valid rows (zero vector for an empty set).  Bitwise
    invariant to row permutations.
    """
    n_b, n_rows, _ = entities.shape
    mask = np.asarray(mask, dtype=bool)
    b_idx, r_idx = np.nonzero(mask)
    # feed rows in a content-defined order so that permuting the input rows
    # leaves the matmul operands, and hence the floating point result, unchanged
    rows = entities[b_idx, r_idx]
    order = np.lexsort(tuple(rows.T[::-1]) + (b_idx,))
    b_idx, r_idx = b_idx[order], r_idx[order]
    out_dim = layers[-1][0].shape[1]
    pooled = np.zeros((n_b, out_dim), dtype=layers[0][0].dtype)
    if len(b_idx) == 0:
        return pooled, (None, None, b_idx, r_idx, n_b, n_rows)
    x = np.concatenate([local[b_idx], entities[b_idx, r_idx]], axis=-1)
    h, cache = mlp_forward(x, layers, final_act=True)
    full = np.full((n_b, n_rows, out_dim), -np.inf, dtype=h.dtype)
    full[b_idx, r_idx] = h
    arg = np.argmax(full, axis=1)                                          # (B, F), lowest row on ties
    pooled = np.take_along_axis(full, arg[:, None, :], axis=1)[:, 0]
    pooled = np.where(mask.any(axis=1)[:, None], pooled, 0).astype(h.dtype)
    return pooled, (cache, arg, b_idx, r_idx, n_b, n_rows)


def encode_backward(dpooled, layers, enc_cache):
    cache, arg, b_idx, r_idx, n_b, n_rows = enc_cache
    if cache is None:
        return [(np.zeros_like(W), np.zeros_like(b)) for W, b in layers]
    out_dim = dpooled.shape[1]
    dfull = np.zeros((n_b, n_rows, out_dim), dtype=dpooled.dtype)
    np.put_along_axis(dfull, arg[:, None, :], dpooled[:, None, :], axis=1)
    dh = dfull[b_idx, r_idx]
    _, grads = mlp_backward(dh, layers, cache, final_act=True)
    return grads


def _trunk(obs, params: NetworkParams, net: str):
    dtype = params.dtype
    local = np.asarray(obs.local, dtype=dtype)
    mates, c_m = encode_entities(local, np.asarray(obs.teammates, dtype=dtype), obs.teammate_mask,
                                 params.layers(net, "mate"))
    opps, c_o = encode_entities(local, np.asarray(obs.opponents, dtype=dtype), obs.opponent_mask,
                                params.layers(net, "opp"))
    x = np.concatenate([local, mates, opps], axis=-1)
    out, c_h = mlp_forward(x, params.layers(net, "head"), final_act=False)
    return out, (c_m, c_o, c_h)


def _trunk_backward(dout, cache, params: NetworkParams, net: str, grads: dict):
    c_m, c_o, c_h = cache
    dims = params.dims
    head = params.layers(net, "head")
    dx, g_head = mlp_backward(dout, head, c_h, final_act=False, need_input=True)
    l0 = dims.local_dim
    d_m = dx[:, l0:l0 + dims.encoder_out]
    d_o = dx[:, l0 + dims.encoder_out:]
    for part, g in (("head", g_head),
                    ("mate", encode_backward(d_m, params.layers(net, "mate"), c_m)),
                    ("opp", encode_backward(d_o, params.layers(net, "opp"), c_o))):
        for i, (gW, gb) in enumerate(g):
            grads[f"{net}.{part}.{i}.W"] = gW
            grads[f"{net}.{part}.{i}.b"] = gb


def policy_forward(obs, params: NetworkParams, return_cache: bool = False):
    """Beta parameters ``(alpha, beta)``, each ``(B, 5)`` and > 1."""
    raw, cache = _trunk(obs, params, "actor")
    k = params.dims.n_actions
    alpha = 1.0 + softplus(raw[:, :k])
    beta = 1.0 + softplus(raw[:, k:])
    if return_cache:
        return alpha, beta, (raw, cache)
    return alpha, beta


def policy_backward(d_alpha, d_beta, pcache, params: NetworkParams) -> dict:
    raw, cache = pcache
    k = params.dims.n_actions
    d_raw = np.concatenate([d_alpha * special.expit(raw[:, :k]),
                            d_beta * special.expit(raw[:, k:])], axis=-1).astype(raw.dtype)
    grads: dict = {}
    _trunk_backward(d_raw, cache, params, "actor", grads)
    return grads


def value_forward(obs, params: NetworkParams, return_cache: bool = False):
    out, cache = _trunk(obs, params, "critic")
    value = out[:, 0]
    return (value, cache) if return_cache else value


def value_backward(d_value, vcache, params: NetworkParams) -> dict:
    grads: dict = {}
    d = np.asarray(d_value, dtype=params.dtype)[:, None]
    _trunk_backward(d, vcache, params, "critic", grads)
    return grads


# --- beta distribution -----------------------------------------------------

def beta_log_prob(action, alpha, beta):
    """Log-density of actions in (-1, 1) summed over the action dimension.

    The affine map u -> 2u - 1 contributes -ln 2 per action.
    """
    u = np.clip((np.asarray(action, dtype=np.float64) + 1.0) / 2.0, _U_EPS, 1.0 - _U_EPS)
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    lp = (a - 1.0) * np.log(u) + (b - 1.0) * np.log1p(-u) - special.betaln(a, b) - LN2
    return lp.sum(axis=-1)


def beta_log_prob_grad(action, alpha, beta):
    """d log_prob / d alpha and d beta, per action."""
    u = np.clip((np.asarray(action, dtype=np.float64) + 1.0) / 2.0, _U_EPS, 1.0 - _U_EPS)
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    psi_ab = special.digamma(a + b)
    return np.log(u) - special.digamma(a) + psi_ab, np.log1p(-u) - special.digamma(b) + psi_ab


def beta_entropy(alpha, beta):
    """Differential entropy of the action distribution on (-1, 1), summed
    over actions."""
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    h = (special.betaln(a, b) - (a - 1.0) * special.digamma(a) - (b - 1.0) * special.digamma(b)
         + (a + b - 2.0) * special.digamma(a + b) + LN2)
    return h.sum(axis=-1)


def beta_entropy_grad(alpha, beta):
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    tri_ab = special.polygamma(1, a + b)
    return (-(a - 1.0) * special.polygamma(1, a) + (a + b - 2.0) * tri_ab,
            -(b - 1.0) * special.polygamma(1, b) + (a + b - 2.0) * tri_ab)


def sample_action(alpha, beta, rng: np.random.Generator, deterministic: bool = False):
    """Actions in (-1, 1) and their log-probabilities.

    Deterministic mode returns the beta mode ``(a - 1) / (a + b - 2)``.
    """
    a = np.asarray(alpha, dtype=np.float64)
    b = np.asarray(beta, dtype=np.float64)
    if deterministic:
        u = (a - 1.0) / (a + b - 2.0)
    else:
        u = rng.beta(a, b)
    u = np.clip(u, _U_EPS, 1.0 - _U_EPS)
    action = 2.0 * u - 1.0
    return action, beta_log_prob(action, a, b)
