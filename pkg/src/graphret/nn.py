"""Neural layers built on :mod:`graphret.autodiff`, plus the Adam optimizer."""
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, NumericError, ParameterError


def glorot(rng, fan_in, fan_out, name=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return ad.Tensor(rng.uniform((fan_in, fan_out), -limit, limit), requires_grad=True, name=name)


def zeros(rows, cols, name=None):
    return ad.Tensor(np.zeros((rows, cols)), requires_grad=True, name=name)


def linear(x, W, b=None):
    out = x @ W
    return out if b is None else out + b


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.1, eps=1e-5):
    """Per-column batch normalization over the row (node) axis.

    ``running_mean``/``running_var`` are 1 x c arrays updated in place when
    ``training``; the running variance uses the unbiased estimate.
    """
    c = x.shape[1]
    if gamma.shape != (1, c) or beta.shape != (1, c):
        raise DimensionError(f"batch_norm: gamma/beta must be 1x{c}")
    if training:
        mean = ad.col_mean(x)
        xc = x - mean
        var = ad.col_mean(xc * xc)
        r = x.shape[0]
        unbiased = var.data * (r / (r - 1)) if r > 1 else var.data
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.data
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
        xhat = xc * ad.power(var + eps, -0.5)
    else:
        xhat = (x - running_mean) * (1.0 / np.sqrt(running_var + eps))
    return xhat * gamma + beta


def gcn_layer(x, norm_adj, W):
    """``norm_adj @ x @ W``; the caller applies any activation."""
    if x.shape[1] != W.shape[0]:
        raise DimensionError(f"gcn_layer: x has {x.shape[1]} columns, W has {W.shape[0]} rows")
    return ad.spmm(norm_adj, x @ W)


def gat_layer(x, adj, weights, attn, slope=0.2, return_attention=False):
    """Multi-head graph attention, heads concatenated.

    ``adj`` must already contain self-loops. ``weights[h]`` is d_in x F and
    ``attn[h]`` is 1 x 2F (source half, then neighbour half).
    """
    if len(weights) != len(attn) or not weights:
        raise ParameterError("gat_layer needs one attention vector per head")
    if np.any(adj.degrees() == 0):
        raise ParameterError("gat_layer: node without neighbourhood (missing self-loop?)")
    rows, cols = adj.rows(), adj.col_indices
    outs, alphas = [], []
    for W, a in zip(weights, attn):
        F = W.shape[1]
        if a.shape != (1, 2 * F):
            raise DimensionError(f"gat_layer: attention vector must be 1x{2 * F}")
        Wh = x @ W
        s_src = Wh @ ad.slice_cols(a, 0, F).T
        s_dst = Wh @ ad.slice_cols(a, F, 2 * F).T
        e = ad.leaky_relu(ad.gather_rows(s_src, rows) + ad.gather_rows(s_dst, cols), slope)
        alpha = ad.segment_softmax(adj, e)
        outs.append(ad.edge_spmm(adj, alpha, Wh))
        alphas.append(alpha.data[:, 0])
    out = outs[0] if len(outs) == 1 else ad.concat_cols(outs)
    return (out, alphas) if return_attention else out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """Bias-corrected Adam update of ``params`` (name -> Tensor) in place.

    A missing gradient counts as zero.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter {name!r} shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
