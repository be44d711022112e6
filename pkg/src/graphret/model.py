"""Attention-based adversarially regularized variational graph autoencoder.

The encoder is a multi-head graph attention block (attention, batch norm,
leaky ReLU, dropout) feeding two graph convolutions that produce the mean
and log-variance of the latent Gaussian. Without attention the block is a
single graph convolution with ReLU, which gives the GAE / VGAE / ARVGA
baselines. Reconstruction is ``sigmoid(Z Z^T)``; an MLP discriminator
separates prior samples from encoder outputs.
"""
import dataclasses
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import graph as graphmod
from . import nn
from . import rng as rngmod
from .dataset import Reader, write_atomic
from .errors import DimensionError, FormatError, NumericError, ParameterError

VARIANTS = {
    "gae": dict(use_attention=False, variational=False, adversarial=False),
    "vgae": dict(use_attention=False, variational=True, adversarial=False),
    "arvga": dict(use_attention=False, variational=True, adversarial=True),
    "a-arvgae": dict(use_attention=True, variational=True, adversarial=True),
}

MAGIC = b"GRFM"
VERSION = 1
PROB_CLAMP = 1e-12
_TINY = np.nextafter(0.0, 1.0)
_ALMOST_ONE = np.nextafter(1.0, 0.0)


@dataclass
class ModelConfig:
    d_in: int
    d_hidden: int = 64
    heads: int = 2
    d_latent: int = 32
    dropout_p: float = 0.2
    use_attention: bool = True
    variational: bool = True
    adversarial: bool = True
    disc_hidden: int = 64
    lr: float = 1e-4
    epochs: int = 250
    disc_iters: int = 5
    seed: int = 0
    # (w_recon, w_kl, w_adv); w_kl=None means 1/n
    loss_weights: tuple = (1.0, None, 1.0)
    recon_loss: str = "bce"
    attention_slope: float = 0.2
    activation_slope: float = 0.01
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    dense_budget: int = 20_000

    def __post_init__(self):
        self.loss_weights = tuple(self.loss_weights)
        for name in ("d_in", "d_hidden", "heads", "d_latent", "disc_hidden"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.epochs < 0 or self.disc_iters < 0:
            raise ParameterError("epochs and disc_iters must be >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ParameterError("dropout_p must be in [0, 1)")
        if self.recon_loss not in ("bce", "mse"):
            raise ParameterError(f"unknown reconstruction loss {self.recon_loss!r}")

    @classmethod
    def for_variant(cls, variant, **kw):
        try:
            flags = VARIANTS[variant]
        except KeyError:
            raise ParameterError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}") from None
        return cls(**{**kw, **flags})

    @property
    def variant(self):
        flags = (self.use_attention, self.variational, self.adversarial)
        for name, f in VARIANTS.items():
            if (f["use_attention"], f["variational"], f["adversarial"]) == flags:
                return name
        return "custom"

    @property
    def width(self):
        return self.heads * self.d_hidden

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------


def param_shapes(cfg):
    """Ordered ``name -> shape`` inventory of the trainable tensors."""
    shapes = {}
    H = cfg.width
    if cfg.use_attention:
        for h in range(cfg.heads):
            shapes[f"gat.W.{h}"] = (cfg.d_in, cfg.d_hidden)
            shapes[f"gat.a.{h}"] = (1, 2 * cfg.d_hidden)
        shapes["gat.bn.gamma"] = (1, H)
        shapes["gat.bn.beta"] = (1, H)
    else:
        shapes["gcn_hidden.W"] = (cfg.d_in, H)
    shapes["gcn_mu.W"] = (H, cfg.d_latent)
    if cfg.variational:
        shapes["gcn_logvar.W"] = (H, cfg.d_latent)
    if cfg.adversarial:
        shapes["disc.W1"] = (cfg.d_latent, cfg.disc_hidden)
        shapes["disc.b1"] = (1, cfg.disc_hidden)
        shapes["disc.bn.gamma"] = (1, cfg.disc_hidden)
        shapes["disc.bn.beta"] = (1, cfg.disc_hidden)
        shapes["disc.W2"] = (cfg.disc_hidden, 1)
        shapes["disc.b2"] = (1, 1)
    return shapes


def buffer_shapes(cfg):
    shapes = {}
    if cfg.use_attention:
        shapes["gat.bn.running_mean"] = (1, cfg.width)
        shapes["gat.bn.running_var"] = (1, cfg.width)
    if cfg.adversarial:
        shapes["disc.bn.running_mean"] = (1, cfg.disc_hidden)
        shapes["disc.bn.running_var"] = (1, cfg.disc_hidden)
    return shapes


class Model:
    def __init__(self, config, params, buffers):
        self.config = config
        self.params = params
        self.buffers = buffers

    @classmethod
    def init(cls, config):
        """Glorot-uniform weights, zero biases, unit batch-norm scale."""
        stream = rngmod.RngStream(config.seed, rngmod.INIT)
        params = {}
        for name, shape in param_shapes(config).items():
            leaf = name.rsplit(".", 1)[-1]
            if leaf == "gamma":
                t = ad.Tensor(np.ones(shape), requires_grad=True)
            elif leaf in ("beta", "b1", "b2"):
                t = nn.zeros(*shape)
            elif name.startswith("gat.a."):
                # glorot over the (2F, 1) vector it represents
                t = nn.glorot(stream, shape[1], 1)
                t.data = t.data.T.copy()
            else:
                t = nn.glorot(stream, *shape)
            t.name = name
            params[name] = t
        buffers = {name: (np.ones(s) if name.endswith("var") else np.zeros(s))
                   for name, s in buffer_shapes(config).items()}
        return cls(config, params, buffers)

    def encoder_params(self):
        return {k: v for k, v in self.params.items() if not k.startswith("disc.")}

    def disc_params(self):
        return {k: v for k, v in self.params.items() if k.startswith("disc.")}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


# ---------------------------------------------------------------------------
# graph operands
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GraphArtifacts:
    """Node features plus the three adjacency views the model consumes."""
    features: np.ndarray  # float64 (n, d)
    graph: object  # symmetric SparseGraph
    attention_adj: object  # graph + self-loops
    norm_adj: object  # D^-1/2 (A + I) D^-1/2

    @classmethod
    def build(cls, features, sym_graph):
        X = np.ascontiguousarray(getattr(features, "features", features), dtype=np.float64)
        if X.shape[0] != sym_graph.n:
            raise DimensionError(f"graph has {sym_graph.n} nodes but features have {X.shape[0]} rows")
        loops = graphmod.add_self_loops(sym_graph)
        return cls(X, sym_graph, loops, graphmod.normalize(sym_graph))

    @property
    def n(self):
        return self.graph.n

    @property
    def k(self):
        """Smallest node degree; equals the k-NN ``k`` for a union-symmetrized graph."""
        deg = self.graph.degrees()
        return int(deg.min()) if deg.size else 0


class Streams:
    """Independent random streams for dropout, reparameterization and prior draws."""

    def __init__(self, seed):
        self.dropout = rngmod.RngStream(seed, rngmod.DROPOUT)
        self.sample = rngmod.RngStream(seed, rngmod.SAMPLE)
        self.prior = rngmod.RngStream(seed, rngmod.PRIOR)

    def get_state(self):
        return {"dropout": self.dropout.get_state(), "sample": self.sample.get_state(),
                "prior": self.prior.get_state()}

    def set_state(self, state):
        self.dropout.set_state(state["dropout"])
        self.sample.set_state(state["sample"])
        self.prior.set_state(state["prior"])


@dataclass
class LatentState:
    mu: ad.Tensor
    logvar: ad.Tensor
    z: ad.Tensor
    eps: np.ndarray = None


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------


def reparameterize(mu, logvar, rng):
    """Return ``(z, eps)`` with ``z = mu + exp(logvar / 2) * eps``."""
    if mu.shape != logvar.shape:
        raise DimensionError("reparameterize: mu and logvar shapes differ")
    eps = rng.normal(mu.shape)
    return mu + ad.exp(ad.scale(logvar, 0.5)) * eps, eps


def encode(model, art, streams=None, training=False, x=None):
    cfg, P = model.config, model.params
    X = ad.as_tensor(art.features if x is None else x)
    if X.shape != (art.n, cfg.d_in):
        raise DimensionError(f"encode: features are {X.shape}, expected ({art.n}, {cfg.d_in})")
    if training and streams is None:
        raise ParameterError("training-mode encode needs random streams")
    if cfg.use_attention:
        h = nn.gat_layer(X, art.attention_adj,
                         [P[f"gat.W.{i}"] for i in range(cfg.heads)],
                         [P[f"gat.a.{i}"] for i in range(cfg.heads)],
                         slope=cfg.attention_slope)
        h = nn.batch_norm(h, P["gat.bn.gamma"], P["gat.bn.beta"],
                          model.buffers["gat.bn.running_mean"], model.buffers["gat.bn.running_var"],
                          training, cfg.bn_momentum, cfg.bn_eps)
        h = ad.leaky_relu(h, cfg.activation_slope)
        h = ad.dropout(h, cfg.dropout_p, streams.dropout if training else None, training)
    else:
        h = ad.relu(nn.gcn_layer(X, art.norm_adj, P["gcn_hidden.W"]))
    mu = nn.gcn_layer(h, art.norm_adj, P["gcn_mu.W"])
    if not cfg.variational:
        return LatentState(mu, ad.Tensor(np.zeros(mu.shape)), mu)
    logvar = nn.gcn_layer(h, art.norm_adj, P["gcn_logvar.W"])
    if training:
        z, eps = reparameterize(mu, logvar, streams.sample)
        return LatentState(mu, logvar, z, eps)
    return LatentState(mu, logvar, mu)


def decode_logits(z):
    return z @ z.T


def decode(z, budget=20_000):
    z = ad.as_tensor(z)
    if z.shape[0] > budget:
        raise ParameterError(f"dense decoder limited to {budget} nodes, got {z.shape[0]}")
    # binary64 sigmoid saturates at |logit| > ~37; keep the output strictly inside (0, 1)
    return ad.clamp(ad.sigmoid(decode_logits(z)), _TINY, _ALMOST_ONE)


def discriminate(model, samples, rng=None, training=False):
    cfg, P = model.config, model.params
    samples = ad.as_tensor(samples)
    if samples.shape[1] != cfg.d_latent:
        raise DimensionError(f"discriminator expects {cfg.d_latent} columns, got {samples.shape[1]}")
    h = nn.linear(samples, P["disc.W1"], P["disc.b1"])
    h = nn.batch_norm(h, P["disc.bn.gamma"], P["disc.bn.beta"],
                      model.buffers["disc.bn.running_mean"], model.buffers["disc.bn.running_var"],
                      training, cfg.bn_momentum, cfg.bn_eps)
    h = ad.leaky_relu(h, cfg.activation_slope)
    h = ad.dropout(h, cfg.dropout_p, rng, training)
    return nn.linear(h, P["disc.W2"], P["disc.b2"])


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _recon_weights(target):
    n = target.n
    total = float(n) * n
    nnz = float(target.nnz)
    if nnz == 0 or nnz == total:
        raise ParameterError("reconstruction target must have some but not all entries set")
    return (total - nnz) / nnz, total / (2.0 * (total - nnz))


def loss_reconstruction(pred, target, mode="bce"):
    """Reconstruction loss of probabilities ``pred`` against adjacency ``target``.

    BCE mode: ``norm * mean(pos_weight * t * -log p + (1 - t) * -log(1 - p))``
    with probabilities clamped to ``[1e-12, 1 - 1e-12]``.
    """
    pred = ad.as_tensor(pred)
    if pred.shape != (target.n, target.n):
        raise DimensionError(f"prediction is {pred.shape}, target has {target.n} nodes")
    T = target.to_dense()
    if mode == "mse":
        return ad.mean_all(ad.power(pred - T, 2.0))
    pos_weight, norm = _recon_weights(target)
    p = ad.clamp(pred, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = ad.mul(ad.log(p), -pos_weight * T)
    neg = ad.mul(ad.log(ad.scale(p, -1.0) + 1.0), -(1.0 - T))
    return ad.scale(ad.mean_all(pos + neg), norm)


def loss_reconstruction_logits(logits, target, mode="bce"):
    """Same loss evaluated from ``Z Z^T`` logits (stable form used in training)."""
    if mode == "mse":
        return loss_reconstruction(ad.sigmoid(logits), target, mode)
    T = target.to_dense()
    pos_weight, norm = _recon_weights(target)
    per = ad.mul(ad.softplus(-logits), pos_weight * T) + ad.mul(ad.softplus(logits), 1.0 - T)
    return ad.scale(ad.mean_all(per), norm)


def loss_reconstruction_sampled(z, target, rng):
    """Edge-sampled BCE: every target edge plus as many random node pairs as negatives."""
    n = target.n
    src, dst = target.rows(), target.col_indices
    m = src.shape[0]
    ns = np.floor(rng.uniform(m) * n).astype(np.int64)
    nd = np.floor(rng.uniform(m) * n).astype(np.int64)
    dense_key = set((src * n + dst).tolist())
    neg_ok = np.array([int(a) * n + int(b) not in dense_key for a, b in zip(ns, nd)], dtype=float)
    pos_logit = ad.row_sum(ad.gather_rows(z, src) * ad.gather_rows(z, dst))
    neg_logit = ad.row_sum(ad.gather_rows(z, ns) * ad.gather_rows(z, nd))
    pos = ad.mean_all(ad.softplus(-pos_logit))
    neg = ad.scale(ad.sum_all(ad.mul(ad.softplus(neg_logit), neg_ok[:, None])),
                   1.0 / max(1.0, neg_ok.sum()))
    return pos + neg


def loss_kl(mu, logvar):
    """``(1/n) sum_nodes -1/2 sum_dims (1 + logvar - mu^2 - exp(logvar))``."""
    mu, logvar = ad.as_tensor(mu), ad.as_tensor(logvar)
    if mu.shape != logvar.shape:
        raise DimensionError("loss_kl: mu and logvar shapes differ")
    # written as exp(lv) + mu^2 - 1 - lv so the optimum gives +0.0, not -0.0
    inner = ad.exp(logvar) + mu * mu - ad.add(logvar, 1.0)
    return ad.scale(ad.sum_all(inner), 0.5 / mu.shape[0])


def loss_adversarial(real_logits, fake_logits, role):
    """Binary cross-entropy on discriminator logits (prior = real, encoder = fake)."""
    if role == "discriminator":
        return (ad.mean_all(ad.softplus(-ad.as_tensor(real_logits)))
                + ad.mean_all(ad.softplus(ad.as_tensor(fake_logits))))
    if role == "generator":
        return ad.mean_all(ad.softplus(-ad.as_tensor(fake_logits)))
    raise ParameterError(f"unknown adversarial role {role!r}")


def loss_weights(cfg, n):
    w_recon, w_kl, w_adv = cfg.loss_weights
    return float(w_recon), (1.0 / n if w_kl is None else float(w_kl)), float(w_adv)


def loss_terms(model, art, streams, training=True):
    """Encoder-side loss terms ``{'recon', 'kl', 'gen'}`` plus the latent state.

    Terms switched off by the configuration are constant zero tensors, so
    they contribute nothing to any gradient.
    """
    cfg = model.config
    lat = encode(model, art, streams, training)
    target = art.attention_adj
    if art.n <= cfg.dense_budget:
        recon = loss_reconstruction_logits(decode_logits(lat.z), target, cfg.recon_loss)
    else:
        recon = loss_reconstruction_sampled(lat.z, target, streams.sample)
    zero = ad.Tensor(0.0)
    kl = loss_kl(lat.mu, lat.logvar) if cfg.variational else zero
    if cfg.adversarial:
        gen = loss_adversarial(None, discriminate(model, lat.z, None, training=False), "generator")
    else:
        gen = zero
    return {"recon": recon, "kl": kl, "gen": gen}, lat


def total_loss(model, terms, n):
    w_recon, w_kl, w_adv = loss_weights(model.config, n)
    return (ad.scale(terms["recon"], w_recon) + ad.scale(terms["kl"], w_kl)
            + ad.scale(terms["gen"], w_adv))


def discriminator_loss(model, real, fake, rng, training=True):
    lr = discriminate(model, real, rng, training)
    lf = discriminate(model, fake, rng, training)
    return loss_adversarial(lr, lf, "discriminator")


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

HISTORY_COLUMNS = ("recon", "kl", "gen", "disc", "total")


@dataclass(eq=False)
class Checkpoint:
    config: ModelConfig
    params: dict  # name -> float64 array
    buffers: dict
    epoch: int = 0
    history: np.ndarray = field(default_factory=lambda: np.zeros((0, len(HISTORY_COLUMNS))))
    rng_state: dict = None

    @classmethod
    def from_model(cls, model, epoch=0, history=None, rng_state=None):
        hist = np.zeros((0, len(HISTORY_COLUMNS))) if history is None else np.asarray(history, float)
        return cls(model.config, {k: v.data.copy() for k, v in model.params.items()},
                   {k: v.copy() for k, v in model.buffers.items()}, epoch,
                   hist.reshape(-1, len(HISTORY_COLUMNS)), rng_state)

    def to_model(self):
        params = {k: ad.Tensor(v, requires_grad=True, name=k) for k, v in self.params.items()}
        return Model(self.config, params, {k: v.copy() for k, v in self.buffers.items()})

    def to_bytes(self):
        return checkpoint_to_bytes(self)

    def digest(self):
        return hashlib.sha256(self.to_bytes()).digest()


def train(art, config, log=None):
    """Adversarial training schedule; returns the final :class:`Checkpoint`.

    Per epoch: one encoder forward pass; if adversarial, ``disc_iters``
    discriminator updates on fresh prior samples against the current
    (detached) latent codes; then one Adam step on the encoder minimizing
    the weighted reconstruction, KL and generator terms.
    """
    if art.features.shape[1] != config.d_in:
        raise DimensionError(f"features have {art.features.shape[1]} columns, config.d_in={config.d_in}")
    model = Model.init(config)
    streams = Streams(config.seed)
    enc_params = model.encoder_params()
    disc_params = model.disc_params()
    enc_opt = nn.AdamState(lr=config.lr)
    disc_opt = nn.AdamState(lr=config.lr)
    history = []
    n = art.n
    for epoch in range(config.epochs):
        try:
            model.zero_grad()
            terms, lat = loss_terms(model, art, streams, training=True)
            disc_val = 0.0
            if config.adversarial:
                fake = lat.z.data.copy()
                for _ in range(config.disc_iters):
                    real = streams.prior.normal(fake.shape)
                    for p in disc_params.values():
                        p.grad = None
                    dl = discriminator_loss(model, real, fake, streams.dropout, True)
                    dl.backward()
                    nn.adam_step(disc_params, {k: p.grad for k, p in disc_params.items()}, disc_opt)
                    disc_val = dl.item()
                # generator term against the updated discriminator
                terms["gen"] = loss_adversarial(
                    None, discriminate(model, lat.z, None, training=False), "generator")
            total = total_loss(model, terms, n)
            total.backward()
            nn.adam_step(enc_params, {k: p.grad for k, p in enc_params.items()}, enc_opt)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch + 1}: {exc}") from exc
        row = [terms["recon"].item(), terms["kl"].item(), terms["gen"].item(), disc_val, total.item()]
        if not np.all(np.isfinite(row)):
            raise NumericError(f"epoch {epoch + 1}: non-finite loss")
        history.append(row)
        if log is not None:
            log(epoch + 1, row)
    model.zero_grad()
    return Checkpoint.from_model(model, config.epochs, history, streams.get_state())


def embed(ckpt, art):
    """Eval-mode latent means for every node of ``art``."""
    model = ckpt.to_model() if isinstance(ckpt, Checkpoint) else ckpt
    with ad.no_grad():
        return encode(model, art, training=False).mu.data


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _unjson(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _unjson(v) for k, v in obj.items()}
    return obj


def _put_tensor(buf, name, arr):
    b = name.encode("utf-8")
    arr = np.asarray(arr, dtype="<f8")
    arr = arr.reshape(arr.shape[0], -1) if arr.ndim != 2 else arr
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)
    buf.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
    buf.write(arr.tobytes())


def checkpoint_to_bytes(ckpt):
    meta = {"config": ckpt.config.to_dict(), "epoch": ckpt.epoch,
            "rng_state": _jsonable(ckpt.rng_state)}
    mb = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(mb)))
    buf.write(mb)
    tensors = ([("param/" + k, v) for k, v in ckpt.params.items()]
               + [("buffer/" + k, v) for k, v in ckpt.buffers.items()]
               + [("history", ckpt.history)])
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        _put_tensor(buf, name, arr)
    return buf.getvalue()


def checkpoint_from_bytes(data, name="<bytes>", config=None):
    r = Reader(data, name)
    r.header(MAGIC, VERSION)
    (ml,) = r.unpack("<I")
    try:
        meta = json.loads(bytes(r.take(ml)).decode("utf-8"))
        cfg = ModelConfig.from_dict(meta["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{name}: corrupt checkpoint header ({exc})") from None
    (count,) = r.unpack("<I")
    params, buffers, history = {}, {}, None
    for _ in range(count):
        tname = r.string()
        rows, cols = r.unpack("<QQ")
        if rows * cols * 8 > len(data):
            raise FormatError(f"{name}: truncated payload")
        arr = r.array("<f8", rows * cols).reshape(rows, cols)
        if tname.startswith("param/"):
            params[tname[6:]] = arr
        elif tname.startswith("buffer/"):
            buffers[tname[7:]] = arr
        elif tname == "history":
            history = arr
        else:
            raise FormatError(f"{name}: unknown tensor {tname!r}")
    r.finish()
    expected = config if config is not None else cfg
    _check_shapes(params, param_shapes(expected), "parameter")
    _check_shapes(buffers, buffer_shapes(expected), "buffer")
    if history is None or history.shape[1] != len(HISTORY_COLUMNS):
        raise FormatError(f"{name}: missing or malformed loss history")
    return Checkpoint(cfg, params, buffers, meta["epoch"], history, _unjson(meta["rng_state"]))


def _check_shapes(found, expected, kind):
    for tname, shape in expected.items():
        if tname not in found:
            raise DimensionError(f"checkpoint lacks {kind} tensor {tname!r}")
        if found[tname].shape != tuple(shape):
            raise DimensionError(f"{kind} tensor {tname!r} has shape {found[tname].shape}, "
                                 f"expected {tuple(shape)}")
    extra = set(found) - set(expected)
    if extra:
        raise DimensionError(f"unexpected {kind} tensor {sorted(extra)[0]!r}")


def save_checkpoint(ckpt, path):
    write_atomic(path, checkpoint_to_bytes(ckpt))


def load_checkpoint(path, config=None):
    with open(path, "rb") as fh:
        return checkpoint_from_bytes(fh.read(), str(path), config)
