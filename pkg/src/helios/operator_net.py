"""Branch-trunk neural operator (DeepONet) with hand-written backpropagation.

The branch net maps the 2M real features ``(re u_1, im u_1, ..., re u_M, im u_M)``
of a sensor vector to 2q coefficients: the first q weight the real part and the
last q the imaginary part of the prediction, both against one shared trunk basis
``t_1(phi), ..., t_q(phi)``::

    u_hat(phi) = sum_k b_k^re t_k(phi) + i sum_k b_k^im t_k(phi)

The trunk sees the query angle rescaled from ``[-half_angle, half_angle]`` to
``[-1, 1]``. Hidden layers use tanh, output layers are linear; there is no bias
on the final inner product.

Dense layers compute ``y = x @ W + b`` with ``W`` of shape ``(fan_in, fan_out)``.
"""
from dataclasses import dataclass, field
import logging
import math
import struct
import time

import numpy as np
from scipy import sparse

from . import rng
from .errors import FormatError, InvalidInputError, OptimizerError, ShapeError, TrainingError

log = logging.getLogger(__name__)

MODEL_MAGIC = b"DONX"
MODEL_VERSION = 1
# rows per trunk block: a query's result never depends on which other
# queries share its matrix product
PREDICT_BLOCK = 256


class Mlp:
    def __init__(self, layer_dims, weights, biases):
        self.layer_dims = [int(d) for d in layer_dims]
        self.weights = list(weights)
        self.biases = list(biases)
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("need one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i], self.layer_dims[i + 1]) or b.shape != (self.layer_dims[i + 1],):
                raise ShapeError(f"layer {i} has shapes {w.shape}, {b.shape} for dims {self.layer_dims}")

    @classmethod
    def initialize(cls, layer_dims, gen, dtype=np.float64):
        """Glorot-uniform weights, zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(gen.uniform(-limit, limit, (fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(layer_dims, weights, biases)

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, x, keep=False):
        """Returns the output, plus the per-layer activations when ``keep``."""
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
            if keep:
                acts.append(h)
        return (h, acts) if keep else h

    def backward(self, acts, grad_out):
        """Parameter gradients (ordered like ``params``) given dL/d(output)."""
        grads = [None] * (2 * len(self.weights))
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            if i < len(self.weights) - 1:
                g = g * (1.0 - acts[i + 1] ** 2)
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i].T
        return grads

    def copy(self):
        return Mlp(self.layer_dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])


class DeepOnetModel:
    def __init__(self, branch: Mlp, trunk: Mlp, half_angle: float):
        if branch.layer_dims[0] % 2:
            raise ShapeError("branch input must hold real/imag pairs")
        if branch.layer_dims[-1] != 2 * trunk.layer_dims[-1]:
            raise ShapeError("branch output must be twice the trunk output")
        if trunk.layer_dims[0] != 1:
            raise ShapeError("trunk input is a single angle")
        self.branch = branch
        self.trunk = trunk
        self.half_angle = float(half_angle)

    @classmethod
    def initialize(cls, sensor_count, half_angle, seed, q=256, branch_hidden=(256,),
                   trunk_hidden=(256, 256), dtype=np.float64):
        gen = rng.generator(seed, "init")
        branch = Mlp.initialize([2 * sensor_count, *branch_hidden, 2 * q], gen, dtype)
        trunk = Mlp.initialize([1, *trunk_hidden, q], gen, dtype)
        return cls(branch, trunk, half_angle)

    @property
    def sensor_count(self):
        return self.branch.layer_dims[0] // 2

    @property
    def q(self):
        return self.trunk.layer_dims[-1]

    @property
    def dtype(self):
        return self.branch.weights[0].dtype

    @property
    def params(self):
        return self.branch.params + self.trunk.params

    def astype(self, dtype):
        def cast(m):
            return Mlp(m.layer_dims, [w.astype(dtype) for w in m.weights], [b.astype(dtype) for b in m.biases])
        return DeepOnetModel(cast(self.branch), cast(self.trunk), self.half_angle)

    def copy(self):
        return DeepOnetModel(self.branch.copy(), self.trunk.copy(), self.half_angle)

    def branch_features(self, u_sen):
        u = np.asarray(u_sen)
        if u.shape[-1] != self.sensor_count:
            raise ShapeError(f"model expects {self.sensor_count} sensors, got {u.shape[-1]}")
        feats = np.empty(u.shape[:-1] + (2 * self.sensor_count,), dtype=self.dtype)
        feats[..., 0::2] = u.real
        feats[..., 1::2] = u.imag
        return feats

    def trunk_features(self, phi):
        return (np.asarray(phi, dtype=self.dtype) / self.half_angle).reshape(-1, 1)

    def coefficients(self, u_sen):
        return self.branch.forward(self.branch_features(u_sen))

    def basis(self, phi):
        phi = np.asarray(phi, dtype=float).ravel()
        blocks = []
        for start in range(0, len(phi), PREDICT_BLOCK):
            part = phi[start:start + PREDICT_BLOCK]
            padded = np.zeros(PREDICT_BLOCK)
            padded[:len(part)] = part
            blocks.append(self.trunk.forward(self.trunk_features(padded))[:len(part)])
        if not blocks:
            return np.zeros((0, self.q), dtype=self.dtype)
        return np.concatenate(blocks)

    def predict_dense(self, u_sen, phis):
        """Prediction of one sensor vector at many angles."""
        coef = self.coefficients(np.asarray(u_sen).reshape(1, -1))[0]
        t = self.basis(phis)
        q = self.q
        re = np.array([np.dot(row, coef[:q]) for row in t], dtype=float)
        im = np.array([np.dot(row, coef[q:]) for row in t], dtype=float)
        return re + 1j * im


def predict(model: DeepOnetModel, u_sen, phi):
    """Operator output at angle(s) ``phi`` for one sensor vector."""
    out = model.predict_dense(u_sen, np.atleast_1d(phi))
    return complex(out[0]) if np.ndim(phi) == 0 else out


@dataclass
class Batch:
    """Triplets sharing a table of sensor vectors.

    ``u_sen[config[n]]``, ``phi[n]``, ``u_aux[n]`` form triplet n.
    """

    u_sen: np.ndarray
    config: np.ndarray
    phi: np.ndarray
    u_aux: np.ndarray

    @classmethod
    def from_triplets(cls, triplets):
        """From an iterable of ``(u_sen, phi, u_aux)``."""
        triplets = list(triplets)
        if not triplets:
            raise InvalidInputError("empty batch")
        u = np.array([np.asarray(t[0], dtype=complex) for t in triplets]).reshape(len(triplets), -1)
        return cls(u, np.arange(len(triplets)), np.array([t[1] for t in triplets], dtype=float),
                   np.array([t[2] for t in triplets], dtype=complex))

    def __len__(self):
        return len(self.phi)

    def subset(self, idx):
        return Batch(self.u_sen, self.config[idx], self.phi[idx], self.u_aux[idx])


def _forward(model, batch: Batch, keep):
    if len(batch) == 0:
        raise InvalidInputError("empty batch")
    configs, inverse = np.unique(batch.config, return_inverse=True)
    b_out = model.branch.forward(model.branch_features(batch.u_sen[configs]), keep)
    t_out = model.trunk.forward(model.trunk_features(batch.phi), keep)
    coef, b_acts = b_out if keep else (b_out, None)
    basis, t_acts = t_out if keep else (t_out, None)
    q = model.q
    c = coef[inverse]
    re = np.einsum("nk,nk->n", c[:, :q], basis)
    im = np.einsum("nk,nk->n", c[:, q:], basis)
    resid_re = re - batch.u_aux.real.astype(re.dtype)
    resid_im = im - batch.u_aux.imag.astype(im.dtype)
    loss_value = float(np.mean(resid_re.astype(np.float64) ** 2 + resid_im.astype(np.float64) ** 2))
    state = (configs, inverse, coef, basis, b_acts, t_acts, resid_re, resid_im)
    return loss_value, state


def loss(model: DeepOnetModel, batch) -> float:
    """Mean squared modulus of the complex residual."""
    if not isinstance(batch, Batch):
        batch = Batch.from_triplets(batch)
    return _forward(model, batch, keep=False)[0]


def loss_and_grad(model: DeepOnetModel, batch):
    if not isinstance(batch, Batch):
        batch = Batch.from_triplets(batch)
    value, (configs, inverse, coef, basis, b_acts, t_acts, rr, ri) = _forward(model, batch, keep=True)
    n = len(batch)
    q = model.q
    g_re = rr * rr.dtype.type(2.0 / n)
    g_im = ri * ri.dtype.type(2.0 / n)
    c = coef[inverse]
    d_basis = g_re[:, None] * c[:, :q] + g_im[:, None] * c[:, q:]
    # per-config sums over triplets, accumulated in triplet order
    onehot = sparse.csr_matrix((np.ones(n, dtype=basis.dtype), (inverse, np.arange(n))),
                               shape=(len(configs), n))
    d_coef = np.empty_like(coef)
    d_coef[:, :q] = onehot @ (g_re[:, None] * basis)
    d_coef[:, q:] = onehot @ (g_im[:, None] * basis)
    grads = model.branch.backward(b_acts, d_coef) + model.trunk.backward(t_acts, d_basis)
    return value, grads


def grad(model: DeepOnetModel, batch):
    """Exact gradient of ``loss`` for every parameter, ordered like ``model.params``."""
    return loss_and_grad(model, batch)[1]


@dataclass
class TrainConfig:
    lr_max: float = 1e-3
    weight_decay: float = 1e-4
    T0: int = 1000
    T_mult: int = 2
    lr_min: float = 1e-6
    batch_size: int = 50_000
    max_iters: int = 10_000
    seed: int = rng.CANONICAL_SEED

    def __post_init__(self):
        for name in ("lr_max", "weight_decay", "T0", "T_mult", "lr_min", "batch_size", "max_iters"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not self.lr_min < self.lr_max:
            raise InvalidInputError("lr_min must be below lr_max")


def cosine_lr(iteration: int, cfg: TrainConfig) -> float:
    """Cosine annealing with warm restarts; periods T0, T0*T_mult, ..."""
    if iteration < 0:
        raise InvalidInputError("iteration must be >= 0")
    period = cfg.T0
    t_cur = iteration
    while t_cur >= period:
        t_cur -= period
        period *= cfg.T_mult
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * t_cur / period)) / 2.0


@dataclass
class AdamWState:
    params: list
    m: list = None
    v: list = None
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in self.params]
        if self.v is None:
            self.v = [np.zeros_like(p) for p in self.params]


def adamw_step(state: AdamWState, grads, lr: float) -> AdamWState:
    """One in-place AdamW update with bias correction and decoupled decay."""
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise OptimizerError(f"non-finite gradient in parameter {i} ({bad} entries) at step {state.t + 1}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(state.params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            step = step + state.weight_decay * p
        p -= (lr * step).astype(p.dtype, copy=False)
    return state


@dataclass
class TrainResult:
    model: DeepOnetModel
    loss_history: list = field(default_factory=list)
    lr_history: list = field(default_factory=list)
    wall_time: float = 0.0


def train(dataset, cfg: TrainConfig, model: DeepOnetModel = None, dtype=np.float64,
          q=256, progress_every=0, callback=None) -> TrainResult:
    """Mini-batch AdamW training on uniformly resampled triplets.

    ``dataset`` is a ``helios.dataset.Dataset`` or a ``Batch`` holding all
    triplets. Each iteration draws ``cfg.batch_size`` triplet indices with
    replacement from the Philox stream ``(cfg.seed, "batches")``.
    """
    full = dataset.as_batch() if hasattr(dataset, "as_batch") else dataset
    if len(full) == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if model is None:
        half_angle = dataset.header.aperture.half_angle
        model = DeepOnetModel.initialize(full.u_sen.shape[1], half_angle, cfg.seed, q=q, dtype=dtype)
    else:
        model = model.astype(dtype)
    state = AdamWState(model.params, weight_decay=cfg.weight_decay)
    gen = rng.generator(cfg.seed, "batches")
    result = TrainResult(model)
    start = time.perf_counter()
    n = len(full)
    for it in range(cfg.max_iters):
        idx = gen.integers(0, n, cfg.batch_size)
        value, grads = loss_and_grad(model, full.subset(idx))
        if not math.isfinite(value):
            raise TrainingError(f"loss became {value} at iteration {it}", iteration=it)
        lr = cosine_lr(it, cfg)
        adamw_step(state, grads, lr)
        result.loss_history.append(value)
        result.lr_history.append(lr)
        if progress_every and (it % progress_every == 0 or it == cfg.max_iters - 1):
            log.info("iter %d  loss %.4e  lr %.3e  %.1fs", it, value, lr, time.perf_counter() - start)
        if callback is not None:
            callback(it, value, model)
    result.wall_time = time.perf_counter() - start
    return result


def save_model(model: DeepOnetModel, path):
    """Binary little-endian model file.

    ``"DONX"``, version u32, M u32, q u32, half_angle f64, then for branch and
    trunk: layer count u32 and dims u32; then per layer of branch, then trunk:
    weight matrix row-major f64 followed by its bias f64.
    """
    parts = [MODEL_MAGIC, struct.pack("<IIId", MODEL_VERSION, model.sensor_count, model.q, model.half_angle)]
    for net in (model.branch, model.trunk):
        parts.append(struct.pack(f"<I{len(net.layer_dims)}I", len(net.layer_dims), *net.layer_dims))
    for net in (model.branch, model.trunk):
        for w, b in zip(net.weights, net.biases):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_model_header(buf):
    """Parse the header; returns ``(info dict, payload offset)``."""
    if len(buf) < 24 or buf[:4] != MODEL_MAGIC:
        raise FormatError("not a DONX model file")
    version, m, q, half_angle = struct.unpack_from("<IIId", buf, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model format version {version}")
    off = 24
    dims = []
    for _ in range(2):
        if len(buf) < off + 4:
            raise FormatError("truncated model header")
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        if len(buf) < off + 4 * n:
            raise FormatError("truncated model header")
        dims.append(list(struct.unpack_from(f"<{n}I", buf, off)))
        off += 4 * n
    info = {"format_version": version, "sensor_count": m, "q": q, "half_angle": half_angle,
            "branch_dims": dims[0], "trunk_dims": dims[1]}
    return info, off


def load_model(path) -> DeepOnetModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    info, off = read_model_header(buf)
    nets = []
    for dims in (info["branch_dims"], info["trunk_dims"]):
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            nbytes = 8 * (fan_in * fan_out + fan_out)
            if len(buf) < off + nbytes:
                raise FormatError("truncated model weights")
            weights.append(np.frombuffer(buf, "<f8", fan_in * fan_out, off).reshape(fan_in, fan_out).astype(np.float64))
            off += 8 * fan_in * fan_out
            biases.append(np.frombuffer(buf, "<f8", fan_out, off).astype(np.float64))
            off += 8 * fan_out
        nets.append(Mlp(dims, weights, biases))
    if off != len(buf):
        raise FormatError("trailing bytes after model weights")
    model = DeepOnetModel(nets[0], nets[1], info["half_angle"])
    if model.sensor_count != info["sensor_count"] or model.q != info["q"]:
        raise FormatError("model header disagrees with layer dimensions")
    return model
