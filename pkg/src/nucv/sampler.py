"""Per-pixel sampling-distribution producers for the refinement stages.

Two producers share one input record:

* :func:`heuristic_distribution`, training-free, used by default;
* :func:`patchnet_forward`, a small residual network applied independently
  to non-overlapping 8x8 patches, with an analytic reverse pass
  (:func:`patchnet_gradient`) for toy-scale fitting.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _nn
from .errors import InputShapeError
from .paramfile import load_tensors, save_tensors
from .sampling import check_plane_count

PATCH = 8
CHANNELS = 32
PE_DIM = 8
PARAM_KIND = "patch-sampler"


def positional_encoding(D, dim=PE_DIM):
    """Sinusoidal code of plane index ``j`` at relative position ``j / (D - 1)``.

    Returns shape ``(D, dim)``.
    """
    t = np.arange(D) / max(D - 1, 1)
    freqs = np.pi * 2.0 ** np.arange(dim // 2)
    ang = t[:, None] * freqs[None]
    pe = np.empty((D, dim))
    pe[:, 0::2] = np.sin(ang)
    pe[:, 1::2] = np.cos(ang)
    return pe


@dataclass(frozen=True, eq=False)
class SamplerInput:
    """Everything a producer sees for one stage.

    ``sample_cost`` is ``(D_prev, H, W)``; ``prev_depth`` is normalised to
    ``[0, 1]`` over the scene depth range; ``reference_image`` is luminance in
    ``[0, 1]``. ``deviation_unit`` is the depth length that one unit of the
    sample-cost deviation stands for (the previous stage range when the cost
    was normalised) and ``stage_range`` the new stage's hypothesis range.
    """

    sample_cost: np.ndarray
    prev_depth: np.ndarray
    reference_image: np.ndarray
    n_planes: int
    stage_range: float = 1.0
    deviation_unit: float = 1.0

    def __post_init__(self):
        check_plane_count(self.n_planes)
        hw = self.sample_cost.shape[1:]
        if self.prev_depth.shape != hw or self.reference_image.shape != hw:
            raise InputShapeError(
                f"sampler inputs disagree in resolution: {hw}, "
                f"{self.prev_depth.shape}, {self.reference_image.shape}")

    @property
    def shape(self):
        return self.prev_depth.shape

    @property
    def positional_encoding(self):
        return positional_encoding(self.n_planes)

    def channels(self):
        """Network input ``(H, W, PE_DIM + 2)``.

        The previous-stage cost is summarised by its expectation of the
        previous planes' positional codes, which keeps the channel count
        independent of the previous plane count.
        """
        pe_prev = positional_encoding(self.sample_cost.shape[0])
        summary = np.einsum("jhw,jc->hwc", self.sample_cost, pe_prev)
        return np.concatenate(
            [summary, self.prev_depth[..., None], self.reference_image[..., None]], axis=-1)


def deviation_spread(sample_cost):
    """Standard deviation implied by a sample cost, in deviation units.

    ``log(dS_j) - min_i log(dS_i)`` recovers each plane's weighted deviation
    relative to the smallest one.
    """
    logs = np.log(sample_cost)
    s = logs - logs.min(axis=0, keepdims=True)
    return np.sqrt((s * s).sum(axis=0))


def heuristic_distribution(inp, beta=4.0):
    """Spend the lead interval on coverage where the previous stage was unsure.

    Plane placement starts counting at ``dd[0]`` but the first plane already
    sits one interval inside the range, so ``dd[0]`` widens nothing; the
    planes span ``stage_range - dd[0]``. The previous spread ``sigma`` (as a
    fraction of this stage's range) gates a penalty on that lead interval:
    ``P[j] ~ exp(-beta * c * g[j])`` with ``g = (1, 0, ..., 0)`` and
    ``c = sigma / (sigma + 1/D)``. Confident pixels keep uniform spacing;
    uncertain ones move the freed mass onto the real gaps, which widens the
    swept range by up to one spacing while keeping it centred.
    """
    D = inp.n_planes
    sigma = deviation_spread(inp.sample_cost) * inp.deviation_unit / inp.stage_range
    c = sigma / (sigma + 1.0 / D)
    profile = np.zeros(D)
    profile[0] = 1.0
    logits = -beta * profile[:, None, None] * c[None]
    logits -= logits.max(axis=0, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=0, keepdims=True)


# ---------------------------------------------------------------------------
# Patch network


BLOCKS = ("block1", "block2")


@dataclass(frozen=True, eq=False)
class PatchSamplerParams:
    """Immutable parameter snapshot of the patch network.

    Tensor names: ``stem.w/b``, ``block{1,2}.conv{1,2}.w/b``, ``head.w``
    ``(D, channels)``, ``head.b`` ``(D,)`` and ``head.pe`` ``(PE_DIM,)``.
    """

    tensors: dict = field(default_factory=dict)

    @property
    def n_planes(self):
        return self.tensors["head.b"].shape[0]

    @property
    def size(self):
        return sum(v.size for v in self.tensors.values())

    def __getitem__(self, name):
        return self.tensors[name]

    def updated(self, delta, scale=1.0):
        new = {k: v + scale * delta[k] for k, v in self.tensors.items()}
        return replace(self, tensors=new)

    def rounded(self):
        """Snapshot rounded to float32, i.e. exactly what a file stores."""
        return replace(self, tensors={k: v.astype(np.float32).astype(np.float64)
                                      for k, v in self.tensors.items()})

    @classmethod
    def init(cls, D, seed=0, channels=CHANNELS, in_channels=PE_DIM + 2):
        check_plane_count(D)
        rng = np.random.default_rng(seed)

        def conv(cout, cin):
            return rng.normal(0.0, np.sqrt(2.0 / (9 * cin)), size=(cout, cin, 3, 3))

        t = {"stem.w": conv(channels, in_channels), "stem.b": np.zeros(channels)}
        for blk in BLOCKS:
            for i in (1, 2):
                t[f"{blk}.conv{i}.w"] = 0.5 * conv(channels, channels)
                t[f"{blk}.conv{i}.b"] = np.zeros(channels)
        t["head.w"] = rng.normal(0.0, 0.1, size=(D, channels))
        t["head.b"] = np.zeros(D)
        t["head.pe"] = np.zeros(PE_DIM)
        return cls(t).rounded()

    def save(self, path):
        save_tensors(path, self.tensors, kind=PARAM_KIND)

    @classmethod
    def load(cls, path):
        _, tensors = load_tensors(path, kind=PARAM_KIND)
        return cls(dict(tensors))


def to_patches(x):
    """(H, W, C) -> (N, 8, 8, C) in row-major patch order."""
    h, w, c = x.shape
    if h % PATCH or w % PATCH:
        raise InputShapeError(f"spatial dims {h}x{w} not divisible by patch size {PATCH}")
    p = x.reshape(h // PATCH, PATCH, w // PATCH, PATCH, c).transpose(0, 2, 1, 3, 4)
    return p.reshape(-1, PATCH, PATCH, c)


def from_patches(p, h, w):
    c = p.shape[-1]
    x = p.reshape(h // PATCH, w // PATCH, PATCH, PATCH, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(h, w, c)


def _lin(cols, weight, bias, w_ndim=4):
    """``cols @ W^T + b``; ``cols`` may carry leading batch axes."""
    wt = _nn.flat_weight(weight) if w_ndim == 4 else weight
    return cols @ wt.T + bias


def _conv_layer(h, spatial, weight, bias):
    """3x3 patch convolution of activations ``(*lead, N*64, C)``."""
    lead = h.shape[:-2]
    c = h.shape[-1]
    n = int(np.prod(lead, dtype=int)) * (h.shape[-2] // (spatial[0] * spatial[1]))
    cols = _nn.im2col(h.reshape(n, *spatial, c)).reshape(*lead, -1, 9 * c)
    return cols, _lin(cols, weight, bias)


def _apply_probe(a, cols, name, probe):
    """Shift pre-activations ``a`` as if one entry of ``name`` moved by ``step``.

    ``probe`` is ``(name, flat_indices, steps)``; entry ``b`` of the returned
    batch corresponds to parameter ``flat_indices[b]`` moved by ``steps[b]``.
    Pre-activations are linear in each weight, so the shift is a column of
    the layer input.
    """
    pname, idx, steps = probe
    if a.ndim != 2:
        raise ValueError("probes apply to a single unbatched evaluation")
    out = np.repeat(a[None], len(idx), axis=0)
    rows = np.arange(len(idx))
    if pname == f"{name}.b":
        out[rows, :, idx] += steps[:, None]
    else:
        cout, cin, k = a.shape[-1], cols.shape[-1] // 9, 3
        o, c, ky, kx = np.unravel_index(idx, (cout, cin, k, k))
        col = (ky * k + kx) * cin + c
        out[rows, :, o] += steps[:, None] * cols[:, col].T
    return out


def _forward(x, params, keep=False, probe=None):
    """Run the network on patches ``x`` (N, 8, 8, Cin); returns probabilities.

    With ``probe=(name, flat_indices, steps)`` the result is a batch
    ``(B, N*64, D)``, entry ``b`` evaluated with parameter ``name`` at flat
    index ``flat_indices[b]`` shifted by ``steps[b]``.
    """
    cache = {}
    pname = probe[0].rsplit(".", 1)[0] if probe is not None else None
    spatial = x.shape[1:3]
    h0 = x.reshape(-1, x.shape[-1])
    cols, a = _conv_layer(h0, spatial, params["stem.w"], params["stem.b"])
    if pname == "stem":
        a = _apply_probe(a, cols, "stem", probe)
    h = np.maximum(a, 0.0)
    if keep:
        cache["stem"] = (x.shape, cols, a)
    for blk in BLOCKS:
        c1, a1 = _conv_layer(h, spatial, params[f"{blk}.conv1.w"], params[f"{blk}.conv1.b"])
        if pname == f"{blk}.conv1":
            a1 = _apply_probe(a1, c1, pname, probe)
        r1 = np.maximum(a1, 0.0)
        c2, a2 = _conv_layer(r1, spatial, params[f"{blk}.conv2.w"], params[f"{blk}.conv2.b"])
        if pname == f"{blk}.conv2":
            a2 = _apply_probe(a2, c2, pname, probe)
        if keep:
            cache[blk] = ((x.shape[0], *spatial, h.shape[-1]), c1, a1, c2, a2)
        h = h + np.maximum(a2, 0.0)
    D = params["head.b"].shape[-1]
    pe = positional_encoding(D)
    logits = h @ params["head.w"].T + (params["head.b"] + pe @ params["head.pe"])
    if pname == "head":
        name, idx, steps = probe
        logits = np.repeat(logits[None], len(idx), axis=0)
        rows = np.arange(len(idx))
        if name == "head.w":
            j, c = np.unravel_index(idx, params["head.w"].shape)
            logits[rows, :, j] += steps[:, None] * h[:, c].T
        elif name == "head.b":
            logits[rows, :, idx] += steps[:, None]
        else:
            logits += (steps[:, None] * pe[:, idx].T)[:, None, :]
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    P = e / e.sum(axis=-1, keepdims=True)
    if keep:
        cache["head"] = (h, P)
    return P, cache


def probe_objective(inp, params, upstream, name, indices, step):
    """``sum(upstream * P)`` with parameter ``name[i]`` moved by ``+step`` and ``-step``.

    Returns ``(f_plus, f_minus)``, one value per flat index in ``indices``.
    Meant for finite-difference checks of :func:`patchnet_gradient`.
    """
    indices = np.asarray(indices)
    if name not in params.tensors:
        raise KeyError(name)
    steps = np.concatenate([np.full(len(indices), step), np.full(len(indices), -step)])
    x = to_patches(inp.channels())
    P, _ = _forward(x, params, probe=(name, np.concatenate([indices, indices]), steps))
    G = to_patches(np.asarray(upstream).transpose(1, 2, 0)).reshape(P.shape[-2:])
    f = (P * G).sum(axis=(-2, -1))
    return f[:len(indices)], f[len(indices):]


def patchnet_forward(inp, params):
    """Sampling distribution ``(D, H, W)`` from the patch network."""
    if params.n_planes != inp.n_planes:
        raise InputShapeError(
            f"parameters are for {params.n_planes} planes, input asks for {inp.n_planes}")
    h, w = inp.shape
    x = to_patches(inp.channels())
    expected = params["stem.w"].shape[1]
    if x.shape[-1] != expected:
        raise InputShapeError(f"expected {expected} input channels, got {x.shape[-1]}")
    P, _ = _forward(x, params)
    return from_patches(P.reshape(*x.shape[:3], -1), h, w).transpose(2, 0, 1)


def _conv_backward(dy, cols, weight, in_shape):
    dw = _nn.unflat_weight(dy.T @ cols, weight.shape)
    db = dy.sum(axis=0)
    dx = _nn.col2im(dy @ _nn.flat_weight(weight), in_shape)
    return dw, db, dx


def patchnet_gradient(inp, params, upstream):
    """Gradient of ``sum(upstream * P)`` with respect to every parameter.

    ``upstream`` has the output's shape ``(D, H, W)``. Returns a dict keyed
    like ``params.tensors``.
    """
    h, w = inp.shape
    x = to_patches(inp.channels())
    P, cache = _forward(x, params, keep=True)
    G = to_patches(np.asarray(upstream).transpose(1, 2, 0)).reshape(P.shape)
    grads = {}

    dlogits = P * (G - (P * G).sum(axis=1, keepdims=True))
    hf, _ = cache["head"]
    grads["head.w"] = dlogits.T @ hf
    grads["head.b"] = dlogits.sum(axis=0)
    grads["head.pe"] = positional_encoding(params.n_planes).T @ grads["head.b"]
    dh = (dlogits @ params["head.w"]).reshape(*x.shape[:3], -1)

    for blk in reversed(BLOCKS):
        shape, c1, a1, c2, a2 = cache[blk]
        w1, w2 = params[f"{blk}.conv1.w"], params[f"{blk}.conv2.w"]
        da2 = dh.reshape(-1, shape[-1]) * (a2 > 0)
        grads[f"{blk}.conv2.w"], grads[f"{blk}.conv2.b"], dr1 = _conv_backward(da2, c2, w2, shape)
        da1 = dr1.reshape(-1, shape[-1]) * (a1 > 0)
        grads[f"{blk}.conv1.w"], grads[f"{blk}.conv1.b"], dx1 = _conv_backward(da1, c1, w1, shape)
        dh = dh + dx1

    shape, cols, a = cache["stem"]
    da = dh.reshape(-1, dh.shape[-1]) * (a > 0)
    grads["stem.w"], grads["stem.b"], _ = _conv_backward(da, cols, params["stem.w"], shape)
    return {k: grads[k] for k in params.tensors}


def fit_patchnet(inputs, targets, params, steps=100, lr=0.1):
    """Fixed-step gradient descent on mean KL(target || output).

    Each step returns a new snapshot; ``params`` is never mutated. Returns
    ``(params, losses)``.
    """
    losses = []
    for _ in range(steps):
        total = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        loss = 0.0
        n = 0
        for inp, target in zip(inputs, targets):
            P = patchnet_forward(inp, params)
            npix = P[0].size
            eps = 1e-12
            loss += float(np.sum(target * (np.log(target + eps) - np.log(P + eps)))) / npix
            g = patchnet_gradient(inp, params, -target / (P + eps) / npix)
            for k in total:
                total[k] += g[k]
            n += 1
        losses.append(loss / n)
        params = params.updated(total, scale=-lr / n)
    return params.rounded(), losses
