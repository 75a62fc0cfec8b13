"""Dense-tensor reverse-mode autodiff with the seven ops the reconstructors need.

The op set is deliberately closed: conv2d (stride 1, zero same-padding),
stride2_downsample, nearest_upsample2x, concat_channels, leaky_relu, add,
and mse_loss. Activations flow as (batch, channels, height, width) arrays.
Convolutions accumulate one kernel tap at a time in a fixed order, so
float64 results are bit-reproducible run to run.

Also here: the Adam optimizer state/update, a finite-difference gradient
checker, and the "NSBW" checkpoint container used for model persistence.
"""

import struct

import numpy as np

from .errors import (
    BadMagicError,
    ShapeError,
    TruncatedPayloadError,
    VersionMismatchError,
)

OP_KINDS = (
    "conv2d",
    "stride2_downsample",
    "nearest_upsample2x",
    "concat_channels",
    "leaky_relu",
    "add",
    "mse_loss",
)

# When true (grad_check turns it on), every op output is scanned and a
# non-finite result raises with the op's name.
_FINITE_CHECKS = False

# When a list, leaky_relu appends each activation-sign mask to it; grad_check
# uses this to notice when a finite-difference interval crosses a kink.
_MASK_TRACE = None


class Tensor:
    """An ndarray plus the graph record needed for reverse-mode autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"


def _result(data, parents, backward_fn, op):
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by op '{op}'")
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _require_nchw(x, op):
    if x.data.ndim != 4:
        raise ShapeError(f"{op}: expected a (B, C, H, W) input, got shape {x.shape}")


def conv2d(x, w, b=None):
    """Stride-1 convolution with zero same-padding; kernel extents must be odd.

    x: (B, Cin, H, W); w: (Cout, Cin, kh, kw); b: optional (Cout,).
    """
    _require_nchw(x, "conv2d")
    if w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected a (Cout, Cin, kh, kw) kernel, got shape {w.shape}")
    bsz, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise ShapeError(
            f"conv2d: input channels mismatch, input shape {x.shape} vs kernel shape {w.shape}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd for same padding, got {w.shape}")
    if b is not None and b.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match {cout} output channels")

    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    acc = np.zeros((bsz, h, wd, cout), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            # (B, Cin, H, W) x (Cout, Cin) contracted over Cin -> (B, H, W, Cout)
            acc += np.tensordot(xp[:, :, i : i + h, j : j + wd], w.data[:, :, i, j], axes=(1, 1))
    out = np.ascontiguousarray(np.moveaxis(acc, 3, 1))
    if b is not None:
        out += b.data.reshape(1, cout, 1, 1)

    def backward_fn(g):
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for i in range(kh):
                for j in range(kw):
                    gw[:, :, i, j] = np.tensordot(
                        g, xp[:, :, i : i + h, j : j + wd], axes=([0, 2, 3], [0, 2, 3])
                    )
            _accumulate(w, gw)
        if b is not None and b.requires_grad:
            _accumulate(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    # (B, Cout, H, W) x (Cout, Cin) -> (B, H, W, Cin)
                    contrib = np.tensordot(g, w.data[:, :, i, j], axes=(1, 0))
                    gxp[:, :, i : i + h, j : j + wd] += np.moveaxis(contrib, 3, 1)
            if ph or pw:
                gxp = gxp[:, :, ph : ph + h, pw : pw + wd]
            _accumulate(x, gxp)

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, backward_fn, "conv2d")


def stride2_downsample(x):
    """Keep every second row/column; extents must be even."""
    _require_nchw(x, "stride2_downsample")
    _, _, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"stride2_downsample: extents must be even, got shape {x.shape}")
    out = np.ascontiguousarray(x.data[:, :, ::2, ::2])

    def backward_fn(g):
        gx = np.zeros_like(x.data)
        gx[:, :, ::2, ::2] = g
        _accumulate(x, gx)

    return _result(out, (x,), backward_fn, "stride2_downsample")


def nearest_upsample2x(x):
    """Duplicate every row/column once (nearest-neighbour 2x upsampling)."""
    _require_nchw(x, "nearest_upsample2x")
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward_fn(g):
        bsz, c, h2, w2 = g.shape
        gx = g.reshape(bsz, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))
        _accumulate(x, gx)

    return _result(out, (x,), backward_fn, "nearest_upsample2x")


def concat_channels(tensors):
    """Concatenate along the channel axis; batch and spatial extents must agree."""
    tensors = list(tensors)
    if len(tensors) < 2:
        raise ShapeError("concat_channels: needs at least two inputs")
    for t in tensors:
        _require_nchw(t, "concat_channels")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if (t.shape[0],) + t.shape[2:] != (ref[0],) + ref[2:]:
            raise ShapeError(
                f"concat_channels: non-channel extents differ, {ref} vs {t.shape}"
            )
    out = np.concatenate([t.data for t in tensors], axis=1)
    offsets = np.cumsum([0] + [t.shape[1] for t in tensors])

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            _accumulate(t, g[:, lo:hi])

    return _result(out, tuple(tensors), backward_fn, "concat_channels")


def leaky_relu(x, slope=0.2):
    """Elementwise max(x, slope * x); subgradient at 0 is taken as 1."""
    mask = x.data >= 0
    if _MASK_TRACE is not None:
        _MASK_TRACE.append(mask)
    out = np.where(mask, x.data, slope * x.data)

    def backward_fn(g):
        _accumulate(x, np.where(mask, g, slope * g))

    return _result(out, (x,), backward_fn, "leaky_relu")


def add(a, b):
    """Strict elementwise addition (no broadcasting)."""
    if a.shape != b.shape:
        raise ShapeError(f"add: operand shapes differ, {a.shape} vs {b.shape}")
    out = a.data + b.data

    def backward_fn(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _result(out, (a, b), backward_fn, "add")


def mse_loss(pred, target):
    """Mean squared difference as a scalar tensor."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: operand shapes differ, {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = np.asarray((diff * diff).mean(), dtype=pred.data.dtype)
    scale = 2.0 / diff.size

    def backward_fn(g):
        gd = (g * scale) * diff
        _accumulate(pred, gd)
        _accumulate(target, -gd)

    return _result(out, (pred, target), backward_fn, "mse_loss")


def forward_op(op_kind, inputs, attrs=None):
    """Dispatch one forward op by name; used by the per-op gradient checks."""
    attrs = dict(attrs or {})
    if op_kind == "conv2d":
        return conv2d(*inputs)
    if op_kind == "stride2_downsample":
        (x,) = inputs
        return stride2_downsample(x)
    if op_kind == "nearest_upsample2x":
        (x,) = inputs
        return nearest_upsample2x(x)
    if op_kind == "concat_channels":
        return concat_channels(inputs)
    if op_kind == "leaky_relu":
        (x,) = inputs
        return leaky_relu(x, **attrs)
    if op_kind == "add":
        return add(*inputs)
    if op_kind == "mse_loss":
        return mse_loss(*inputs)
    raise ValueError(f"unknown op kind {op_kind!r}; supported: {', '.join(OP_KINDS)}")


def _toposort(root):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


def backward(loss):
    """Populate grads of every requires_grad leaf reachable from a scalar loss.

    Interior-node grads are reset on each call; leaf grads accumulate
    across calls until cleared with :func:`zero_grad`.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _toposort(loss)
    for node in order:
        if node._parents:
            node.grad = None
    _accumulate(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grad(params):
    for p in params:
        p.grad = None


class AdamState:
    """Adam moment buffers plus the tabled constants."""

    def __init__(self, params, learning_rate=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.data) for p in params]
        self.second_moment = [np.zeros_like(p.data) for p in params]


def adam_step(params, state):
    """One bias-corrected Adam update; increments step_count, leaves grads alone."""
    if len(params) != len(state.first_moment):
        raise ValueError(
            f"adam_step: {len(params)} params but state tracks {len(state.first_moment)}"
        )
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {i} has no grad")
        if state.first_moment[i].shape != p.data.shape:
            raise ValueError(
                f"adam_step: state buffer {i} shape {state.first_moment[i].shape} "
                f"does not match parameter shape {p.data.shape}"
            )
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, m, v in zip(params, state.first_moment, state.second_moment):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


def grad_check(model_forward, params, h=1e-5, max_entries_per_param=32, seed=0):
    """Max relative error between autodiff and central finite differences.

    ``model_forward`` must be a deterministic closure over ``params``
    returning a scalar loss Tensor. Parameters must be float64. Large
    parameters are spot-checked on a seeded sample of entries.

    Central differences are only valid where the loss is smooth on
    [theta-h, theta+h]; entries whose perturbation flips a leaky_relu
    activation sign are therefore resampled instead of compared.
    """
    global _FINITE_CHECKS, _MASK_TRACE
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 parameters")

    def traced_forward():
        global _MASK_TRACE
        _MASK_TRACE = []
        out = model_forward()
        masks, _MASK_TRACE = _MASK_TRACE, None
        return out, masks

    zero_grad(params)
    _FINITE_CHECKS = True
    try:
        loss, base_masks = traced_forward()
        backward(loss)
        analytic = [None if p.grad is None else p.grad.copy() for p in params]

        rng = np.random.default_rng(seed)
        worst = 0.0
        for p, ad in zip(params, analytic):
            n = p.data.size
            if n <= max_entries_per_param:
                candidates = list(np.arange(n))
            else:
                # oversample so kink-crossing entries can be replaced
                size = min(n, 4 * max_entries_per_param)
                candidates = list(rng.choice(n, size=size, replace=False))
            checked = 0
            for k in candidates:
                if checked >= max_entries_per_param:
                    break
                where = np.unravel_index(k, p.data.shape)
                orig = p.data[where]
                p.data[where] = orig + h
                loss_plus, masks_plus = traced_forward()
                p.data[where] = orig - h
                loss_minus, masks_minus = traced_forward()
                p.data[where] = orig
                crossed = any(
                    not np.array_equal(b, mp) or not np.array_equal(b, mm)
                    for b, mp, mm in zip(base_masks, masks_plus, masks_minus)
                )
                if crossed:
                    continue
                checked += 1
                fd = (float(loss_plus.data) - float(loss_minus.data)) / (2.0 * h)
                ad_k = 0.0 if ad is None else ad[where]
                rel = abs(ad_k - fd) / max(abs(fd), 1e-8)
                worst = max(worst, rel)
    finally:
        _FINITE_CHECKS = False
        _MASK_TRACE = None
    return worst


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"NSBW"
CHECKPOINT_VERSION = 1


def write_checkpoint(entries):
    """Serialize an ordered list of (name, array) pairs to bytes.

    Values are stored as little-endian float32, so a write/read/write
    cycle is byte-exact.
    """
    chunks = [CHECKPOINT_MAGIC, struct.pack("<H", CHECKPOINT_VERSION)]
    for name, arr in entries:
        raw = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f4")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}I", *a.shape))
        chunks.append(a.tobytes())
    return b"".join(chunks)


def read_checkpoint(data):
    """Parse checkpoint bytes back into an ordered list of (name, float32 array)."""
    if len(data) < 4 or data[:4] != CHECKPOINT_MAGIC:
        raise BadMagicError("checkpoint does not start with the NSBW magic")
    if len(data) < 6:
        raise TruncatedPayloadError("checkpoint truncated inside the header")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    pos = 6
    entries = []
    total = len(data)

    def need(nbytes, what):
        if pos + nbytes > total:
            raise TruncatedPayloadError(f"checkpoint truncated inside {what}")

    while pos < total:
        need(2, "a tensor name length")
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        need(name_len, "a tensor name")
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        need(1, "a tensor rank")
        rank = data[pos]
        pos += 1
        need(4 * rank, "tensor extents")
        shape = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        need(4 * count, f"tensor '{name}' values")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        entries.append((name, arr.copy()))
    return entries


def save_checkpoint(path, entries):
    with open(path, "wb") as fh:
        fh.write(write_checkpoint(entries))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return read_checkpoint(fh.read())
