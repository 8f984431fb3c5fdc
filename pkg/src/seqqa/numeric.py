"""Parameter storage, rmsprop, dropout, seeded randomness and gradient checking.

Everything is float64. Vectors are 1-D arrays, matrices 2-D arrays; a
parameter's gradient and rmsprop cache always share the value's shape.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Iterator, List, Optional

import numpy as np

logger = logging.getLogger(__name__)

DTYPE = np.float64


class ConfigError(ValueError):
    """Invalid configuration (shapes, rates, unknown keys)."""


class CheckpointError(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def split_rng(rng: np.random.Generator, n: int) -> List[np.random.Generator]:
    """Deterministically derive ``n`` independent child streams."""
    seeds = rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)
    return [make_rng(int(s)) for s in seeds]


@dataclass
class ParamTensor:
    name: str
    value: np.ndarray
    trainable: bool = True
    grad: np.ndarray = field(init=False)
    rms_cache: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=DTYPE)
        self.grad = np.zeros_like(self.value)
        self.rms_cache = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def matrix_shape(self):
        """(rows, cols) used on disk; vectors are stored as columns."""
        if self.value.ndim == 1:
            return self.value.shape[0], 1
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)


class ParamStore:
    """Ordered registry of named parameters."""

    def __init__(self):
        self._params: Dict[str, ParamTensor] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> ParamTensor:
        return self.register(ParamTensor(name, value, trainable))

    def register(self, p: ParamTensor) -> ParamTensor:
        if p.name in self._params:
            raise ConfigError(f"duplicate parameter name {p.name!r}")
        self._params[p.name] = p
        return p

    def __getitem__(self, name: str) -> ParamTensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[ParamTensor]:
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def trainable(self) -> List[ParamTensor]:
        return [p for p in self._params.values() if p.trainable]

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {n: p.value.copy() for n, p in self._params.items()}

    def restore(self, values: Dict[str, np.ndarray]):
        for n, v in values.items():
            self._params[n].value[...] = v


def glorot_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    r = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-r, r, size=(rows, cols))


def rmsprop_step(params: Iterable[ParamTensor], lr: float, decay: float = 0.9,
                 eps: float = 1e-8):
    """One rmsprop update on every trainable tensor; zeroes all grads afterwards."""
    for p in params:
        if p.grad.shape != p.value.shape or p.rms_cache.shape != p.value.shape:
            raise ConfigError(
                f"{p.name}: shape mismatch value={p.value.shape} grad={p.grad.shape} "
                f"cache={p.rms_cache.shape}")
        if p.trainable:
            p.rms_cache *= decay
            p.rms_cache += (1.0 - decay) * p.grad * p.grad
            p.value -= lr * p.grad / np.sqrt(p.rms_cache + eps)
        p.grad.fill(0.0)


def dropout_mask(shape, rate: float, rng: Optional[np.random.Generator],
                 training: bool) -> Optional[np.ndarray]:
    """Inverted-dropout mask, or None when dropout is a no-op."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def apply_dropout(x: np.ndarray, rate: float, rng: Optional[np.random.Generator],
                  training: bool) -> np.ndarray:
    mask = dropout_mask(x.shape, rate, rng, training)
    if mask is None:
        return x
    return x * mask


# ---------------------------------------------------------------------------
# gradient checking


class NonDeterministicLoss(RuntimeError):
    pass


@dataclass
class GradCheckReport:
    h: float
    tol: float
    max_rel_error: Dict[str, float]
    worst_index: Dict[str, tuple]
    n_checked: Dict[str, int]

    @property
    def failures(self) -> List[str]:
        return [n for n, e in self.max_rel_error.items() if not e <= self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def overall_max(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def format(self) -> str:
        lines = []
        for name, err in self.max_rel_error.items():
            flag = "ok" if err <= self.tol else "FAIL"
            lines.append(f"{flag:4s} {name:32s} max_rel={err:.3e} n={self.n_checked[name]}"
                         f" worst={self.worst_index[name]}")
        return "\n".join(lines)


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-10)


def finite_diff_check(loss_fn: Callable[[], float], params: Iterable[ParamTensor],
                      h: float = 1e-5, tol: float = 1e-4,
                      max_per_tensor: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None,
                      extended: bool = False) -> GradCheckReport:
    """Compare the analytic grads already stored in ``params`` with central differences.

    ``loss_fn`` must evaluate the loss at the current parameter values without
    touching any ``grad`` buffer. With ``max_per_tensor`` set, a random subset
    of each tensor's entries is checked.

    With ``extended``, parameter values are temporarily promoted to
    ``np.longdouble`` while the numeric side is evaluated, so that the
    O(eps/h) cancellation error of the difference quotient stays below the
    tolerance even for gradient entries around 1e-8. The analytic grads are
    not touched.
    """
    params = [p for p in params if p.trainable]
    saved = None
    if extended:
        saved = [p.value for p in params]
        for p in params:
            p.value = p.value.astype(np.longdouble)
    try:
        return _finite_diff(loss_fn, params, h, tol, max_per_tensor, rng)
    finally:
        if saved is not None:
            for p, v in zip(params, saved):
                p.value = v


def _finite_diff(loss_fn, params, h, tol, max_per_tensor, rng):
    base = loss_fn()
    again = loss_fn()
    if base != again:
        raise NonDeterministicLoss(
            f"loss_fn is not deterministic: {base!r} vs {again!r}; disable dropout")
    errs, worst, counts = {}, {}, {}
    for p in params:
        flat = p.value.reshape(-1)
        gflat = p.grad.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            if rng is None:
                rng = make_rng(0)
            idx = np.sort(rng.choice(flat.size, size=max_per_tensor, replace=False))
        max_err, arg = 0.0, None
        for k in idx:
            old = flat[k]
            flat[k] = old + h
            lp = loss_fn()
            flat[k] = old - h
            lm = loss_fn()
            flat[k] = old
            num = float((lp - lm) / (2 * h))
            err = relative_error(float(gflat[k]), num)
            if err > max_err or arg is None:
                max_err, arg = err, np.unravel_index(k, p.value.shape)
        errs[p.name] = max_err
        worst[p.name] = tuple(int(i) for i in arg) if arg is not None else ()
        counts[p.name] = len(idx)
    return GradCheckReport(h, tol, errs, worst, counts)


# ---------------------------------------------------------------------------
# checkpoint files

MAGIC = b"WQA1"


def write_tensors(path, params: Iterable[ParamTensor]):
    params = list(params)
    chunks = [MAGIC, struct.pack("<I", len(params))]
    for p in params:
        name = p.name.encode("utf-8")
        rows, cols = p.matrix_shape
        chunks.append(struct.pack("<I", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<II", rows, cols))
        chunks.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def read_tensors(path) -> Dict[str, np.ndarray]:
    """Read a tensor file into ``name -> (rows, cols)`` arrays."""
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at offset {pos} (needed {n} bytes)")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise CheckpointError(f"{path}: bad magic at offset 0")
    (count,) = struct.unpack("<I", take(4))
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        rows, cols = struct.unpack("<II", take(8))
        data = np.frombuffer(take(8 * rows * cols), dtype="<f8").astype(DTYPE)
        out[name] = data.reshape(rows, cols)
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes at offset {pos}")
    return out
