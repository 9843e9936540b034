"""Integer-only mirror of a Q-network.

Values in [-10, 10] map to int32 as ``round(v * 2**30 / 10)`` with ties
rounded away from zero. A layer multiplies in int64, rescales the sum back by
``10 / 2**30`` (same rounding), adds the bias and applies an integer ReLU on
hidden layers. Activations share the parameter scale.
"""

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .encoder import StateLayout
from .errors import QuantizationError

SCALE = K.Q_ONE / K.Q_DIV  # 2**30 / 10
ENVELOPE = 10.0
INT_MAX = K.Q_ONE
_ACC_LIMIT = (1 << 63) - 1

# DVFSLAB_DEBUG=1 re-checks every integer forward pass with exact Python ints
DEBUG = os.environ.get("DVFSLAB_DEBUG", "").strip().lower() in ("1", "true", "yes", "on")

MAGIC = b"DVQN"
VERSION = 1


def quantize_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if np.any(np.abs(v) > ENVELOPE):
        raise QuantizationError(f"value outside [-{ENVELOPE:g}, {ENVELOPE:g}]")
    q = np.sign(v) * np.floor(np.abs(v) * SCALE + 0.5)
    return q.astype(np.int64)


def dequantize(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / SCALE


def _param_name(sizes, k):
    off = 0
    for li in range(len(sizes) - 1):
        n_in, n_out = sizes[li], sizes[li + 1]
        if k < off + n_in * n_out:
            r = k - off
            return f"layer {li} weight[{r // n_in}, {r % n_in}]"
        off += n_in * n_out
        if k < off + n_out:
            return f"layer {li} bias[{k - off}]"
        off += n_out
    return f"parameter {k}"


@dataclass(eq=False)
class QuantizedQNet:
    sizes: tuple
    params: np.ndarray  # int32
    layout: str = StateLayout.COMPACT.value
    table_sha256: str = ""
    action_q: np.ndarray = None  # quantized action inputs, one per level

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.params = np.ascontiguousarray(self.params, dtype=np.int32)
        if self.params.shape != (K.param_count(self.sizes),):
            raise ValueError("parameter count does not match layer sizes")
        if np.any(np.abs(self.params.astype(np.int64)) > INT_MAX):
            raise QuantizationError("stored integer outside [-2**30, 2**30]")
        self._sizes_arr = np.array(self.sizes, dtype=np.int64)
        self._params64 = self.params.astype(np.int64)

    @property
    def n_params(self) -> int:
        return self.params.shape[0]

    def forward(self, x_q) -> np.ndarray:
        x_q = np.ascontiguousarray(np.atleast_2d(x_q), dtype=np.int64)
        if x_q.shape[1] != self.sizes[0]:
            raise ValueError(f"network takes {self.sizes[0]} inputs, got {x_q.shape[1]}")
        out = K.int_forward(self._params64, self._sizes_arr, x_q)
        if DEBUG:
            self._debug_check(x_q, out)
        return out

    def _debug_check(self, x_q, out):
        for row, y in zip(x_q, out):
            try:
                exact = reference_int_forward(self.sizes, self.params, row)
            except OverflowError as exc:
                raise QuantizationError(str(exc)) from exc
            if exact != int(y):
                raise QuantizationError(f"integer forward diverged from exact arithmetic on {row}")

    def q_values(self, state_q, action_q=None) -> np.ndarray:
        action_q = self.action_q if action_q is None else action_q
        if DEBUG:
            x = np.column_stack([np.tile(np.asarray(state_q, dtype=np.int64), (len(action_q), 1)),
                                 np.asarray(action_q, dtype=np.int64)])
            return self.forward(x)
        return K.int_q_values(self._params64, self._sizes_arr,
                              np.ascontiguousarray(state_q, dtype=np.int64),
                              np.ascontiguousarray(action_q, dtype=np.int64))

    def argmax_action(self, state) -> int:
        """Best level for a float state vector; ties go to the lowest level."""
        return argmax_action_int(self, quantize_values(np.clip(state, -ENVELOPE, ENVELOPE)))

    def dequantized(self):
        from .rl.qnet import QNet

        return QNet(self.sizes, dequantize(self.params))


def quantize(net, layout=StateLayout.COMPACT, table=None) -> QuantizedQNet:
    theta = net.theta
    bad = np.flatnonzero(~(np.abs(theta) <= ENVELOPE))
    if bad.size:
        k = int(bad[0])
        raise QuantizationError(
            f"{_param_name(net.sizes, k)} = {theta[k]!r} is outside [-10, 10]")
    params = quantize_values(theta)
    _check_accumulators(net.sizes, params)
    action_q = None
    digest = ""
    if table is not None:
        from .rl.qnet import action_inputs

        action_q = quantize_values(action_inputs(table))
        digest = table.digest()
    return QuantizedQNet(net.sizes, params.astype(np.int32), StateLayout.parse(layout).value,
                         digest, action_q)


def _check_accumulators(sizes, params):
    # worst case: every input at the envelope edge
    off = 0
    for li in range(len(sizes) - 1):
        n_in, n_out = sizes[li], sizes[li + 1]
        w = params[off:off + n_in * n_out].reshape(n_out, n_in)
        worst = max(sum(abs(int(x)) for x in row) for row in w) * INT_MAX
        if worst > _ACC_LIMIT:
            raise QuantizationError(f"layer {li} could overflow a 64-bit accumulator")
        off += n_in * n_out + n_out


def int_forward(qnet: QuantizedQNet, state_q, action_index: int) -> int:
    """Quantized Q-value of one (state, level) pair."""
    if qnet.action_q is None:
        raise ValueError("quantized network has no action encoding; quantize with a table")
    return int(qnet.q_values(state_q)[action_index])


def argmax_action_int(qnet: QuantizedQNet, state_q, table=None) -> int:
    """Best level index; ties go to the lowest level."""
    action_q = None
    if table is not None:
        from .rl.qnet import action_inputs

        action_q = quantize_values(action_inputs(table))
    return int(np.argmax(qnet.q_values(state_q, action_q)))


def _round_div(num: int, den: int) -> int:
    q, r = divmod(abs(num), den)
    if 2 * r >= den:
        q += 1
    return q if num >= 0 else -q


def reference_int_forward(sizes, params, x_q) -> int:
    """Arbitrary-precision oracle of the integer forward pass (slow)."""
    a = [int(v) for v in x_q]
    off = 0
    n_layers = len(sizes) - 1
    for li in range(n_layers):
        n_in, n_out = sizes[li], sizes[li + 1]
        w = [int(v) for v in params[off:off + n_in * n_out]]
        off += n_in * n_out
        b = [int(v) for v in params[off:off + n_out]]
        off += n_out
        out = []
        for o in range(n_out):
            acc = sum(w[o * n_in + j] * a[j] for j in range(n_in))
            if abs(acc) > _ACC_LIMIT:
                raise OverflowError(f"layer {li} unit {o} accumulator overflows int64")
            y = _round_div(acc * K.Q_DIV, K.Q_ONE) + b[o]
            out.append(max(0, y) if li < n_layers - 1 else y)
        a = out
    return a[0]


# ---------------------------------------------------------------------------
# model file: little-endian
#   magic[4] version u16 n_sizes u16 sizes u16*n scale_num u32 scale_den u32
#   layout_len u8 layout[..] table_sha256[32] n_actions u16 action_q i32*n
#   n_params u32 params i32*n


def save_quantized(qnet: QuantizedQNet, path) -> Path:
    layout = qnet.layout.encode("ascii")
    digest = bytes.fromhex(qnet.table_sha256) if qnet.table_sha256 else bytes(32)
    action_q = np.asarray(qnet.action_q if qnet.action_q is not None else [], dtype="<i4")
    parts = [
        MAGIC, struct.pack("<HH", VERSION, len(qnet.sizes)),
        struct.pack(f"<{len(qnet.sizes)}H", *qnet.sizes),
        struct.pack("<II", K.Q_ONE, K.Q_DIV),
        struct.pack("<B", len(layout)), layout, digest,
        struct.pack("<H", len(action_q)), action_q.tobytes(),
        struct.pack("<I", qnet.n_params), qnet.params.astype("<i4").tobytes(),
    ]
    path = Path(path)
    path.write_bytes(b"".join(parts))
    return path


def load_quantized(path) -> QuantizedQNet:
    raw = Path(path).read_bytes()
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise QuantizationError(f"truncated model file at byte offset {pos}")
        vals = struct.unpack_from(fmt, raw, pos)
        pos += size
        return vals

    if take("<4s")[0] != MAGIC:
        raise QuantizationError("not a quantized model file")
    version, n_sizes = take("<HH")
    if version != VERSION:
        raise QuantizationError(f"unsupported model version {version}")
    sizes = take(f"<{n_sizes}H")
    num, den = take("<II")
    if (num, den) != (K.Q_ONE, K.Q_DIV):
        raise QuantizationError(f"unsupported scale {num}/{den}")
    (n_layout,) = take("<B")
    layout = bytes(take(f"<{n_layout}s")[0]).decode("ascii")
    digest = take("<32s")[0]
    (n_actions,) = take("<H")
    action_q = np.array(take(f"<{n_actions}i"), dtype=np.int64) if n_actions else None
    (n_params,) = take("<I")
    params = np.array(take(f"<{n_params}i"), dtype=np.int32)
    if pos != len(raw):
        raise QuantizationError(f"trailing bytes after byte offset {pos}")
    return QuantizedQNet(sizes, params, layout, digest.hex() if any(digest) else "", action_q)
