"""Tiny ReLU MLP scoring (state, action) pairs, plus model files."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import _kernels as K
from ..encoder import StateLayout
from ..errors import ConfigError

MODEL_FORMAT = "dvfslab-qnet"
MODEL_VERSION = 1


@dataclass(eq=False)
class QNet:
    sizes: tuple
    theta: np.ndarray

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or self.sizes[-1] != 1 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {self.sizes}")
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.shape != (K.param_count(self.sizes),):
            raise ValueError(f"expected {K.param_count(self.sizes)} parameters, got {self.theta.shape}")
        self._sizes_arr = np.array(self.sizes, dtype=np.int64)

    @classmethod
    def init(cls, sizes=(7, 8, 8, 1), rng=None, scale=0.5) -> "QNet":
        rng = np.random.default_rng(rng)
        return cls(sizes, rng.uniform(-scale, scale, K.param_count(sizes)))

    @classmethod
    def zeros(cls, sizes=(7, 8, 8, 1)) -> "QNet":
        return cls(sizes, np.zeros(K.param_count(sizes)))

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_params(self) -> int:
        return self.theta.shape[0]

    @property
    def sizes_array(self) -> np.ndarray:
        return self._sizes_arr

    def layers(self):
        return K.unpack(self.theta, self.sizes)

    def copy(self) -> "QNet":
        return QNet(self.sizes, self.theta.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta)))

    def forward(self, x) -> np.ndarray:
        x = np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64)
        if x.shape[1] != self.n_inputs:
            raise ValueError(f"network takes {self.n_inputs} inputs, got {x.shape[1]}")
        return K.forward(self.theta, self._sizes_arr, x)

    def q_values(self, state, action_values) -> np.ndarray:
        state = np.ascontiguousarray(state, dtype=np.float64)
        if state.shape[0] + 1 != self.n_inputs:
            raise ValueError(f"state has {state.shape[0]} entries, network expects {self.n_inputs - 1}")
        return K.q_values(self.theta, self._sizes_arr, state,
                          np.ascontiguousarray(action_values, dtype=np.float64))


def action_inputs(table) -> np.ndarray:
    """Network input encoding each level: its normalized frequency."""
    return np.array([table.normalized(lv.frequency) for lv in table])


def q_forward(net: QNet, state, action_index: int, table) -> float:
    """Q(state, action) with the action fed as its normalized frequency."""
    acts = action_inputs(table)
    if not 0 <= action_index < len(acts):
        raise IndexError(f"action {action_index} outside a {len(acts)}-level table")
    x = np.append(np.asarray(state, dtype=np.float64), acts[action_index])
    return float(net.forward(x)[0])


def greedy_index(q) -> int:
    """Argmax with ties going to the lowest level."""
    return int(np.argmax(q))


def save_model(net: QNet, path, layout, table) -> Path:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "sizes": list(net.sizes),
        "layout": StateLayout.parse(layout).value,
        "table_sha256": table.digest(),
        "table": [[lv.frequency, lv.voltage] for lv in table],
        "theta": [float(x).hex() for x in net.theta],
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def load_model(path):
    """Returns ``(net, layout, table)``; checks the table hash."""
    from ..power import FrequencyTable

    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
        raise ConfigError(f"{path} is not a version {MODEL_VERSION} model file")
    table = FrequencyTable.from_pairs(doc["table"])
    if table.digest() != doc["table_sha256"]:
        raise ConfigError(f"{path}: frequency table does not match its hash")
    net = QNet(doc["sizes"], np.array([float.fromhex(x) for x in doc["theta"]]))
    return net, StateLayout.parse(doc["layout"]), table
