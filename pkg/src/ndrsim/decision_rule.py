"""Neural green-split rules: sensor-window state assembly and the forward
passes of the feedforward and recurrent variants.

The rule maps a normalized sensor history matrix to one raw green time per
controlled phase. Outputs are squashed into [g_min, g_max] per phase, so the
downstream budget projection only has to fix the cycle sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FFNN = "ffnn"
RNN = "rnn"

DEFAULT_SATURATION_VPS = 0.5  # veh/s per lane, for input normalization


@dataclass(frozen=True)
class SensorWindow:
    """Sliding flow-count window: columns t-n .. t-m at resolution dt."""
    m: int = 0
    n: int = 4
    dt: float = 120.0

    def __post_init__(self):
        if not 0 <= self.m < self.n:
            raise ValueError("need 0 <= m < n")

    @property
    def width(self) -> int:
        return self.n - self.m + 1


def build_state_matrix(counts_by_detector, window: SensorWindow, t: float):
    """Flow-history matrix at decision time t, oldest column first.

    `counts_by_detector` is an ordered sequence of per-period count lists
    (one per sensor). Periods not yet observed read as zero.
    """
    latest = int(t // window.dt) - 1 - window.m  # newest usable period
    cols = range(latest - window.width + 1, latest + 1)
    q = np.zeros((len(counts_by_detector), window.width))
    for i, counts in enumerate(counts_by_detector):
        for j, p in enumerate(cols):
            if 0 <= p < len(counts):
                q[i, j] = counts[p]
    return q


def normalize_state(q, saturation):
    """Scale each sensor row by its saturation count and clamp to [0, 1]."""
    saturation = np.asarray(saturation, dtype=float)
    if np.any(saturation <= 0):
        raise ValueError("saturation must be positive per sensor")
    return np.clip(np.asarray(q, dtype=float) / saturation[:, None], 0.0, 1.0)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def param_count(architecture, hidden_sizes, n_sensors, window: SensorWindow,
                n_phases) -> int:
    """Number of weights and biases in the documented flat layout."""
    if architecture == FFNN:
        sizes = [n_sensors * window.width] + list(hidden_sizes) + [n_phases]
        return sum(sizes[i + 1] * sizes[i] + sizes[i + 1]
                   for i in range(len(sizes) - 1))
    if architecture == RNN:
        (h,) = hidden_sizes
        return h * n_sensors + h + h * h + n_phases * h + n_phases
    raise ValueError(f"unknown architecture {architecture!r}")


@dataclass(frozen=True)
class DecisionRuleParams:
    """Flat weight vector plus the shape information to unpack it.

    FFNN layout: for each layer in order, W (row-major, out x in) then bias.
    RNN layout: W_in (h x sensors), b_h, U (h x h, recurrent), W_out, b_out.
    """
    architecture: str
    hidden_sizes: tuple
    n_sensors: int
    window: SensorWindow
    n_phases: int
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        expected = param_count(self.architecture, self.hidden_sizes,
                               self.n_sensors, self.window, self.n_phases)
        if x.shape != (expected,):
            raise ValueError(
                f"flat vector has {x.size} entries, layout needs {expected}")
        if not np.all(np.isfinite(x)):
            raise ValueError("weights must be finite")

    @classmethod
    def zeros(cls, architecture, hidden_sizes, n_sensors, window, n_phases):
        n = param_count(architecture, hidden_sizes, n_sensors, window, n_phases)
        return cls(architecture, tuple(hidden_sizes), n_sensors, window,
                   n_phases, np.zeros(n))

    def with_vector(self, x) -> "DecisionRuleParams":
        return DecisionRuleParams(self.architecture, self.hidden_sizes,
                                  self.n_sensors, self.window, self.n_phases,
                                  np.asarray(x, dtype=float))


def _take(x, i, shape):
    n = int(np.prod(shape))
    return x[i:i + n].reshape(shape), i + n


def _scale_output(z, g_min, g_max):
    g_min = np.asarray(g_min, dtype=float)
    g_max = np.asarray(g_max, dtype=float)
    return g_min + sigmoid(z) * (g_max - g_min)


def ffnn_forward(params: DecisionRuleParams, q_norm, g_min, g_max):
    """Raw green times from the feedforward rule.

    The input matrix is flattened sensor-major, so each sensor's time columns
    stay contiguous; all hidden layers use the logistic activation.
    """
    if params.architecture != FFNN:
        raise ValueError("params are not for the feedforward rule")
    q_norm = np.asarray(q_norm, dtype=float)
    if q_norm.shape != (params.n_sensors, params.window.width):
        raise ValueError(
            f"state shape {q_norm.shape} does not match "
            f"({params.n_sensors}, {params.window.width})")
    h = q_norm.reshape(-1)
    sizes = [h.size] + list(params.hidden_sizes) + [params.n_phases]
    i = 0
    for li in range(len(sizes) - 1):
        w, i = _take(params.x, i, (sizes[li + 1], sizes[li]))
        b, i = _take(params.x, i, (sizes[li + 1],))
        z = w @ h + b
        h = z if li == len(sizes) - 2 else sigmoid(z)
    return _scale_output(h, g_min, g_max)


def rnn_forward(params: DecisionRuleParams, q_norm, g_min, g_max):
    """Raw green times from the recurrent rule.

    Columns are consumed oldest to newest; the first step sees input only,
    later steps add the recurrent term from the previous hidden state.
    """
    if params.architecture != RNN:
        raise ValueError("params are not for the recurrent rule")
    q_norm = np.asarray(q_norm, dtype=float)
    if q_norm.shape != (params.n_sensors, params.window.width):
        raise ValueError(
            f"state shape {q_norm.shape} does not match "
            f"({params.n_sensors}, {params.window.width})")
    (nh,) = params.hidden_sizes
    i = 0
    w_in, i = _take(params.x, i, (nh, params.n_sensors))
    b_h, i = _take(params.x, i, (nh,))
    u, i = _take(params.x, i, (nh, nh))
    w_out, i = _take(params.x, i, (params.n_phases, nh))
    b_out, i = _take(params.x, i, (params.n_phases,))

    h = sigmoid(w_in @ q_norm[:, 0] + b_h)
    for k in range(1, params.window.width):
        h = sigmoid(w_in @ q_norm[:, k] + u @ h + b_h)
    return _scale_output(w_out @ h + b_out, g_min, g_max)


def forward(params: DecisionRuleParams, q_norm, g_min, g_max):
    fn = ffnn_forward if params.architecture == FFNN else rnn_forward
    return fn(params, q_norm, g_min, g_max)


def save_params(params: DecisionRuleParams, path) -> None:
    """Write the header plus one '%.17g' weight per line (lossless for f64)."""
    with open(path, "w") as fh:
        hidden = "x".join(str(s) for s in params.hidden_sizes)
        fh.write(f"{params.architecture},{hidden},{params.n_sensors},"
                 f"{params.window.m},{params.window.n},{params.window.dt:g},"
                 f"{params.n_phases},{params.x.size}\n")
        for v in params.x:
            fh.write(f"{v:.17g}\n")


def load_params(path) -> DecisionRuleParams:
    with open(path) as fh:
        head = fh.readline().strip().split(",")
        if len(head) != 8:
            raise ValueError(f"{path}: bad parameter file header")
        arch, hidden, n_sensors, m, n, dt, n_phases, count = head
        x = np.array([float(line) for line in fh if line.strip()])
    if x.size != int(count):
        raise ValueError(f"{path}: expected {count} weights, found {x.size}")
    window = SensorWindow(m=int(m), n=int(n), dt=float(dt))
    sizes = tuple(int(s) for s in hidden.split("x") if s)
    return DecisionRuleParams(arch, sizes, int(n_sensors), window,
                              int(n_phases), x)
