"""Network specification and the four ways of executing it.

A NetworkSpec is a frozen stack of affine layers with activations and a
per-layer input-discretization scale k.  Four executors compute (nearly)
the same function at very different costs:

  forward_original      dense pass, the reference function
  forward_temporal_diff streams undiscretized changes; exactly the original
  forward_rounding      quantizes each layer input to the 1/k grid, stateless
  forward_sigma_delta   herds the *change* in quantized input; same function
                        as forward_rounding, but repeated inputs cost nothing

The last two communicate integer events between layers, so their cost is
events-times-fanout additions instead of dense multiply-accumulates.
"""

import base64
import json
from dataclasses import dataclass

import numpy as np

from .kernels import sparse_accumulate, to_events
from .quantizers import Herder, TemporalDifference, round_half_away

__all__ = [
    "ACTIVATIONS",
    "LayerSpec",
    "NetworkSpec",
    "relu",
    "softmax",
    "forward_original",
    "forward_rounding",
    "forward_temporal_diff",
    "forward_sigma_delta",
    "TemporalDiffRuntime",
    "SigmaDeltaRuntime",
    "bake_scales",
    "save_network",
    "load_network",
]

ACTIVATIONS = ("relu", "identity", "softmax")


def relu(u):
    return np.maximum(u, 0.0)


def softmax(u):
    e = np.exp(u - np.max(u, axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


_ACT_FNS = {"relu": relu, "identity": lambda u: u, "softmax": softmax}


def apply_activation(name, u):
    return _ACT_FNS[name](u)


@dataclass(frozen=True)
class LayerSpec:
    """One affine layer: weights (d_in, d_out), bias (d_out,), activation,
    and the scale k at which this layer's *input* is discretized.

    k may be a positive scalar (layerwise) or a positive vector of length
    d_in (unitwise).
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"
    scale: object = 1.0

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if W.ndim != 2 or b.ndim != 1 or b.shape[0] != W.shape[1]:
            raise ValueError(
                f"bad layer shapes: weights {W.shape}, bias {b.shape}")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        k = np.asarray(self.scale, dtype=np.float64)
        if k.ndim not in (0, 1) or (k.ndim == 1 and k.shape[0] != W.shape[0]):
            raise ValueError("scale must be a scalar or a vector of length d_in")
        if not np.all(np.isfinite(k)) or np.any(k <= 0):
            raise ValueError("scale must be positive and finite")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "scale", float(k) if k.ndim == 0 else k)

    @property
    def d_in(self):
        return self.weights.shape[0]

    @property
    def d_out(self):
        return self.weights.shape[1]

    def scale_column(self):
        """Scale broadcastable over the input axis (for row-scaling weights)."""
        k = np.asarray(self.scale, dtype=np.float64)
        return k if k.ndim == 0 else k[:, None]

    def scaled_weights(self):
        """weights / k: what an integer event of this layer multiplies into."""
        return self.weights / self.scale_column()

    def with_scale(self, k):
        return LayerSpec(self.weights, self.bias, self.activation, k)


class NetworkSpec:
    """An immutable stack of layers with chained dimensions.

    Softmax is only allowed on the final layer; hidden layers are relu or
    identity so that scales can be folded into the parameters.
    """

    def __init__(self, layers):
        layers = tuple(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.d_out != b.d_in:
                raise ValueError(
                    f"layer widths do not chain: {a.d_out} -> {b.d_in}")
        for lay in layers[:-1]:
            if lay.activation == "softmax":
                raise ValueError("softmax is only allowed on the final layer")
        self.layers = layers

    @property
    def dims(self):
        return (self.layers[0].d_in,) + tuple(l.d_out for l in self.layers)

    @property
    def input_dim(self):
        return self.layers[0].d_in

    @property
    def output_dim(self):
        return self.layers[-1].d_out

    @property
    def scales(self):
        return [l.scale for l in self.layers]

    def with_scales(self, scales):
        if len(scales) != len(self.layers):
            raise ValueError("need one scale per layer")
        return NetworkSpec([l.with_scale(k) for l, k in zip(self.layers, scales)])

    def __len__(self):
        return len(self.layers)

    def __repr__(self):
        acts = ",".join(l.activation for l in self.layers)
        return f"NetworkSpec(dims={self.dims}, activations=[{acts}])"


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(
            f"input has shape {x.shape}, network expects ({net.input_dim},)")
    return x


def forward_original(net, x, ledger=None, activity=None):
    """Reference dense pass.  Ledger counts the full multiply-accumulate cost."""
    a = _check_input(net, x)
    nonzero = []
    for layer in net.layers:
        nonzero.append(int(np.count_nonzero(a)))
        if ledger is not None:
            ledger.float_mults += layer.d_in * layer.d_out
            ledger.float_adds += layer.d_in * layer.d_out
        a = apply_activation(layer.activation, a @ layer.weights + layer.bias)
    if activity is not None:
        activity.record_frame(nonzero=nonzero)
    return a


def forward_rounding(net, x, ledger=None, activity=None, discretize_last=True):
    """Stateless quantized pass: each layer input is snapped to its 1/k grid.

    The integer part round(k*a) travels as events into weights/k, so the
    ledger gains |s|_L1 * d_out event additions plus d_out bias additions
    per layer.  With discretize_last=False the final layer input is passed
    dense instead (and counted at dense cost).
    """
    a = _check_input(net, x)
    if activity is not None and not discretize_last:
        raise ValueError("activity recording requires discretize_last=True")
    l1s = []
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        if i == last and not discretize_last:
            if ledger is not None:
                ledger.float_mults += layer.d_in * layer.d_out
                ledger.float_adds += layer.d_in * layer.d_out
            u = a @ layer.weights + layer.bias
        else:
            s = round_half_away(a * np.asarray(layer.scale))
            events = to_events(s)
            l1s.append(events.num_events)
            u = sparse_accumulate(events, layer.scaled_weights(), layer.bias,
                                  ledger)
            if ledger is not None:
                ledger.int_adds += layer.d_out  # bias add
        a = apply_activation(layer.activation, u)
    if activity is not None:
        activity.record_frame(l1=l1s)
    return a


class TemporalDiffRuntime:
    """Streaming state for the temporal-difference executor.

    Each layer keeps the last input seen and an integrated pre-activation
    that starts at the bias, so the bias is added once per sequence.
    """

    def __init__(self, net):
        self.net = net
        self._diffs = [TemporalDifference(l.d_in) for l in net.layers]
        self._u = [l.bias.copy() for l in net.layers]

    def reset(self):
        for d in self._diffs:
            d.reset()
        for u, layer in zip(self._u, self.net.layers):
            u[:] = layer.bias

    def step(self, x):
        a = _check_input(self.net, x)
        for i, layer in enumerate(self.net.layers):
            delta = self._diffs[i].step(a)
            self._u[i] += delta @ layer.weights
            a = apply_activation(layer.activation, self._u[i])
        return a.copy()


def forward_temporal_diff(net, runtime, x):
    """One frame through the temporal-difference network.

    Communicates raw (undiscretized) changes and re-integrates after each
    linear map, so every frame's output equals forward_original on that
    frame regardless of history.
    """
    if runtime.net is not net:
        raise ValueError("runtime was built for a different network")
    return runtime.step(x)


class SigmaDeltaRuntime:
    """Streaming state for the event-driven executor.

    Per layer: a temporal difference on the k-scaled layer input, a herding
    residual, and an integrated pre-activation u seeded with the bias.
    After t frames, activation(u) matches what forward_rounding computes on
    frame t alone (up to float accumulation drift).
    """

    def __init__(self, net, discretize_last=True):
        self.net = net
        self.discretize_last = discretize_last
        self._diffs = [TemporalDifference(l.d_in) for l in net.layers]
        self._herders = [Herder(l.d_in) for l in net.layers]
        self._u = [l.bias.copy() for l in net.layers]
        self._wk = [l.scaled_weights() for l in net.layers]
        self.frames = 0

    def reset(self):
        for d, h in zip(self._diffs, self._herders):
            d.reset()
            h.reset()
        for u, layer in zip(self._u, self.net.layers):
            u[:] = layer.bias
        self.frames = 0

    def step(self, x, ledger=None, activity=None):
        a = _check_input(self.net, x)
        if activity is not None and not self.discretize_last:
            raise ValueError("activity recording requires discretize_last=True")
        l1s = []
        last = len(self.net.layers) - 1
        for i, layer in enumerate(self.net.layers):
            if i == last and not self.discretize_last:
                delta = self._diffs[i].step(a)
                if ledger is not None:
                    ledger.float_mults += layer.d_in * layer.d_out
                    ledger.float_adds += layer.d_in * layer.d_out
                self._u[i] += delta @ layer.weights
            else:
                z = a * np.asarray(layer.scale)
                s = self._herders[i].step(self._diffs[i].step(z))
                events = to_events(s)
                l1s.append(events.num_events)
                self._u[i] = sparse_accumulate(events, self._wk[i],
                                               self._u[i], ledger)
            a = apply_activation(layer.activation, self._u[i])
        if activity is not None:
            activity.record_frame(l1=l1s)
        self.frames += 1
        return a.copy()

    def resync(self, x):
        """Rebuild all streaming state from a fresh rounding pass on x.

        Clears accumulated float drift; intended for very long streams.
        Returns the frame output.
        """
        a = _check_input(self.net, x)
        last = len(self.net.layers) - 1
        for i, layer in enumerate(self.net.layers):
            if i == last and not self.discretize_last:
                self._diffs[i].x_last = a.copy()
                self._u[i] = a @ layer.weights + layer.bias
            else:
                z = a * np.asarray(layer.scale)
                s = round_half_away(z)
                self._diffs[i].x_last = z
                self._herders[i].phi = z - s
                self._u[i] = sparse_accumulate(to_events(s), self._wk[i],
                                               layer.bias)
            a = apply_activation(layer.activation, self._u[i])
        self.frames += 1
        return a.copy()


def forward_sigma_delta(net, runtime, x, ledger=None, activity=None):
    """One frame through the event-driven network.

    Herds the change in each layer's scaled input into integer events and
    accumulates them into the integrated pre-activation, so an unchanged
    input costs zero additions at the layers it leaves unchanged.
    """
    if runtime.net is not net:
        raise ValueError("runtime was built for a different network")
    return runtime.step(x, ledger=ledger, activity=activity)


def bake_scales(net):
    """Fold discretization scales into weights and biases.

    Returns a network computing the identical quantized function whose
    hidden scales are all 1.  The first layer's scale is kept as-is: it
    fixes the grid the raw input is snapped to, which cannot be moved into
    the parameters without changing the function.  Requires homogeneous
    hidden activations (relu or identity); a final softmax is untouched
    since nothing is folded past it.
    """
    for layer in net.layers[:-1]:
        if layer.activation not in ("relu", "identity"):
            raise ValueError(
                "baking requires homogeneous hidden activations, got "
                f"{layer.activation!r}")
    baked = []
    n = len(net.layers)
    for i, layer in enumerate(net.layers):
        k_next = np.asarray(net.layers[i + 1].scale) if i + 1 < n else 1.0
        w = layer.scaled_weights() * k_next  # rows / k_i, columns * k_{i+1}
        b = layer.bias * k_next
        if i == 0:
            k0 = np.asarray(layer.scale)
            baked.append(LayerSpec(w * layer.scale_column(), b,
                                   layer.activation,
                                   float(k0) if k0.ndim == 0 else k0))
        else:
            baked.append(LayerSpec(w, b, layer.activation, 1.0))
    return NetworkSpec(baked)


# ---------------------------------------------------------------------------
# Serialization: versioned JSON container, schema documented in the README.
# Arrays are little-endian float64, C (row-major) order, base64-encoded.

_FORMAT_NAME = "sigmadelta-network"
_FORMAT_VERSION = 1


def _encode_array(a):
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode_array(s, shape):
    a = np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)
    if a.size != int(np.prod(shape)):
        raise ValueError("array payload does not match declared shape")
    return a.reshape(shape)


def save_network(net, path):
    doc = {
        "format": _FORMAT_NAME,
        "version": _FORMAT_VERSION,
        "dims": list(net.dims),
        "layers": [],
    }
    for layer in net.layers:
        k = np.asarray(layer.scale)
        doc["layers"].append({
            "d_in": layer.d_in,
            "d_out": layer.d_out,
            "activation": layer.activation,
            "scale": float(k) if k.ndim == 0 else [float(v) for v in k],
            "weights": _encode_array(layer.weights),
            "bias": _encode_array(layer.bias),
        })
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_network(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != _FORMAT_NAME:
        raise ValueError(f"not a {_FORMAT_NAME} file: {path}")
    if doc.get("version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported container version {doc.get('version')}")
    layers = []
    for ld in doc["layers"]:
        w = _decode_array(ld["weights"], (ld["d_in"], ld["d_out"]))
        b = _decode_array(ld["bias"], (ld["d_out"],))
        k = ld["scale"]
        layers.append(LayerSpec(w, b, ld["activation"],
                                np.asarray(k) if isinstance(k, list) else k))
    return NetworkSpec(layers)
