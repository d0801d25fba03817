"""Tunes per-layer discretization scales to trade output error against additions.

Scales live in log-space (kappa = log k) so they stay positive and away
from the unstable near-zero region.  Gradients flow through the rounding
step as if it were the identity (straight-through); each scale's
computation pressure comes only from its own layer's event count times
fan-out, while the error term backpropagates through everything above it.

Two surrogates stand in for the non-differentiable rounding during
training: the rounded values themselves with a pass-through backward
("ste"), or additive uniform noise ("noise"), which makes the forward
genuinely differentiable and tends to stabilize aggressive
computation-reduction runs.
"""

from dataclasses import dataclass, field

import numpy as np

from .network import apply_activation
from .quantizers import round_half_away

__all__ = [
    "TradeoffConfig",
    "LogScales",
    "TraceStep",
    "OptimizeResult",
    "DivergenceError",
    "error_loss",
    "comp_loss",
    "scaled_forward",
    "grad_kappa",
    "update_scales",
    "optimize",
]

SURROGATES = ("ste", "noise", "identity")
_PROB_FLOOR = 1e-12


@dataclass
class TradeoffConfig:
    """Knobs for the error/computation tradeoff optimization.

    lam weighs additions against output error; distance=None picks
    KL for softmax outputs and L2 otherwise.
    """

    lam: float = 0.0
    eta: float = 0.01
    epochs: int = 1
    batch_size: int = 32
    surrogate: str = "ste"
    distance: str = None
    unitwise: bool = False
    divergence_factor: float = 10.0
    divergence_patience: int = 100

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.surrogate not in SURROGATES:
            raise ValueError(f"surrogate must be one of {SURROGATES}")
        if self.distance not in (None, "kl", "l2"):
            raise ValueError("distance must be None, 'kl' or 'l2'")

    def resolve_distance(self, net):
        if self.distance is not None:
            return self.distance
        return "kl" if net.layers[-1].activation == "softmax" else "l2"


class LogScales:
    """Per-layer log-scales; k = exp(kappa) is positive by construction.

    Layerwise entries are floats; unitwise entries are vectors over the
    layer's input width.
    """

    def __init__(self, kappas):
        self.kappas = [np.asarray(k, dtype=np.float64) if np.ndim(k) else float(k)
                       for k in kappas]
        for k in self.kappas:
            if not np.all(np.isfinite(k)):
                raise ValueError("kappas must be finite")

    @classmethod
    def zeros(cls, net, unitwise=False):
        if unitwise:
            return cls([np.zeros(l.d_in) for l in net.layers])
        return cls([0.0] * len(net.layers))

    @classmethod
    def from_scales(cls, scales):
        return cls([np.log(k) for k in scales])

    def scales(self):
        return [np.exp(k) if np.ndim(k) else float(np.exp(k)) for k in self.kappas]

    def apply(self, net):
        """Return the network with these scales installed."""
        return net.with_scales(self.scales())

    def copy(self):
        return LogScales([np.array(k) if np.ndim(k) else k for k in self.kappas])

    def __len__(self):
        return len(self.kappas)

    def __repr__(self):
        return f"LogScales(k={[np.round(s, 4) for s in self.scales()]})"


def error_loss(y_round, y_true, distance):
    """Distance between quantized and reference outputs.

    'l2' is the Euclidean norm of the difference; 'kl' is KL(true||round)
    and requires both arguments to be probability vectors (rounded
    probabilities are floored at 1e-12 inside the log).  2-D inputs are
    treated as batches and averaged.
    """
    y_round = np.asarray(y_round, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.float64)
    if y_round.shape != y_true.shape:
        raise ValueError("outputs must have matching shapes")
    if distance == "l2":
        return float(np.mean(np.linalg.norm(
            np.atleast_2d(y_round - y_true), axis=-1)))
    if distance == "kl":
        for name, y in (("y_round", y_round), ("y_true", y_true)):
            if np.any(y < -1e-9) or np.any(
                    np.abs(y.sum(axis=-1) - 1.0) > 1e-6):
                raise ValueError(f"KL requires probability vectors ({name})")
        t = np.atleast_2d(y_true)
        q = np.maximum(np.atleast_2d(y_round), _PROB_FLOOR)
        terms = np.where(t > 0, t * (np.log(np.maximum(t, _PROB_FLOOR)) - np.log(q)), 0.0)
        return float(np.mean(terms.sum(axis=-1)))
    raise ValueError(f"unknown distance {distance!r}")


def comp_loss(activity):
    """Total hidden-layer event additions: sum over layers past the first
    of |s_l|_L1 * fan-out, for the frames the activity recorded."""
    return int((activity.l1[1:] * np.asarray(activity.fanouts[1:])).sum())


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(
            f"input shape {x.shape} does not match network width {net.input_dim}")
    return x, single


def _forward_trace(net, X, kappas, surrogate, rng):
    """Run the scaled quantized forward on a batch, keeping everything the
    backward pass needs.  A and R have one entry per layer input; U one per
    layer pre-activation."""
    if surrogate == "noise" and rng is None:
        raise ValueError("the noise surrogate needs an rng")
    A, Z, R, U = [X], [], [], []
    a = X
    with np.errstate(over="ignore", invalid="ignore"):  # finiteness checked below
        for layer, kappa in zip(net.layers, kappas):
            k = np.exp(kappa)
            z = a * k
            if surrogate == "ste":
                s = round_half_away(z)
            elif surrogate == "noise":
                s = z + rng.uniform(-0.5, 0.5, size=z.shape)
            else:  # identity: quantization disabled
                s = z
            r = s / k
            u = r @ layer.weights + layer.bias
            a = apply_activation(layer.activation, u)
            Z.append(z)
            R.append(r)
            U.append(u)
            A.append(a)
    if not np.all(np.isfinite(A[-1])):
        with np.errstate(over="ignore"):
            scales = [float(np.max(np.exp(np.asarray(k)))) for k in kappas]
        raise ValueError(
            f"non-finite activations in scaled forward (max scales {scales})")
    return A, Z, R, U


def scaled_forward(net, x, kappas, surrogate="ste", rng=None):
    """Output of the quantized network at the given log-scales.

    With surrogate='ste' this is exactly the rounding network's output;
    'noise' replaces rounding with additive uniform noise; 'identity'
    disables quantization entirely.
    """
    kappas = kappas.kappas if isinstance(kappas, LogScales) else kappas
    X, single = _as_batch(net, x)
    A, _, _, _ = _forward_trace(net, X, kappas, surrogate, rng)
    return A[-1][0] if single else A[-1]


def _loss_gradient(distance, last_activation, Y, T, U_last):
    """dL/dU for the final layer, L averaged over the batch."""
    n = Y.shape[0]
    if distance == "kl":
        if last_activation == "softmax":
            # Fused KL/softmax gradient; the 1e-12 floor only guards the
            # loss value, not this exact form.
            return (Y - T) / n
        g = -T / np.maximum(Y, _PROB_FLOOR) / n
        return _through_activation(last_activation, g, Y, U_last)
    # l2: gradient of the norm, zero at exact agreement
    diff = Y - T
    norms = np.linalg.norm(diff, axis=1, keepdims=True)
    g = np.where(norms > 1e-30, diff / np.maximum(norms, 1e-30), 0.0) / n
    return _through_activation(last_activation, g, Y, U_last)


def _through_activation(name, g, a, u):
    if name == "identity":
        return g
    if name == "relu":
        return g * (u > 0)
    # softmax Jacobian, rowwise
    return a * (g - (g * a).sum(axis=1, keepdims=True))


def grad_kappa(net, x, kappas, cfg, rng=None, y_true=None):
    """Gradient of the tradeoff objective with respect to each layer's kappa.

    Returns (grads, info).  The error term backpropagates through all
    higher layers with pass-through rounding; the computation term for a
    scale is its own layer's straight-through |k*a| times fan-out, weighted
    by cfg.lam.  info carries the batch losses and actual (rounded) event
    counts so callers can trace training without a second pass.
    """
    kappas = kappas.kappas if isinstance(kappas, LogScales) else kappas
    if len(kappas) != len(net.layers):
        raise ValueError("need one kappa per layer")
    X, _ = _as_batch(net, x)
    n = X.shape[0]
    if y_true is None:
        a = X
        for layer in net.layers:
            a = apply_activation(layer.activation, a @ layer.weights + layer.bias)
        y_true = a
    T = np.atleast_2d(np.asarray(y_true, dtype=np.float64))
    distance = cfg.resolve_distance(net)

    A, Z, R, U = _forward_trace(net, X, kappas, cfg.surrogate, rng)
    Y = A[-1]
    dims = net.dims

    grads = []
    g = None
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        if i == len(net.layers) - 1:
            dU = _loss_gradient(distance, layer.activation, Y, T, U[i])
        else:
            dU = _through_activation(layer.activation, g, A[i + 1], U[i])
        dR = dU @ layer.weights.T
        err_term = dR * (A[i] - R[i])
        comp_term = cfg.lam * dims[i + 1] * np.abs(Z[i]) / n
        if cfg.unitwise:
            gk = err_term.sum(axis=0) + comp_term.sum(axis=0)
        else:
            gk = float(err_term.sum() + comp_term.sum())
        if not np.all(np.isfinite(gk)):
            raise ValueError(f"non-finite gradient at layer {i}")
        grads.append(gk)
        g = dR
    grads.reverse()

    s_actual = [round_half_away(z) for z in Z]
    l1_mean = [float(np.abs(s).sum() / n) for s in s_actual]
    comp = sum(l1 * dims[i + 1] for i, l1 in enumerate(l1_mean) if i >= 1)
    round_flops = (sum(l1 * dims[i + 1] for i, l1 in enumerate(l1_mean))
                   + sum(dims[1:]))
    info = {
        "error_loss": error_loss(Y, T, distance),
        "comp_loss": comp,
        "round_flops": round_flops,
        "l1_mean": l1_mean,
    }
    return grads, info


def update_scales(kappas, grads, eta):
    """Plain gradient step in log-space: kappa <- kappa - eta * grad."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    ks = kappas.kappas if isinstance(kappas, LogScales) else kappas
    if len(ks) != len(grads):
        raise ValueError("one gradient per layer required")
    new = [k - eta * g for k, g in zip(ks, grads)]
    for i, k in enumerate(new):
        if not np.all(np.isfinite(k)):
            raise ValueError(f"non-finite kappa at layer {i} after update")
    return LogScales(new)


@dataclass
class TraceStep:
    step: int
    epoch: int
    error_loss: float
    comp_loss: float
    round_flops: float
    scales: list
    diverging: bool = False


@dataclass
class OptimizeResult:
    scales: LogScales
    trace: list = field(default_factory=list)

    @property
    def steps(self):
        return len(self.trace)


class DivergenceError(RuntimeError):
    """Raised when the error loss stays blown up for too many steps."""

    def __init__(self, step, trace):
        super().__init__(
            f"error loss exceeded its divergence bound for "
            f"{trace[-1].step - step + 1} consecutive steps (at step {trace[-1].step})")
        self.step = step
        self.trace = trace


def optimize(net, frames, cfg, rng, init=None):
    """Minibatch-optimize the layer scales on a set of input frames.

    The reference output for every sample comes from the original dense
    network; scales start at k=1 unless init is given.  Returns the final
    scales and a per-step trace of (error, computation).  Raises
    DivergenceError if the error loss exceeds divergence_factor times its
    initial value for divergence_patience consecutive steps.
    """
    X = np.asarray(getattr(frames, "frames", frames), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("frames must be a nonempty (n, d) array")
    kappas = (init.copy() if init is not None
              else LogScales.zeros(net, unitwise=cfg.unitwise))

    a = X
    for layer in net.layers:
        a = apply_activation(layer.activation, a @ layer.weights + layer.bias)
    y_true = a

    trace = []
    step = 0
    initial_error = None
    streak_start = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(X.shape[0])
        for lo in range(0, X.shape[0], cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            grads, info = grad_kappa(net, X[idx], kappas, cfg, rng=rng,
                                     y_true=y_true[idx])
            kappas = update_scales(kappas, grads, cfg.eta)
            if initial_error is None:
                initial_error = max(info["error_loss"], 1e-30)
            diverging = info["error_loss"] > cfg.divergence_factor * initial_error
            trace.append(TraceStep(
                step=step, epoch=epoch,
                error_loss=info["error_loss"],
                comp_loss=info["comp_loss"],
                round_flops=info["round_flops"],
                scales=[float(np.mean(np.exp(np.asarray(k)))) for k in kappas.kappas],
                diverging=diverging))
            if diverging:
                if streak_start is None:
                    streak_start = step
                if step - streak_start + 1 >= cfg.divergence_patience:
                    raise DivergenceError(streak_start, trace)
            else:
                streak_start = None
            step += 1
    return OptimizeResult(scales=kappas, trace=trace)
