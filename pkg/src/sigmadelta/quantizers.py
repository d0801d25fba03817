"""Streaming quantizers: temporal difference/integration, herding, scaled rounding.

All stateful quantizers are single-writer objects over a fixed vector width.
State starts at zero and is reset explicitly at sequence boundaries, never
implicitly.  "Temporal" refers to presentation order only; nothing here
depends on wall-clock time.

One rounding convention is used everywhere: half-away-from-zero.  Keeping a
single global convention is what makes the herded-difference stream agree
bit-for-bit with rounding each frame independently.
"""

import numpy as np

__all__ = [
    "round_half_away",
    "scaled_round",
    "noisy_round_surrogate",
    "TemporalDifference",
    "TemporalIntegrator",
    "Herder",
    "DeltaHerder",
]


def round_half_away(x):
    """Round to nearest integer, ties away from zero (0.5 -> 1, -0.5 -> -1)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _check_scale(k):
    k = np.asarray(k, dtype=np.float64)
    if not np.all(np.isfinite(k)) or np.any(k <= 0):
        raise ValueError("scale k must be positive and finite")
    return k


def scaled_round(x, k):
    """Quantize x to the grid of spacing 1/k: round(x*k)/k.

    Larger k means a finer grid; the per-element error is at most 1/(2k).
    """
    k = _check_scale(k)
    x = np.asarray(x, dtype=np.float64)
    return round_half_away(x * k) / k


def noisy_round_surrogate(x, k, rng):
    """Replace the rounding step with additive uniform noise: (x*k + eps)/k.

    eps ~ U(-1/2, 1/2) per element, so the output stays within 1/(2k) of x
    like real quantization would, but the map is differentiable everywhere.
    Training-only; inference paths never inject noise.
    """
    k = _check_scale(k)
    x = np.asarray(x, dtype=np.float64)
    eps = rng.uniform(-0.5, 0.5, size=x.shape)
    return (x * k + eps) / k


class _Stateful:
    """Shared width bookkeeping for the streaming quantizers."""

    def __init__(self, size):
        if size < 1:
            raise ValueError("size must be >= 1")
        self.size = int(size)

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.size,):
            raise ValueError(f"expected shape ({self.size},), got {x.shape}")
        return x


class TemporalDifference(_Stateful):
    """Emits the change since the previous input; the first input passes through.

    After processing x_1..x_t the retained state equals x_t exactly.
    """

    def __init__(self, size):
        super().__init__(size)
        self.x_last = np.zeros(self.size)

    def step(self, x):
        x = self._check(x)
        y = x - self.x_last
        self.x_last = x.copy()
        return y

    def reset(self):
        self.x_last[:] = 0.0


class TemporalIntegrator(_Stateful):
    """Running sum of everything seen since the last reset."""

    def __init__(self, size):
        super().__init__(size)
        self.y = np.zeros(self.size)

    def step(self, x):
        x = self._check(x)
        self.y += x
        return self.y.copy()

    def reset(self):
        self.y[:] = 0.0


class Herder(_Stateful):
    """Bidirectional sigma-delta modulation in discrete time.

    Input accumulates into a residual potential phi; each step emits the
    nearest integer to phi and subtracts the emission, so |phi| never
    exceeds 1/2 and the running sum of emissions tracks the rounded
    running sum of inputs.
    """

    def __init__(self, size):
        super().__init__(size)
        self.phi = np.zeros(self.size)

    def step(self, x):
        """Emit an integer-valued vector; phi keeps the subthreshold remainder."""
        x = self._check(x)
        self.phi += x
        s = round_half_away(self.phi)
        self.phi -= s
        return s

    def reset(self):
        self.phi[:] = 0.0


class DeltaHerder(_Stateful):
    """Closed form of herding applied to a differenced stream.

    Feeding x_t directly (no differencing) emits round(x_t) - round(x_{t-1})
    with round(x_0) = 0: exactly the events a Herder produces when driven by
    a TemporalDifference of the same stream, computed without either state
    machine.
    """

    def __init__(self, size):
        super().__init__(size)
        self.prev_rounded = np.zeros(self.size)

    def step(self, x):
        x = self._check(x)
        r = round_half_away(x)
        s = r - self.prev_rounded
        self.prev_rounded = r
        return s

    def reset(self):
        self.prev_rounded[:] = 0.0
