#!/usr/bin/env python3
"""Walk through the streaming quantizers, one property at a time.

Temporal difference and integration invert each other; herding turns a
real-valued stream into integer events whose running sum tracks the rounded
running sum of the input; and herding a *differenced* stream collapses to a
two-line closed form.
"""

import numpy as np

from sigmadelta import (DeltaHerder, Herder, TemporalDifference,
                        TemporalIntegrator, round_half_away)

rng = np.random.default_rng(0)

print("=== temporal difference <-> temporal integration ===")
td, ti = TemporalDifference(1), TemporalIntegrator(1)
stream = [1.0, 4.0, 2.0, 2.0, -1.0]
deltas = [float(td.step([x])[0]) for x in stream]
recon = []
for d in deltas:
    recon.append(float(ti.step([d])[0]))
print(f"stream: {stream}")
print(f"deltas: {deltas}")
print(f"integrated back: {recon}")
assert recon == stream

print()
print("=== herding: integer events from a real stream ===")
h = Herder(1)
xs = [0.6, 0.6, 0.3, -1.4, 0.25, 0.25]
print(f"{'input':>8} {'emitted':>8} {'residual':>9}")
for x in xs:
    s = h.step([x])
    print(f"{x:8.2f} {s[0]:8.0f} {h.phi[0]:9.2f}")

h = Herder(4)
total_in = np.zeros(4)
total_out = np.zeros(4)
for _ in range(2000):
    x = rng.uniform(-3, 3, 4)
    total_in += x
    total_out += h.step(x)
    assert np.max(np.abs(h.phi)) <= 0.5
print(f"after 2000 steps: sum of emissions {total_out}")
print(f"rounded sum of inputs             {round_half_away(total_in)}")
print("residual never left [-1/2, 1/2]")

print()
print("=== herding a differenced stream == differencing a rounded stream ===")
d = 8
td, herd, closed = TemporalDifference(d), Herder(d), DeltaHerder(d)
mismatches = 0
x = np.zeros(d)
for _ in range(5000):
    x = 0.8 * x + rng.standard_normal(d)  # smooth-ish stream
    via_state_machines = herd.step(td.step(x))
    via_closed_form = closed.step(x)
    if not np.array_equal(via_state_machines, via_closed_form):
        mismatches += 1
print(f"5000 frames, {mismatches} mismatches (expected 0)")
assert mismatches == 0
