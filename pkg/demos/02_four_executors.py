#!/usr/bin/env python3
"""Run the same network four ways and compare outputs and operation counts.

The temporal-difference executor reproduces the dense pass exactly; the
sigma-delta executor reproduces the rounding pass; and on a temporally
redundant stream the sigma-delta executor does a fraction of the work.
"""

import numpy as np

from sigmadelta import (OpLedger, SigmaDeltaRuntime, TemporalDiffRuntime,
                        forward_original, forward_rounding,
                        forward_sigma_delta, forward_temporal_diff,
                        gen_random_network, gen_random_stream)

rng = np.random.default_rng(7)
net = gen_random_network(rng, dims=(32, 48, 48, 24), factors=(1.0, 1.0, 1.0))
net = net.with_scales([2.0, 1.0, 1.0])
frames = gen_random_stream(rng, 300, 32, smoothness=0.9).frames

leds = {name: OpLedger() for name in ("original", "rounding", "sigma-delta")}
td_rt, sd_rt = TemporalDiffRuntime(net), SigmaDeltaRuntime(net)

dev_td, dev_sd = 0.0, 0.0
for x in frames:
    y0 = forward_original(net, x, ledger=leds["original"])
    yt = forward_temporal_diff(net, td_rt, x)
    yr = forward_rounding(net, x, ledger=leds["rounding"])
    ys = forward_sigma_delta(net, sd_rt, x, ledger=leds["sigma-delta"])
    dev_td = max(dev_td, np.max(np.abs(yt - y0)))
    dev_sd = max(dev_sd, np.max(np.abs(ys - yr)))

print(f"network {net.dims}, {len(frames)} frames, smoothness 0.9\n")
print(f"temporal-diff vs original, worst frame:  {dev_td:.2e}  (exact function)")
print(f"sigma-delta  vs rounding, worst frame:   {dev_sd:.2e}  (exact function)\n")

print(f"{'executor':>12} {'adds':>12} {'mults':>12} {'ops/frame':>10}")
for name, led in leds.items():
    print(f"{name:>12} {led.total_adds:>12,} {led.total_mults:>12,} "
          f"{led.total_ops / len(frames):>10,.0f}")

print()
print("=== an unchanged input costs nothing ===")
led = OpLedger()
x = frames[-1]
forward_sigma_delta(net, sd_rt, x, ledger=led)  # same frame again
print(f"repeat of the last frame: {led.total_ops} ops")

print()
print("=== resync clears accumulated float drift ===")
y = sd_rt.resync(x)
print(f"after resync, output still matches rounding: "
      f"{np.max(np.abs(y - forward_rounding(net, x))):.2e}")
