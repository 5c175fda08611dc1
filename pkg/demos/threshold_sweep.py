"""Trace PAvPU across the whole uncertainty-threshold range.

PAvPU rewards predictions that are accurate when certain and inaccurate when
uncertain.  At the lowest threshold nothing counts as certain, so the score
collapses to the error rate; past the highest uncertainty everything counts
as certain and the score collapses to plain accuracy.  The interesting part
is the middle, where a well-calibrated model peaks above both endpoints.
"""

import sys

import numpy as np

from dropreg import (LayerSpec, Network, OptimizerConfig, RngStream, SplitSpec,
                     accuracy, decompose, fixed_dropout_train, mc_predict,
                     mean_uncertainty_threshold, split, synth_blobs,
                     threshold_sweep)

root = RngStream(12)
blobs = synth_blobs(450, 2, 0.9, 12)
train, val, test = split(blobs, SplitSpec(400, 100, 400, 12))
specs = [LayerSpec(2, 64, "relu"),
         LayerSpec(64, 64, "relu", dropout_enabled=True),
         LayerSpec(64, 2, "softmax", dropout_enabled=True)]
net = Network(specs, root.child("net"))
opt = OptimizerConfig(learning_rate=0.1, batch_size=100, epochs=60)
out = fixed_dropout_train(net, train, val, 0.3, opt, root.child("train"))

mc = mc_predict(out.network, test.features, 0.3, 50, root.child("eval"))
unc = decompose(mc).predictive
sweep = threshold_sweep(mc.mean_probs, test.labels, unc, 41)

acc = accuracy(mc.mean_probs, test.labels)
mean_thr = mean_uncertainty_threshold(unc)
print(f"test accuracy {acc:.4f}; error rate {1 - acc:.4f}; "
      f"mean uncertainty {mean_thr:.4f}\n")
print("    t   threshold   pavpu")
for t, thr, value in sweep.points[::4]:
    bar = "#" * int(value * 40)
    near = "  <- mean" if abs(thr - mean_thr) < (sweep.u_max - sweep.u_min) / 20 else ""
    print(f"{t:>5.2f}  {thr:>9.4f}  {value:>6.3f}  {bar}{near}")

if "--plot" in sys.argv:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ts = [p[1] for p in sweep.points]
    vs = [p[2] for p in sweep.points]
    plt.figure(figsize=(7, 4))
    plt.plot(ts, vs)
    plt.axhline(acc, ls="--", c="gray", label=f"accuracy {acc:.3f}")
    plt.axhline(1 - acc, ls=":", c="gray", label=f"error rate {1 - acc:.3f}")
    plt.axvline(mean_thr, c="tab:orange", label="mean uncertainty")
    plt.xlabel("uncertainty threshold (nats)")
    plt.ylabel("PAvPU")
    plt.legend()
    plt.tight_layout()
    plt.savefig("threshold_sweep.png", dpi=120)
    print("\nsaved threshold_sweep.png")
