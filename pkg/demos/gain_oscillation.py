"""Push the controller gain too high and watch the dropout rate oscillate.

With scarce training data the risk gap responds sharply to rate changes.  A
modest gain settles; an aggressive gain overshoots, kills the gap, drops the
rate to zero, lets the model overfit again, and repeats.  Run with --plot to
save the two rate traces as a PNG.
"""

import sys

from dropreg import (LayerSpec, Network, OptimizerConfig, PIController,
                     RngStream, SplitSpec, late_p_range, regulated_train, split,
                     synth_blobs, truncate)


def run_with_gain(kp):
    root = RngStream(0)
    blobs = synth_blobs(450, 2, 0.9, 0)
    train, val, _ = split(blobs, SplitSpec(400, 100, 400, 0))
    train = truncate(train, 0.2)  # 80 rows: starve the model so it overfits fast
    specs = [LayerSpec(2, 64, "relu"),
             LayerSpec(64, 64, "relu", dropout_enabled=True),
             LayerSpec(64, 2, "softmax", dropout_enabled=True)]
    net = Network(specs, root.child("net"))
    opt = OptimizerConfig(learning_rate=0.1, batch_size=20, epochs=60)
    out = regulated_train(net, train, val, PIController(kp=kp, ti=10000.0), opt,
                          root.child("train"))
    return out.trace


small = run_with_gain(0.5)
large = run_with_gain(40.0)

print("epoch   p (gain 0.5)   p (gain 40)")
for a, b in zip(small.records, large.records):
    if a.epoch % 3 == 0:
        bar = "#" * int(b.p * 30)
        print(f"{a.epoch:>5}   {a.p:>10.3f}   {b.p:>10.3f}  {bar}")

print()
print(f"late-window rate range, gain 0.5: {late_p_range(small):.3f}")
print(f"late-window rate range, gain 40:  {late_p_range(large):.3f}")

if "--plot" in sys.argv:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [r.epoch for r in small.records]
    plt.figure(figsize=(8, 4))
    plt.plot(epochs, [r.p for r in small.records], label="gain 0.5")
    plt.plot(epochs, [r.p for r in large.records], label="gain 40")
    plt.xlabel("epoch")
    plt.ylabel("dropout rate")
    plt.title("controller gain vs rate stability (20% of training data)")
    plt.legend()
    plt.tight_layout()
    plt.savefig("gain_oscillation.png", dpi=120)
    print("saved gain_oscillation.png")
