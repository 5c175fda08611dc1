"""Split predictive uncertainty into what the data causes and what the model causes.

Trains a small classifier on overlapping blobs, then runs stochastic forward
passes to estimate both kinds of uncertainty.  Points near the class boundary
should carry high aleatoric uncertainty (the data is genuinely ambiguous);
points far from the training data should carry high epistemic uncertainty
(the model has never seen anything like them).
"""

import numpy as np

from dropreg import (LayerSpec, Network, OptimizerConfig, RngStream, SplitSpec,
                     decompose, fixed_dropout_train, mc_predict, split,
                     synth_blobs)

root = RngStream(7)
blobs = synth_blobs(200, 2, 0.6, 7)
train, val, _ = split(blobs, SplitSpec(300, 60, 40, 7))

specs = [LayerSpec(2, 24, "relu"),
         LayerSpec(24, 24, "relu", dropout_enabled=True),
         LayerSpec(24, 2, "softmax", dropout_enabled=True)]
net = Network(specs, root.child("net"))
opt = OptimizerConfig(learning_rate=0.1, batch_size=50, epochs=40)
out = fixed_dropout_train(net, train, val, 0.2, opt, root.child("train"))

# three probe points: deep inside a class, on the boundary, far away
probes = np.array([
    [0.85, 0.5],   # well inside class 0's blob
    [0.5, 0.5],    # midway between the two centers
    [0.5, 0.99],   # outside anything seen in training
])
mc = mc_predict(out.network, probes, 0.2, 200, root.child("eval"))
report = decompose(mc)

print("point            p(class 0)  predictive  aleatoric  epistemic")
names = ["inside blob", "on boundary", "far away"]
for name, probs, pred, alea, epi in zip(names, mc.mean_probs, report.predictive,
                                        report.aleatoric, report.epistemic):
    print(f"{name:<15}  {probs[0]:>10.3f}  {pred:>10.4f}  {alea:>9.4f}  {epi:>9.4f}")

print()
print("predictive = aleatoric + epistemic, in nats; max for 2 classes is "
      f"ln 2 = {np.log(2):.4f}")
print("the boundary point is data-ambiguous; the far point is model-ambiguous")
