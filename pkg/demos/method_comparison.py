"""Compare the three training methods on one overfit-prone task.

  deterministic  no dropout at all, single forward pass at evaluation
  mc_fixed       constant dropout rate 0.5, stochastic evaluation
  regulation     controller-adapted rate, stochastic evaluation

The same seeds drive all three, so differences come from the method alone.
"""

import numpy as np

from dropreg import (LayerSpec, Network, OptimizerConfig, PIController,
                     RngStream, SplitSpec, accuracy, classify_counts, decompose,
                     fixed_dropout_train, mc_predict, pavpu, regulated_train,
                     split, synth_blobs)

SEEDS = range(5)


def build(seed):
    root = RngStream(seed)
    blobs = synth_blobs(450, 2, 0.9, seed)
    train, val, test = split(blobs, SplitSpec(400, 100, 400, seed))
    specs = [LayerSpec(2, 64, "relu"),
             LayerSpec(64, 64, "relu", dropout_enabled=True),
             LayerSpec(64, 2, "softmax", dropout_enabled=True)]
    return root, Network(specs, root.child("net")), train, val, test


rows = {"deterministic": [], "mc_fixed": [], "regulation": []}
for seed in SEEDS:
    for method in rows:
        root, net, train, val, test = build(seed)
        opt = OptimizerConfig(learning_rate=0.1, batch_size=100, epochs=60)
        if method == "deterministic":
            out = fixed_dropout_train(net, train, val, 0.0, opt, root.child("train"))
            rate, k = 0.0, 1
        elif method == "mc_fixed":
            out = fixed_dropout_train(net, train, val, 0.5, opt, root.child("train"))
            rate, k = 0.5, 50
        else:
            out = regulated_train(net, train, val, PIController(kp=10.0, ti=10000.0),
                                  opt, root.child("train"))
            rate, k = out.dropout_rate, 50
        mc = mc_predict(out.network, test.features, rate, k, root.child("eval"))
        acc = accuracy(mc.mean_probs, test.labels)
        unc = decompose(mc).predictive
        counts = classify_counts(mc.mean_probs, test.labels, unc, float(np.mean(unc)))
        best_val = out.trace.records[out.trace.best_epoch - 1].val_risk
        rows[method].append((best_val, acc, pavpu(counts)))

print(f"{'method':<14}  best_val_risk  test_accuracy  pavpu_at_mean")
for method, triples in rows.items():
    m = np.array(triples).mean(axis=0)
    print(f"{method:<14}  {m[0]:>13.4f}  {m[1]:>13.4f}  {m[2]:>13.4f}")
print(f"\n(means over {len(list(SEEDS))} seeds)")
