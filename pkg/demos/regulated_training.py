"""Watch the controller raise the dropout rate as the model starts to overfit.

The train/validation risk gap is the controller's error signal: while the gap
is near zero the rate stays near zero, and once the model begins memorizing
the training set the gap grows and the controller pushes the rate up.
"""

from dropreg import (LayerSpec, Network, OptimizerConfig, PIController,
                     RngStream, SplitSpec, regulated_train, split, synth_blobs)

root = RngStream(3)
blobs = synth_blobs(450, 2, 0.9, 3)
train, val, _ = split(blobs, SplitSpec(400, 100, 400, 3))

specs = [LayerSpec(2, 64, "relu"),
         LayerSpec(64, 64, "relu", dropout_enabled=True),
         LayerSpec(64, 2, "softmax", dropout_enabled=True)]
net = Network(specs, root.child("net"))
opt = OptimizerConfig(learning_rate=0.1, batch_size=100, epochs=60)
controller = PIController(kp=10.0, ti=10000.0)

out = regulated_train(net, train, val, controller, opt, root.child("train"))

print("epoch  train_risk  val_risk     gap       u       p")
for r in out.trace.records:
    marker = "  <- best val risk" if r.epoch == out.trace.best_epoch else ""
    if r.epoch % 5 == 0 or marker:
        print(f"{r.epoch:>5}  {r.train_risk:>10.4f}  {r.val_risk:>8.4f}"
              f"  {r.gap:>+7.4f}  {r.u:>6.3f}  {r.p:>6.3f}{marker}")

print()
print(f"best epoch {out.trace.best_epoch}; "
      f"dropout rate carried to evaluation: {out.dropout_rate:.4f}")
