#!/usr/bin/env python3
"""The reverse-mode tape in five minutes.

Every op records itself while a Tape is active; backward() replays the
records and hands back gradients for trainable leaves. Central finite
differences provide an independent check.
"""

import numpy as np

from pixeltower import autodiff as ad
from pixeltower.autodiff import Tape, Tensor, backward, grad_of

# d/dx (x * x) at x = 3.
x = Tensor(np.asarray(3.0), trainable=True)
with Tape() as tape:
    y = ad.mul(x, x)
grads = backward(tape, y)
print("d/dx x^2 at 3 =", grad_of(grads, x))  # 6.0

# A small linear + softmax + cross-entropy program.
rng = np.random.default_rng(0)
w = Tensor(rng.standard_normal((4, 3)) * 0.5, trainable=True)
b = Tensor(np.zeros(3), trainable=True)
inputs = Tensor(rng.standard_normal((8, 4)))
targets = rng.integers(0, 3, size=8)

def loss_fn():
    logits = ad.add(ad.matmul(inputs, w), b)
    return ad.tmean(ad.cross_entropy_rows(logits, targets))

with Tape() as tape:
    loss = loss_fn()
grads = backward(tape, loss)
print("loss:", float(loss.data))
print("grad w norm:", np.linalg.norm(grad_of(grads, w)))

# Independent check: analytic gradients vs central differences.
err = ad.check_gradients(loss_fn, {"w": w, "b": b}, eps=1e-5)
print(f"max relative error vs finite differences: {err:.2e}")
assert err < 1e-6
