"""Check the hand-written backward passes against central differences.

    python demos/gradient_check.py
"""

import numpy as np

from eppnet import autodiff as ad

rng = np.random.default_rng(0)

x = rng.normal(size=(2, 3, 6, 6))
w = rng.normal(size=(4, 3, 3, 3))
print("conv2d wrt input ", ad.grad_check(lambda t: ad.sum_all(ad.conv2d(t, w, pad=1)), x))
print("conv2d wrt kernel", ad.grad_check(lambda t: ad.sum_all(ad.conv2d(x, t, pad=1)), w))

# a small classifier head: linear then cross-entropy
feats = rng.normal(size=(5, 8))
labels = rng.integers(0, 3, size=5)
W = rng.normal(size=(8, 3))
print("matmul + CE      ", ad.grad_check(lambda t: ad.cross_entropy(ad.matmul(feats, t), labels), W))

# a deliberately broken op is caught
def broken(t):
    out = ad.mul(t, t)
    out._backward = lambda g: t._accumulate(g * t.data)  # should be 2 t g
    return ad.sum_all(out)

print("wrong gradient   ", ad.grad_check(broken, rng.normal(size=4)))
