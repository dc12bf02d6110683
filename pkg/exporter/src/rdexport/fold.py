"""Batchnorm folding.

In eval mode bn(x) = gamma * (x - mean) / sqrt(var + eps) + beta is an
affine map per channel, so it folds into the preceding conv/dense weights:

    scale = gamma / sqrt(var + eps)
    w' = w * scale   (per output channel)
    b' = (b - mean) * scale + beta

All arithmetic is float64, cast to float32 at the end, the same precision
the blob stores.
"""

import numpy as np


def fold_batchnorm(weight, bias, bn):
    """Return (w', b') float32 with ``bn`` (a torch BatchNorm module) folded in."""
    w = np.asarray(weight.detach().numpy(), dtype=np.float64)
    b = (np.zeros(w.shape[0], dtype=np.float64) if bias is None
         else np.asarray(bias.detach().numpy(), dtype=np.float64))
    gamma = np.asarray(bn.weight.detach().numpy(), dtype=np.float64)
    beta = np.asarray(bn.bias.detach().numpy(), dtype=np.float64)
    mean = np.asarray(bn.running_mean.numpy(), dtype=np.float64)
    var = np.asarray(bn.running_var.numpy(), dtype=np.float64)
    if gamma.shape[0] != w.shape[0]:
        raise ValueError(
            f"batchnorm over {gamma.shape[0]} channels cannot fold into a "
            f"layer with {w.shape[0]} outputs"
        )
    scale = gamma / np.sqrt(var + bn.eps)
    w_f = w * scale.reshape((-1,) + (1,) * (w.ndim - 1))
    b_f = (b - mean) * scale + beta
    return w_f.astype(np.float32), b_f.astype(np.float32)
