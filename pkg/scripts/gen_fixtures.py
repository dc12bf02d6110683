"""Generate the committed fixture models under fixtures/.

Trains two toy networks with plain numpy gradient descent, regressing the
outputs of a fixed randomly initialized teacher of the same architecture on
standard-normal inputs. That produces weight tensors with realistic magnitude
spread without pulling in a training framework. Each fixture ships with a
white-noise calibration set.

Run from the repository root after an editable install:

    python scripts/gen_fixtures.py

The outputs are deterministic for the pinned seeds; fixtures are committed,
so this script only needs to run when the fixture definitions change.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from rdprune import (
    LayerSpec,
    ModelGraph,
    forward,
    gen_white_noise_calib,
    prune_layer,
    save_calib,
    save_model,
    sq_error,
)

MLP_DIMS = [16, 32, 32, 32, 32, 10]
MLP_TRAIN_SEED = 101
MLP_CALIB_SEED = 7

CNN_TRAIN_SEED = 202
CNN_CALIB_SEED = 11

CALIB_COUNT = 64


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def relu(x):
    return np.maximum(x, 0.0)


# ---------------------------------------------------------------------------
# MLP


def init_mlp(rng):
    ws, bs = [], []
    for i, (fan_in, fan_out) in enumerate(zip(MLP_DIMS, MLP_DIMS[1:])):
        scale = np.sqrt(2.0 / fan_in) if i < len(MLP_DIMS) - 2 else np.sqrt(1.0 / fan_in)
        ws.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return ws, bs


def mlp_forward(ws, bs, x):
    """Returns output plus the per-layer inputs and pre-activations."""
    acts = [x]
    pre = []
    h = x
    for i, (w, b) in enumerate(zip(ws, bs)):
        z = h @ w.T + b
        pre.append(z)
        h = relu(z) if i < len(ws) - 1 else z
        acts.append(h)
    return h, acts, pre


def train_mlp(seed):
    rng = _rng(seed)
    ws, bs = init_mlp(rng)
    tw, tb = init_mlp(rng)  # teacher stays fixed
    vw = [np.zeros_like(w) for w in ws]
    vb = [np.zeros_like(b) for b in bs]
    lr, momentum, batch = 0.05, 0.9, 64
    loss = None
    for _ in range(400):
        x = rng.normal(size=(batch, MLP_DIMS[0]))
        target, _, _ = mlp_forward(tw, tb, x)
        y, acts, pre = mlp_forward(ws, bs, x)
        dy = (y - target) / batch
        loss = 0.5 * float(np.sum((y - target) ** 2)) / batch
        for i in range(len(ws) - 1, -1, -1):
            dw = dy.T @ acts[i]
            db = dy.sum(axis=0)
            if i > 0:
                dy = (dy @ ws[i]) * (pre[i - 1] > 0)
            vw[i] = momentum * vw[i] - lr * dw
            vb[i] = momentum * vb[i] - lr * db
            ws[i] += vw[i]
            bs[i] += vb[i]
    return ws, bs, loss


def mlp_graph(ws, bs):
    layers = []
    for i, (w, b) in enumerate(zip(ws, bs)):
        layers.append(LayerSpec(kind="dense", weight=w, bias=b))
        if i < len(ws) - 1:
            layers.append(LayerSpec(kind="relu"))
    return ModelGraph(name="mlp_toy", input_shape=(MLP_DIMS[0],), layers=layers)


# ---------------------------------------------------------------------------
# CNN: conv(1->8,3x3,pad1) pool2 conv(8->16,3x3,pad1) pool2 dense(64->32) dense(32->10)


def conv_forward(x, w, b):
    """Stride-1 pad-1 3x3 convolution on a batch; also returns im2col patches."""
    n, c, h, wd = x.shape
    o = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (n, c, h, wd, 3, 3)
    patches = win.transpose(0, 2, 3, 1, 4, 5).reshape(n, h * wd, c * 9)
    out = patches @ w.reshape(o, -1).T + b
    return out.transpose(0, 2, 1).reshape(n, o, h, wd), patches


def conv_backward(dout, patches, w, x_shape):
    n, c, h, wd = x_shape
    o = w.shape[0]
    dm = dout.reshape(n, o, h * wd).transpose(0, 2, 1)
    dw = np.einsum("bpo,bpk->ok", dm, patches).reshape(w.shape)
    db = dout.sum(axis=(0, 2, 3))
    dpatch = (dm @ w.reshape(o, -1)).reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, wd + 2))
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di:di + h, dj:dj + wd] += dpatch[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:h + 1, 1:wd + 1], dw, db


def pool_forward(x):
    n, c, h, wd = x.shape
    r = x.reshape(n, c, h // 2, 2, wd // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    r = r.reshape(n, c, h // 2, wd // 2, 4)
    idx = r.argmax(axis=-1)
    out = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]
    return out, idx


def pool_backward(dout, idx, x_shape):
    n, c, h, wd = x_shape
    dr = np.zeros((n, c, h // 2, wd // 2, 4))
    np.put_along_axis(dr, idx[..., None], dout[..., None], axis=-1)
    dr = dr.reshape(n, c, h // 2, wd // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dr.reshape(n, c, h, wd)


def init_cnn(rng):
    p = {
        "w1": rng.normal(0.0, np.sqrt(2.0 / 9), size=(8, 1, 3, 3)),
        "b1": np.zeros(8),
        "w2": rng.normal(0.0, np.sqrt(2.0 / 72), size=(16, 8, 3, 3)),
        "b2": np.zeros(16),
        "w3": rng.normal(0.0, np.sqrt(2.0 / 64), size=(32, 64)),
        "b3": np.zeros(32),
        "w4": rng.normal(0.0, np.sqrt(1.0 / 32), size=(10, 32)),
        "b4": np.zeros(10),
    }
    return p


def cnn_forward(p, x):
    s = {"x": x}
    s["z1"], s["p1"] = conv_forward(x, p["w1"], p["b1"])
    s["a1"] = relu(s["z1"])
    s["m1"], s["i1"] = pool_forward(s["a1"])
    s["z2"], s["p2"] = conv_forward(s["m1"], p["w2"], p["b2"])
    s["a2"] = relu(s["z2"])
    s["m2"], s["i2"] = pool_forward(s["a2"])
    s["f"] = s["m2"].reshape(x.shape[0], -1)
    s["z3"] = s["f"] @ p["w3"].T + p["b3"]
    s["a3"] = relu(s["z3"])
    s["y"] = s["a3"] @ p["w4"].T + p["b4"]
    return s


def cnn_backward(p, s, dy):
    g = {}
    g["w4"] = dy.T @ s["a3"]
    g["b4"] = dy.sum(axis=0)
    dz3 = (dy @ p["w4"]) * (s["z3"] > 0)
    g["w3"] = dz3.T @ s["f"]
    g["b3"] = dz3.sum(axis=0)
    dm2 = (dz3 @ p["w3"]).reshape(s["m2"].shape)
    dz2 = pool_backward(dm2, s["i2"], s["a2"].shape) * (s["z2"] > 0)
    dm1, g["w2"], g["b2"] = conv_backward(dz2, s["p2"], p["w2"], s["m1"].shape)
    dz1 = pool_backward(dm1, s["i1"], s["a1"].shape) * (s["z1"] > 0)
    _, g["w1"], g["b1"] = conv_backward(dz1, s["p1"], p["w1"], s["x"].shape)
    return g


def clip_grads(g, max_norm=5.0):
    # conv gradients blow up on this task without clipping; an exploded run
    # leaves a dead relu and layers whose weights no longer affect the output
    total = np.sqrt(sum(float(np.sum(a * a)) for a in g.values()))
    if total > max_norm:
        scale = max_norm / total
        for k in g:
            g[k] *= scale
    return g


def train_cnn(seed):
    rng = _rng(seed)
    p = init_cnn(rng)
    teacher = init_cnn(rng)
    v = {k: np.zeros_like(a) for k, a in p.items()}
    lr, momentum, batch = 0.005, 0.9, 32
    loss = None
    for _ in range(400):
        x = rng.normal(size=(batch, 1, 8, 8))
        target = cnn_forward(teacher, x)["y"]
        s = cnn_forward(p, x)
        dy = (s["y"] - target) / batch
        loss = 0.5 * float(np.sum((s["y"] - target) ** 2)) / batch
        g = clip_grads(cnn_backward(p, s, dy))
        for k in p:
            v[k] = momentum * v[k] - lr * g[k]
            p[k] += v[k]
    return p, loss


def cnn_graph(p):
    layers = [
        LayerSpec(kind="conv2d", weight=p["w1"], bias=p["b1"],
                  attrs={"stride": 1, "padding": 1}),
        LayerSpec(kind="relu"),
        LayerSpec(kind="maxpool2d", attrs={"kernel": 2, "stride": 2}),
        LayerSpec(kind="conv2d", weight=p["w2"], bias=p["b2"],
                  attrs={"stride": 1, "padding": 1}),
        LayerSpec(kind="relu"),
        LayerSpec(kind="maxpool2d", attrs={"kernel": 2, "stride": 2}),
        LayerSpec(kind="flatten"),
        LayerSpec(kind="dense", weight=p["w3"], bias=p["b3"]),
        LayerSpec(kind="relu"),
        LayerSpec(kind="dense", weight=p["w4"], bias=p["b4"]),
    ]
    return ModelGraph(name="cnn_toy", input_shape=(1, 8, 8), layers=layers)


def check_layers_matter(model, calib, samples=8):
    """Every prunable layer, fully zeroed, must change the output somewhere.

    Guards against degenerate training runs (a dead relu makes everything
    upstream of it invisible, which would make rate-distortion curves flat).
    """
    xs = list(calib)[:samples]
    refs = [forward(model, x) for x in xs]
    for i in model.prunable_indices():
        stripped = prune_layer(model, i, int(model.layers[i].weight.size))
        d = sum(sq_error(refs[k], forward(stripped, xs[k])) for k in range(len(xs)))
        if d <= 0.0:
            raise AssertionError(f"{model.name}: zeroing layer {i} does not move the output")


def check_engine_match(model, reference_fn, calib, tol=1e-4):
    """The inference engine must reproduce the training-time forward."""
    worst = 0.0
    for x in calib:
        got = forward(model, x)
        want = reference_fn(x)
        worst = max(worst, float(np.max(np.abs(got - want.astype(np.float32)))))
    if worst > tol:
        raise AssertionError(f"{model.name}: engine disagrees with training forward ({worst})")
    return worst


def main():
    ws, bs, mlp_loss = train_mlp(MLP_TRAIN_SEED)
    mlp = mlp_graph(ws, bs)
    mlp_calib = gen_white_noise_calib((MLP_DIMS[0],), count=CALIB_COUNT, seed=MLP_CALIB_SEED)
    diff = check_engine_match(
        mlp, lambda x: mlp_forward(ws, bs, x[None].astype(np.float64))[0][0], mlp_calib)
    check_layers_matter(mlp, mlp_calib)
    save_model(mlp, "fixtures/mlp_toy")
    save_calib(mlp_calib, "fixtures/mlp_toy/calib.bin")
    print(f"mlp_toy: loss {mlp_loss:.5f}, prunable {mlp.total_prunable}, engine diff {diff:.2e}")

    p, cnn_loss = train_cnn(CNN_TRAIN_SEED)
    cnn = cnn_graph(p)
    cnn_calib = gen_white_noise_calib((1, 8, 8), count=CALIB_COUNT, seed=CNN_CALIB_SEED)
    diff = check_engine_match(
        cnn, lambda x: cnn_forward(p, x[None].astype(np.float64))["y"][0], cnn_calib)
    check_layers_matter(cnn, cnn_calib)
    save_model(cnn, "fixtures/cnn_toy")
    save_calib(cnn_calib, "fixtures/cnn_toy/calib.bin")
    print(f"cnn_toy: loss {cnn_loss:.5f}, prunable {cnn.total_prunable}, engine diff {diff:.2e}")


if __name__ == "__main__":
    main()
