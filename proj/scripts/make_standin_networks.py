"""Train the stand-in controller networks shipped in data/networks.

The original benchmark weights are not public. These networks have the same
architectures and imitate simple expert controllers:

* vehicle: 4x100x100x2 ReLU, steers toward the origin while being pushed away
  from a circular obstacle at (4, 4) of radius 2;
* double integrator: 2x10x5x1 ReLU, a saturated LQR law.

Input normalisation is folded into the first layer so the JSON files map raw
states to raw controls.
"""

import argparse
import json
import math
from pathlib import Path

import numpy as np
import scipy.linalg
import torch
from torch import nn


def vehicle_expert(x: np.ndarray) -> np.ndarray:
    px, py, phi, v = x.T
    p = np.stack([px, py], axis=1)
    dist = np.linalg.norm(p, axis=1, keepdims=True) + 1e-6
    goal = -p / dist
    rel = p - np.array([4.0, 4.0])
    rdist = np.linalg.norm(rel, axis=1, keepdims=True) + 1e-6
    push = np.clip(3.0 - rdist, 0.0, None) * rel / rdist
    g = goal + 1.5 * push
    heading = np.arctan2(g[:, 1], g[:, 0])
    err = np.arctan2(np.sin(heading - phi), np.cos(heading - phi))
    u2 = np.clip(1.2 * err, -0.6, 0.6)
    v_des = np.minimum(2.0, 0.5 * dist[:, 0])
    u1 = np.clip(2.0 * (v_des - v), -2.0, 2.0)
    return np.stack([u1, u2], axis=1)


def di_expert(x: np.ndarray) -> np.ndarray:
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    b = np.array([[0.5], [1.0]])
    q = np.eye(2)
    r = np.array([[1.0]])
    p = scipy.linalg.solve_discrete_are(a, b, q, r)
    k = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
    return np.clip(-(x @ k.T), -1.0, 1.0)


def make_mlp(sizes):
    layers = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i + 2 < len(sizes):
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


def train(expert, low, high, sizes, steps, seed):
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    centre = 0.5 * (low + high)
    scale = 0.5 * (high - low)
    x = rng.uniform(low, high, size=(200_000, len(low)))
    y = expert(x)
    xt = torch.tensor((x - centre) / scale, dtype=torch.float32)
    yt = torch.tensor(y, dtype=torch.float32)
    model = make_mlp(sizes)
    opt = torch.optim.Adam(model.parameters(), lr=3e-3)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, steps)
    for step in range(steps):
        idx = torch.randint(0, xt.shape[0], (1024,))
        loss = nn.functional.mse_loss(model(xt[idx]), yt[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
    with torch.no_grad():
        final = nn.functional.mse_loss(model(xt), yt).item()
    linears = [m for m in model if isinstance(m, nn.Linear)]
    out = []
    for i, lin in enumerate(linears):
        w = lin.weight.detach().double().numpy()
        bias = lin.bias.detach().double().numpy()
        if i == 0:
            # z = W ((x - c) / s) + b = (W / s) x + (b - W (c / s))
            bias = bias - w @ (centre / scale)
            w = w / scale[None, :]
        out.append({
            "weights": w.tolist(),
            "bias": bias.tolist(),
            "activation": "relu" if i + 1 < len(linears) else "identity",
        })
    return out, final


def dump(path, layers, description):
    doc = {"description": description, "standin": True, "input_dim": len(layers[0]["weights"][0]), "layers": layers}
    Path(path).write_text(json.dumps(doc))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "networks"))
    parser.add_argument("--steps", type=int, default=6000)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    layers, mse = train(vehicle_expert, [-1.0, -1.0, -math.pi, 0.0], [10.0, 10.0, math.pi, 3.0],
                        [4, 100, 100, 2], args.steps, seed=1)
    dump(out / "vehicle_standin.json", layers,
         "stand-in 4x100x100x2 ReLU vehicle controller (go to origin, avoid obstacle at (4,4) r=2)")
    print(f"vehicle: mse {mse:.4g}")

    layers, mse = train(di_expert, [-5.0, -5.0], [5.0, 5.0], [2, 10, 5, 1], args.steps, seed=2)
    dump(out / "double_integrator_standin.json", layers, "stand-in 2x10x5x1 ReLU double-integrator controller (saturated LQR)")
    print(f"double integrator: mse {mse:.4g}")


if __name__ == "__main__":
    main()
