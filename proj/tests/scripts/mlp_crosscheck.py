#!/usr/bin/env python3
"""Independent numpy forward pass for the reference network.

  mlp_crosscheck.py generate DIR   write reference_weights.txt and reference_obs.txt
  mlp_crosscheck.py check DIR      compare reference_output.txt against numpy
"""
import re
import sys
from pathlib import Path

import numpy as np

DIMS = [10, 16, 16, 6]
SCALE = [1.0, 1.0, 1.0, 1e-3, 1e-3, 1e-3]


def fmt(values):
    return "[" + ", ".join(repr(float(v)) for v in values) + "]"


def generate(out):
    rng = np.random.default_rng(20240611)
    lines = [f"# reference network {DIMS}", f"dims: {DIMS}", "activation: tanh"]
    for l in range(1, len(DIMS)):
        w = rng.uniform(-0.8, 0.8, size=(DIMS[l], DIMS[l - 1]))
        b = rng.uniform(-0.2, 0.2, size=DIMS[l])
        lines.append(f"W_{l}: {fmt(w.reshape(-1))}")
        lines.append(f"b_{l}: {fmt(b)}")
    lines.append(f"output_scale: {fmt(SCALE)}")
    (out / "reference_weights.txt").write_text("\n".join(lines) + "\n")
    obs = rng.uniform(-1.0, 1.0, size=DIMS[0])
    (out / "reference_obs.txt").write_text("\n".join(repr(float(v)) for v in obs) + "\n")


def parse_weights(path):
    fields = {}
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = line.split(":", 1)
        fields[key.strip()] = value.strip()
    dims = [int(v) for v in re.findall(r"-?\d+", fields["dims"])]
    layers = []
    for l in range(1, len(dims)):
        w = np.array([float(v) for v in fields[f"W_{l}"].strip("[]").split(",")]).reshape(dims[l], dims[l - 1])
        b = np.array([float(v) for v in fields[f"b_{l}"].strip("[]").split(",")])
        layers.append((w, b))
    scale = np.array([float(v) for v in fields["output_scale"].strip("[]").split(",")])
    return layers, scale


def forward(layers, scale, x):
    for i, (w, b) in enumerate(layers):
        x = w @ x + b
        if i + 1 < len(layers):
            x = np.tanh(x)
    return x * scale


def check(out):
    layers, scale = parse_weights(out / "reference_weights.txt")
    obs = np.loadtxt(out / "reference_obs.txt")
    golden = np.loadtxt(out / "reference_output.txt")
    expected = forward(layers, scale, obs)
    err = np.max(np.abs(expected - golden))
    print(f"max |numpy - golden| = {err:.3e}")
    return 0 if err < 1e-9 else 1


if __name__ == "__main__":
    if len(sys.argv) != 3 or sys.argv[1] not in ("generate", "check"):
        print(__doc__)
        sys.exit(2)
    target = Path(sys.argv[2])
    if sys.argv[1] == "generate":
        generate(target)
        sys.exit(0)
    sys.exit(check(target))
