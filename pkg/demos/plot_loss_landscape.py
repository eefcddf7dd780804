"""
The style-ambiguity loss on the probability simplex
===================================================

The generator's extra term is a cross-entropy against the uniform
distribution over the K styles, applied one style at a time as a binary
problem. It is smallest when the discriminator cannot tell which style a
sample belongs to.
"""
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from canforge.losses import ambiguity_minimum, style_ambiguity_loss

K = 24
print("closed-form minimum:", ambiguity_minimum(K))
print("at the uniform row: ", style_ambiguity_loss(torch.full((1, K), 1 / K, dtype=torch.float64)).item())

# Interpolate from uniform towards a one-hot prediction.
one_hot = torch.zeros(1, K, dtype=torch.float64)
one_hot[0, 0] = 1
ts = np.linspace(0, 1, 101)
values = [style_ambiguity_loss((1 - t) * torch.full((1, K), 1 / K, dtype=torch.float64) + t * one_hot).item()
          for t in ts]

# Random points on the simplex never go below the minimum.
rows = np.random.default_rng(0).dirichlet(np.ones(K) * 0.5, size=2000)
scattered = style_ambiguity_loss(torch.tensor(rows)).item()
per_row = [style_ambiguity_loss(torch.tensor(r[None])).item() for r in rows]
print(f"lowest of 2000 random rows: {min(per_row):.6f} (mean {scattered:.3f})")

fig, ax = plt.subplots(figsize=(6, 4))
ax.plot(ts, values)
ax.axhline(ambiguity_minimum(K), ls="--", c="k", lw=0.8)
ax.set_xlabel("t  (0 = uniform, 1 = one-hot)")
ax.set_ylabel("style ambiguity loss")
ax.set_title(f"K = {K}; the one-hot end is set by the 1e-7 clamp ({-math.log(1e-7) * 46 / 24:.1f})")
fig.tight_layout()
fig.savefig("loss_landscape.png", dpi=100)
print("wrote loss_landscape.png")
