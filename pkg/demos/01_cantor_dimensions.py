"""Dimensions and sceneries of the middle-thirds Cantor measure.

Run with ``python demos/01_cantor_dimensions.py``.
"""

# %%
import math

import numpy as np

from scenerylab.experiments import entropy_dimension, local_dimension
from scenerylab.ifs import cantor_system
from scenerylab.measure import discretize, magnify
from scenerylab.metrics import shannon_entropy

system = cantor_system()
mu = discretize(system, 20)
print(f"{len(mu)} occupied cells at level {mu.level}")

# %% [markdown]
# Entropy at level n grows like n * dim * log 2.  The fitted slope over the
# upper half of the levels should sit near log 2 / log 3.

# %%
est = entropy_dimension(mu)
for row in est.rows[::2]:
    print(f"n={row['n']:2d}  H={row['entropy']:.4f}")
print(f"entropy dimension {est.slope:.4f}  (log2/log3 = {math.log(2) / math.log(3):.4f})")

# %% [markdown]
# At the left endpoint every ball of radius 3^-k carries mass exactly 2^-k,
# so the local dimension there is exact.

# %%
scales = [k * math.log2(3) for k in range(2, 12)]
print(f"local dimension at 0: {local_dimension(system, 0.0, scales).slope:.10f}")

# %% [markdown]
# Zooming into 0 by a factor 3 reproduces the same picture, so the scenery is
# periodic in the scale parameter with period log2(3).

# %%
for t in np.linspace(0.5, 3.5, 7):
    a = magnify(system, 0.0, t, level=8)
    b = magnify(system, 0.0, t + math.log2(3), level=8)
    print(f"t={t:.2f}  H(frame)={shannon_entropy(a):.4f}  same after one period: {a.allclose(b, atol=1e-9)}")
