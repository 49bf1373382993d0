"""Convolutions of Cantor-type measures and binary digits of Cantor points."""

# %%
import math

from scenerylab.beta import ParryMeasure
from scenerylab.experiments import dissonance_experiment, normality_experiment
from scenerylab.ifs import arithmetic_independence_gap, cantor_system, similarity_system

cantor = cantor_system()
quarter = similarity_system("1/4", [0, "3/4"])

# %% [markdown]
# Two copies of the same Cantor measure resonate: their sum is again
# self-similar with ratio 1/3 and the dimension stays below 1.  Ratios 1/3 and
# 1/4 are arithmetically independent, and the sum fills out to dimension 1.

# %%
for label, other in (("cantor * cantor", cantor), ("cantor * quarter", quarter)):
    s = dissonance_experiment(cantor, other, 18).summary
    print(f"{label:18s} dims {s['dim_mu']:.3f} + {s['dim_nu']:.3f} -> {s['dim_convolution']:.3f}"
          f"  predicted {s['predicted']:.3f}  gap {s['independence_gap']:.4f}")
print(f"closed form for the resonant case: {1.5 * math.log(2) / math.log(3):.4f}")

# %% [markdown]
# Typical Cantor points have equidistributed binary orbits, while their
# ternary orbits never leave the Cantor set.

# %%
for beta in (2, 3):
    rep = normality_experiment(cantor, beta=beta, point_count=10, orbit_length=2000, precision_bits=4096,
                               checkpoints=[200, 2000])
    s = rep.summary
    print(f"beta={beta}: improved {s['improved_fraction']:.0%}, final discrepancy "
          f"{s['min_final_discrepancy']:.3f}..{s['max_final_discrepancy']:.3f}")

gap = arithmetic_independence_gap("ifs-vs-beta", cantor, 2.0, 12, 19)
print(f"smallest |k log 3 - n log 2| found: {gap.gap:.5f} at {gap.pair}")

# %% [markdown]
# Non-integer bases are compared against the Parry measure instead of Lebesgue.

# %%
golden = ParryMeasure("golden")
print(f"golden Parry density: {float(golden.density(0.3)):.5f} below 1/phi, {float(golden.density(0.8)):.5f} above")
