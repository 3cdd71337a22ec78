"""Tour of the classical lower-bound laboratory.

Four exact or Monte-Carlo ingredients behind the sample-complexity
optimality argument: (1) a closed-form bound on how far a finite-
temperature distribution of a 0/1-valued energy function can sit from its
ground-space uniform distribution, (2) lattice rounding of distributions
with exact subset realization, (3) the birthday bound that controls the
subset-sampling coupling, and (4) an exact state-vector check of the
query-perturbation bound.
"""

import math

import numpy as np

import thermoshadow as ts
from thermoshadow.lowerbound import (
    BinPartition,
    induced_bin_frequencies,
    random_unitary,
    temperature_threshold,
    uniform_zero_set_ensemble,
)

rng = np.random.Generator(np.random.Philox(key=11))

print("1. temperature vs ground-space distance, exact closed form")
n, k = 10, 3
for r in (1, 3, 6):
    beta = temperature_threshold(n, r)
    tv = ts.tv_beta_vs_ground(n, k, beta)
    print(f"   n={n}, k={k}, beta = n ln2 + {r}: TV = {tv:.3e} <= e^-{r} "
          f"= {math.exp(-r):.3e}")

print()
print("2. lattice rounding and exact subset realization")
p = ts.InducedDistribution(np.array([0.26, 0.74]))
q = ts.round_distribution(p, 10)
print(f"   rounding (0.26, 0.74) to the 1/10 lattice gives "
      f"({q.probs[0]:.1f}, {q.probs[1]:.1f})")
part = BinPartition(n=8, m=4)
p4 = ts.InducedDistribution(rng.dirichlet(np.ones(4)))
q4 = ts.round_distribution(p4, 32)
f = ts.realize_subset(q4, part, 32, rng)
realized = induced_bin_frequencies(f, part)
print(f"   a 32-element ground space realizes {np.round(q4.probs, 4)} "
      f"exactly: {np.array_equal(realized.probs, q4.probs)}")

print()
print("3. birthday collisions stay below the union bound S^2/(2K)")
for draws, universe in ((5, 256), (10, 4096)):
    stats = ts.collision_probability(draws, universe, 50_000, rng)
    print(f"   S={draws}, K={universe}: empirical {stats.empirical:.4f} "
          f"<= bound {stats.bound:.4f}")

print()
print("4. query-perturbation bound on exact state vectors")
n, queries = 3, 2
dim = 2**n
algorithm = [random_unitary(dim, rng) for _ in range(queries + 1)]
report = ts.query_sim_validate(
    n, queries, uniform_zero_set_ensemble(n, 2),
    np.ones(dim, dtype=np.uint8), algorithm, trials=48, stream=rng,
)
print(f"   random {queries}-query algorithm on {n} bits, ensemble of "
      f"2-zero functions:")
print(f"   trace distance {report.trace_distance:.4f} <= "
      f"2 T sqrt(max flip) = {report.bound:.4f}  "
      f"(satisfied: {report.satisfied})")
