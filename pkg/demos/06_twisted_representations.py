"""The N-fermion deck group and its holonomy-twisted factor.

For N indistinguishable particles whose one-particle base has a free
fundamental group, deck elements are pairs (permutation, word tuple) with a
semidirect product.  The topological factor sgn(p) (x) Gamma_w1 (x) ... is
not a representation: composition holds only up to conjugation by the
bundle holonomy (slot permutations), and the script verifies that law on
random pairs.
"""

import numpy as np

from topobohm import (
    FreeWord,
    Permutation,
    SemidirectElement,
    TwistedRepTable,
    deck_compose,
    nfermion_factor,
    verify_twisted_law,
)
from topobohm.factors import random_unitary

rng = np.random.default_rng(7)

# semidirect algebra on 2 particles, one generator word group
swap = Permutation.swap(2, 0, 1)
a1 = FreeWord.generator(0, 1)
eps = FreeWord.identity(1)
s1 = SemidirectElement(swap, (a1, eps))
s2 = SemidirectElement(swap, (eps, eps))
print("semidirect product:")
print(f"  (swap,(a1,e)) * (swap,(e,e)) = {deck_compose(s1, s2)}")

u = random_unitary(2, rng)
print("\nfactors at a tagged configuration (dim W = 2):")
print("  pure swap      ->", np.round(nfermion_factor(2, 2, [u], s2), 3)[0, :3],
      "... (= -identity: the exchange sign)")
word_only = SemidirectElement(Permutation.identity(2), (a1, eps))
print("  (id,(a1,e))    -> first tensor slot carries the generator matrix")

table = TwistedRepTable.nfermion(2, 2, [u])
residual = verify_twisted_law(table, samples=1000, seed=3)
print(f"\ntwisted composition law residual over 10^3 random pairs: "
      f"{residual:.2e}")

sigma = table.space.random_deck(np.random.default_rng(0))
bad = table.corrupted(sigma, 1j * np.eye(4))
print(f"after corrupting one entry the law breaks loudly: "
      f"{verify_twisted_law(bad, samples=1000, seed=3):.2f}")

table3 = TwistedRepTable.nfermion(3, 2, [u])
print(f"three fermions (dim 8 fiber): residual "
      f"{verify_twisted_law(table3, samples=400, seed=4):.2e}")
