"""Walk through the randomized marking rounds on a small 3-uniform instance."""
from fractions import Fraction

from hypermis.hypergraph import degree_table, verify_mis
from hypermis.harness import generate
from hypermis.rand_mis import RoundRNG, check_migration, find_mis, mark

G = generate("uniform-random", 30, 45, 3, seed=1)
print(G, "max degree per (|X|, j):")
table = degree_table(G)
for x in (1, 2):
    print(" ", x, {j: max((d for (X, jj), d in table.items() if len(X) == x and jj == j), default=0) for j in (1, 2)})

# one round at p = 1/8, by hand
rng = RoundRNG(3)
rnd, H = mark(G, Fraction(1, 8), rng, t=0)
print("marked", int(rnd.marked.sum()), "committed", rnd.K)
print("migration check (degree, surrogate, pairs):", check_migration(G, rnd, H))

# the whole loop
res = find_mis(G, seed=3)
print("rounds", res.rounds, "size", len(res.mis), "valid", verify_mis(G, res.mis))
for rec in res.trace[:5]:
    print({k: rec[k] for k in ("t", "v", "p", "K", "edges") if k in rec})
