"""Edge-heavy inputs: bounded-rank pieces picked by conditional expectations."""
import math

from hypermis.harness import generate
from hypermis.hypergraph import verify_mis
from hypermis.sparse import derand_mark, dsbl, marking_probability, sbl

G = generate("planted-sparse", 60, 500, 4, seed=4)
r = 2
p = marking_probability(G.n, G.m, r)
rnd = derand_mark(G, r, p, record=True)
print(G, "p =", p, "|Y| =", len(rnd.Y), "|X| =", len(rnd.X), "floor", G.n * p / 2)
print("E[S] went", float(rnd.expectations[0]), "->", float(rnd.expectations[-1]))

for name, res in (("dsbl", dsbl(G, r)), ("sbl", sbl(G, r, seed=0))):
    cap = 8 * G.m ** (1 / r) * math.log(G.n)
    print(name, "iterations", res.iterations, "cap", round(cap), "valid", verify_mis(G, res.mis))
    for row in res.rows:
        print("  ", row)
