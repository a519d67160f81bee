"""Deterministic pipeline: the potential never goes up while bits are fixed."""
from hypermis.config import DEFAULT
from hypermis.det_mis import default_omega, find_mis_det
from hypermis.harness import generate
from hypermis.hypergraph import verify_mis

G = generate("uniform-random", 24, 60, 3, seed=4)
omega = default_omega(G)
print(G, "sample space support", omega.support_size)

res = find_mis_det(G, DEFAULT.with_overrides(exact_arith=True, instrument=True))
print("valid", verify_mis(G, res.mis), "rounds", res.rounds)
print({k: res.metrics[k] for k in ("stages", "exact_checks", "exact_violations", "h_checks", "h_collapses")})

# potential before and after each stage; every new v starts a fresh potential
for rec in res.trace[:4]:
    path = [round(rec["phi_start"], 6)] + [round(s["after"], 6) for s in rec["stages"]]
    print("epoch", rec["epoch"], "v", round(rec["v"], 2), "round", rec["round"], "K", rec["K"], path)
