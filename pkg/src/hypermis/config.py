"""Tunable constants for all pipelines.

Each field documents the asymptotic value next to the desk default. The
defaults are small enough that every pipeline finishes on graphs with a few
hundred edges; MIS correctness never depends on them.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class Constants:
    # randomized pipeline
    rand_envelope: str = "zero"         # schedule envelope in adaptive mode; "f" is the asymptotic one
    rand_round_cap: int = 5000          # asymptotic: (log n)**(2**r) rounds per REDUCE
    total_round_cap: int = 200000       # global guard, raises RoundCapExceeded
    sequential_fallback: bool = False   # asymptotic rule 2**r >= log n / log log n
    instrument: bool = False            # migration and collapse bookkeeping per round

    # deterministic pipeline
    w0: float = 4.0                     # asymptotic: 1000, moment order w = ceil(w0 log m / q)
    kappa: float = 4.0                  # asymptotic: 100, settled summands worth m**-kappa
    det_envelope: str = "unit"          # "g" is the asymptotic envelope (log m)**-g(j+|X|); "unit" uses (log m)**-1
    tau_offset: float = -3.0            # added to the exponent of log m in both windows (asymptotic: 0)
    tau2_full_window: bool = True       # desk: the end-of-REDUCE window spans the whole REDUCE
    strict_feasibility: bool = False    # drop collapse summands failing tau*gamma*v**-k >= L**2.01
    det_round_cap: int = 400            # asymptotic: (log m)**(2**(r+2)) rounds per REDUCE
    det_total_round_cap: int = 20000
    summand_cap: int = 2_000_000        # asymptotic: m**100
    omega_L: int = 3                    # asymptotic: L0 log m
    omega_pairs: str = "intersecting"   # edge pairs whose unions get exact independence
    omega_max_bits: int = 20
    exact_arith: bool = False
    threads: int = 1
    det_fallback: bool = True           # finish with greedy insertion if the round cap is hit

    # sparse pipeline
    dsbl_iteration_constant: float = 8.0
    p_precision_bits: int = 4

    # diagnostics
    ss_R: float = 1.0

    def with_overrides(self, **kw) -> "Constants":
        known = {f.name for f in fields(self)}
        bad = set(kw) - known
        if bad:
            raise ValueError(f"unknown constants: {sorted(bad)}")
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Constants":
        return cls().with_overrides(**d)

    @classmethod
    def load(cls, path) -> "Constants":
        return cls.from_dict(json.loads(Path(path).read_text()))


DEFAULT = Constants()
