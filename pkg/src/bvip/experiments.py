"""Seeded instance generators and the bound-versus-gap sweep."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .bivariate import BivariatePoly, SeparableParts, compose_separable
from .bounds import compare_bounds
from .estimate import (DistributionSpec, lhs_distance, require_hypothesis,
                       test_function_from_json)
from .spectrum import MultilinearPoly

MAX_SIDE_VARS = 16  # flattening needs 2n <= 32

COEFF_LAWS = ("unit", "sign", "uniform")

CSV_COLUMNS = [
    "instance_id", "kind", "n", "k", "terms", "C", "psi", "lhs_method", "lhs", "lhs_halfwidth",
    "bip_flat", "rbip_s1", "rbip_s2", "bvip1", "bvip2", "sep_bvip1", "sep_bvip2",
    "maxT1", "maxT2", "winner", "all_bounds_hold",
]


class BoundViolation(RuntimeError):
    def __init__(self, rows: list[dict]):
        self.rows = rows
        super().__init__(f"{len(rows)} row(s) with an exact gap above a bound")


@dataclass
class InstanceSpec:
    kind: str  # random_bivariate | separable | crossterm_star
    n: int = 4
    k: int = 1
    terms: int = 4
    m: int = 1
    coeff: str = "uniform"
    seed: int = 0
    id: str | None = None

    def validate(self):
        if self.kind not in ("random_bivariate", "separable", "crossterm_star"):
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if self.coeff not in COEFF_LAWS:
            raise ValueError(f"unknown coefficient law {self.coeff!r}")
        n = max(self.n, self.m) if self.kind == "crossterm_star" else self.n
        if not 1 <= n <= MAX_SIDE_VARS:
            raise ValueError(f"n must be in [1, {MAX_SIDE_VARS}]")
        if self.kind != "crossterm_star":
            if not 1 <= self.k <= self.n:
                raise ValueError("k must be in [1, n]")
            if self.terms < 1:
                raise ValueError("terms must be >= 1")
        elif self.m < 1:
            raise ValueError("star width m must be >= 1")

    @classmethod
    def from_json(cls, obj: Mapping) -> "InstanceSpec":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


def _draw_coeffs(rng: np.random.Generator, law: str, count: int) -> list[float]:
    if law == "unit":
        return [1.0] * count
    if law == "sign":
        return (2.0 * rng.integers(0, 2, size=count) - 1.0).tolist()
    return rng.uniform(-1.0, 1.0, size=count).tolist()


def _draw_mask(rng: np.random.Generator, n: int, lo: int, hi: int) -> int:
    size = int(rng.integers(lo, hi + 1))
    mask = 0
    for i in rng.choice(n, size=size, replace=False):
        mask |= 1 << int(i)
    return mask


def gen_instance(spec: InstanceSpec) -> tuple[BivariatePoly, SeparableParts | None]:
    """Deterministic instance for ``spec``.

    Stream order: all coefficients first, then for each term its side-1 size
    and members, then its side-2 size and members (separable: f terms, g
    terms, h terms, one mask each).
    """
    spec.validate()
    if spec.kind == "crossterm_star":
        n = max(spec.n, spec.m)
        F = BivariatePoly.from_terms(n, [((1, 1 << j), 1.0) for j in range(spec.m)])
        return F, None

    rng = np.random.default_rng(spec.seed)
    n, k, T = spec.n, spec.k, spec.terms
    if spec.kind == "random_bivariate":
        coeffs = _draw_coeffs(rng, spec.coeff, T)
        items = []
        for c in coeffs:
            m1 = _draw_mask(rng, n, 0, k)
            m2 = _draw_mask(rng, n, 0, k)
            items.append(((m1, m2), c))
        return BivariatePoly.from_terms(n, items), None

    coeffs = _draw_coeffs(rng, spec.coeff, 3 * T)
    # f may carry the constant; g and h stay constant-free so decomposition round-trips.
    f = [(_draw_mask(rng, n, 0, k), c) for c in coeffs[:T]]
    g = [(_draw_mask(rng, n, 1, k), c) for c in coeffs[T:2 * T]]
    h = [(_draw_mask(rng, n, k, k), coeffs[2 * T])]
    h += [(_draw_mask(rng, n, 1, k), c) for c in coeffs[2 * T + 1:]]
    parts = SeparableParts(MultilinearPoly.from_terms(n, f), MultilinearPoly.from_terms(n, g),
                           MultilinearPoly.from_terms(n, h))
    return compose_separable(parts.f, parts.g, parts.h), parts


@dataclass
class ExperimentConfig:
    instances: list[InstanceSpec]
    dist_x: list[DistributionSpec]
    dist_y: list[DistributionSpec]
    psis: list[dict]
    lhs_method: str = "exact"
    samples: int = 100_000
    seed: int = 0
    output: str | None = None
    allow_invalid: bool = False

    @classmethod
    def from_json(cls, obj: Mapping) -> "ExperimentConfig":
        def dists(v):
            if isinstance(v, Mapping):
                v = [v, v]
            return [DistributionSpec.from_json(d) for d in v]

        instances = []
        for raw in obj["instances"]:
            count = int(raw.get("count", 1))
            base = InstanceSpec.from_json(raw)
            for i in range(count):
                spec = InstanceSpec(**asdict(base))
                spec.seed = base.seed + i
                prefix = base.id or base.kind
                spec.id = prefix if count == 1 and base.id else f"{prefix}-{len(instances)}"
                instances.append(spec)
        return cls(
            instances=instances,
            dist_x=dists(obj.get("dist_x", {"kind": "rademacher"})),
            dist_y=dists(obj.get("dist_y", {"kind": "atoms", "atoms": _TERNARY_JSON})),
            psis=list(obj.get("psis", [{"kind": "power", "m": 4}])),
            lhs_method=obj.get("lhs_method", "exact"),
            samples=int(obj.get("samples", 100_000)),
            seed=int(obj.get("seed", 0)),
            output=obj.get("output"),
            allow_invalid=bool(obj.get("allow_invalid", False)),
        )


_TERNARY_JSON = [[-(3 ** 0.5), 1 / 6], [0.0, 2 / 3], [3 ** 0.5, 1 / 6]]


def _row_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def _sweep_row(task: tuple) -> dict:
    index, spec_json, psi_json, dx_json, dy_json, method, samples, seed = task
    spec = InstanceSpec(**spec_json)
    F, _ = gen_instance(spec)
    psi = test_function_from_json(psi_json)
    dx = [DistributionSpec.from_json(d) for d in dx_json]
    dy = [DistributionSpec.from_json(d) for d in dy_json]
    lhs = None
    if method != "none":
        lhs = lhs_distance(F, dx, dy, psi, method, samples=samples, seed=_row_seed(seed, index))
    rep = compare_bounds(F, psi.C, None if lhs is None else lhs.value, instance_id=spec.id or "",
                         lhs_method=None if lhs is None else lhs.method,
                         lhs_halfwidth=None if lhs is None else lhs.half_width)
    return {
        "instance_id": rep.instance_id, "kind": spec.kind, "n": rep.n, "k": rep.k,
        "terms": len(F), "C": rep.C, "psi": _psi_label(psi_json),
        "lhs_method": rep.lhs_method, "lhs": rep.lhs, "lhs_halfwidth": rep.lhs_halfwidth,
        "bip_flat": rep.bip_flat, "rbip_s1": rep.rbip_side1, "rbip_s2": rep.rbip_side2,
        "bvip1": rep.bvip1, "bvip2": rep.bvip2, "sep_bvip1": rep.sep_bvip1,
        "sep_bvip2": rep.sep_bvip2, "maxT1": rep.max_t1, "maxT2": rep.max_t2,
        "winner": rep.winner, "all_bounds_hold": rep.all_bounds_hold,
    }


def _psi_label(psi_json: Mapping) -> str:
    params = ",".join(f"{k}={v}" for k, v in psi_json.items() if k != "kind")
    return f"{psi_json['kind']}({params})" if params else psi_json["kind"]


def run_sweep(config: ExperimentConfig, workers: int = 1) -> list[dict]:
    """One row per (instance, test function), in config order."""
    if not config.allow_invalid:
        require_hypothesis(*config.dist_x, *config.dist_y)
    dx = [d.to_json() for d in config.dist_x]
    dy = [d.to_json() for d in config.dist_y]
    tasks = []
    for spec in config.instances:
        spec.validate()
        for psi in config.psis:
            test_function_from_json(psi)  # fail early on a bad catalog entry
            tasks.append((len(tasks), asdict(spec), dict(psi), dx, dy, config.lhs_method,
                          config.samples, config.seed))
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_sweep_row, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        rows = [_sweep_row(t) for t in tasks]
    if config.lhs_method == "exact":
        bad = [r for r in rows if r["all_bounds_hold"] is False]
        if bad:
            raise BoundViolation(bad)
    return rows


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[Mapping], columns: Sequence[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def rows_to_json(rows: Sequence[Mapping]) -> str:
    return json.dumps(list(rows), indent=2) + "\n"
