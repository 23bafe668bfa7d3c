"""Coefficient families ``V_n = V + K_n`` and sign-changing ``Q_n``.

Three constructions are provided, plus a hand-made single instance:

* shrinking ball: ``Q_n = q_plus`` on ``B_{eps_n}(c)`` and ``q_minus`` outside;
* level shift: ``Q_n = Q - lambda_n`` with ``lambda_n`` increasing to ``max Q``;
* two points: positive islands ``B_{eps_n}(x_1)``, ``B_{eps_n}(x_2)`` in a
  negative background, optionally with different island amplitudes.

All statements about supports and neighbourhoods are node-set statements.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .mesh import Grid, ScalarField, ball_mask, balls_mask, _check_same
from . import spectral

KERR_EXPONENT = 4.0

STATUS_OK = "ok"
STATUS_INFEASIBLE = "infeasible"
# the positivity set is smaller than the mesh can see
STATUS_UNRESOLVED = "unresolved at this resolution"


@dataclass(frozen=True)
class KSpec:
    """``K_n = amplitude`` on ``B_{radius_factor * eps_n}`` around each center."""

    amplitude: float = 0.0
    radius_factor: float = 1.0


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    grid: Grid
    V: ScalarField
    K: ScalarField
    Q: ScalarField
    p: float
    n: int
    centers: tuple[tuple[float, ...], ...]
    scale: float
    kind: str = "custom"
    amplitudes: tuple[float, ...] | None = None
    expects_positive: bool = True

    def __post_init__(self):
        _check_same(self.grid, self.V.grid, self.K.grid, self.Q.grid)
        if not self.p > 2:
            raise ValueError(f"exponent p must exceed 2, got {self.p}")
        if not self.centers:
            raise ValueError("at least one concentration center is required")

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def V_n(self) -> ScalarField:
        return self.V + self.K

    @property
    def status(self) -> str:
        if np.any(self.Q.values > 0):
            return STATUS_OK
        return STATUS_UNRESOLVED if self.expects_positive else STATUS_INFEASIBLE

    @property
    def feasible(self) -> bool:
        return self.status == STATUS_OK

    @property
    def is_kerr(self) -> bool:
        return self.p == KERR_EXPONENT


def _center(grid: Grid, c) -> tuple[float, ...]:
    t = tuple(float(a) for a in (np.atleast_1d(c)))
    if len(t) == 1 and grid.dim > 1:
        t = t * grid.dim  # a scalar names the point on the diagonal
    if len(t) != grid.dim:
        raise ValueError(f"center {c} does not match grid dimension {grid.dim}")
    if not grid.contains(t):
        raise ValueError(f"center {t} lies outside the grid box")
    return t


def _check_decreasing(seq: Sequence[float], name: str) -> list[float]:
    seq = [float(e) for e in seq]
    if not seq:
        raise ValueError(f"{name} is empty")
    if any(e <= 0 for e in seq):
        raise ValueError(f"{name} must be positive")
    if any(b >= a for a, b in zip(seq, seq[1:])):
        raise ValueError(f"{name} must be strictly decreasing")
    return seq


def _k_field(grid: Grid, centers, eps: float, k_spec: KSpec | None) -> ScalarField:
    if k_spec is None or k_spec.amplitude == 0.0:
        return grid.constant(0.0)
    if not 0 < k_spec.radius_factor <= 1:
        raise ValueError("K radius_factor must lie in (0, 1]")
    m = balls_mask(grid, centers, k_spec.radius_factor * eps)
    return ScalarField(grid, np.where(m.member, k_spec.amplitude, 0.0))


def make_family_shrinking_ball(grid: Grid, eps_sequence: Sequence[float], q_plus: float, q_minus: float,
                               V: ScalarField, K_spec: KSpec | None = None, p: float = KERR_EXPONENT,
                               center=0.0, n_start: int = 1) -> list[ProblemInstance]:
    if not q_plus > 0:
        raise ValueError("q_plus must be positive")
    if not q_minus < 0:
        raise ValueError("q_minus must be negative")
    eps = _check_decreasing(eps_sequence, "eps_sequence")
    c = _center(grid, center)
    if eps[0] >= grid.boundary_distance(c):
        raise ValueError("the first ball must lie inside the domain")
    family = []
    for k, e in enumerate(eps):
        inside = ball_mask(grid, c, e).member
        Q = ScalarField(grid, np.where(inside, q_plus, q_minus))
        family.append(ProblemInstance(grid, V, _k_field(grid, [c], e, K_spec), Q, float(p), n_start + k,
                                      (c,), e, "shrinking_ball"))
    return family


def make_family_level_shift(grid: Grid, Q_profile: ScalarField, lambda_sequence: Sequence[float],
                            V: ScalarField, p: float = KERR_EXPONENT, center=0.0,
                            n_start: int = 1) -> list[ProblemInstance]:
    c = _center(grid, center)
    q = Q_profile.values
    top = float(q.max())
    at_top = np.flatnonzero(q == top)
    if at_top.size != 1:
        raise ValueError("Q profile must have a unique maximum on the nodes")
    dist = grid.distance(c)
    if dist[at_top[0]] > math.hypot(*grid.h) + 1e-12:
        raise ValueError("the maximum of the Q profile is not at the given center")
    lam = [float(x) for x in lambda_sequence]
    if not lam:
        raise ValueError("lambda_sequence is empty")
    if any(b <= a for a, b in zip(lam, lam[1:])):
        raise ValueError("lambda_sequence must be strictly increasing")
    if lam[-1] >= top:
        raise ValueError(f"lambda_n must stay below max Q = {top}")
    family = []
    for k, lv in enumerate(lam):
        Q = ScalarField(grid, q - lv)
        pos = Q.values > 0
        scale = float(dist[pos].max()) if pos.any() else min(grid.h)
        family.append(ProblemInstance(grid, V, grid.constant(0.0), Q, float(p), n_start + k, (c,),
                                      max(scale, min(grid.h)), "level_shift"))
    return family


def make_two_point_family(grid: Grid, eps_sequence: Sequence[float], q_plus, q_minus: float,
                          V: ScalarField, p: float = KERR_EXPONENT, x1=-0.5, x2=0.5,
                          K_spec: KSpec | None = None, n_start: int = 1) -> list[ProblemInstance]:
    amps = (float(q_plus), float(q_plus)) if np.isscalar(q_plus) else tuple(float(a) for a in q_plus)
    if len(amps) != 2 or min(amps) <= 0:
        raise ValueError("q_plus must be positive (scalar or one value per ball)")
    if not q_minus < 0:
        raise ValueError("q_minus must be negative")
    eps = _check_decreasing(eps_sequence, "eps_sequence")
    c1, c2 = _center(grid, x1), _center(grid, x2)
    gap = math.dist(c1, c2)
    if gap == 0:
        raise ValueError("the two concentration points must differ")
    if gap <= 2 * eps[0]:
        raise ValueError("the balls around x1 and x2 overlap")
    if eps[0] >= min(grid.boundary_distance(c1), grid.boundary_distance(c2)):
        raise ValueError("the balls must lie inside the domain")
    family = []
    for k, e in enumerate(eps):
        vals = np.full(grid.size, float(q_minus))
        for c, a in zip((c1, c2), amps):
            vals[ball_mask(grid, c, e).member] = a
        family.append(ProblemInstance(grid, V, _k_field(grid, [c1, c2], e, K_spec), ScalarField(grid, vals),
                                      float(p), n_start + k, (c1, c2), e, "two_point", amps))
    return family


def make_instance(grid: Grid, V: ScalarField, Q: ScalarField, p: float, centers, K: ScalarField | None = None,
                  n: int = 1, scale: float | None = None) -> ProblemInstance:
    """Single instance with arbitrary coefficients (``kind='custom'``)."""
    pts = np.reshape(np.asarray(centers, dtype=float), (-1, grid.dim))
    cs = tuple(_center(grid, c) for c in pts)
    K = grid.constant(0.0) if K is None else K
    if scale is None:
        pos = Q.values > 0
        d = np.min([grid.distance(c) for c in cs], axis=0)
        scale = float(d[pos].max()) if pos.any() else 2 * min(grid.h)
    return ProblemInstance(grid, V, K, Q, float(p), n, cs, max(scale, min(grid.h)), "custom",
                           expects_positive=False)


# ----------------------------------------------------------------------------
# Assumption checks
# ----------------------------------------------------------------------------

@dataclass
class ProbeRow:
    eps: float
    N_eps: int | None
    delta: float | None


@dataclass
class AssumptionReport:
    B: float
    C: float
    probes: list[ProbeRow]
    uniform_delta: float | None
    lambda_R: tuple[float, float] | None
    min_eig: float
    flags: dict[str, bool]
    statuses: dict[int, str]
    positive_diameters: dict[int, float]
    norm_bounds: dict[int, tuple[float, float]]
    mesh: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["statuses"] = {str(k): v for k, v in self.statuses.items()}
        d["positive_diameters"] = {str(k): v for k, v in self.positive_diameters.items()}
        d["norm_bounds"] = {str(k): list(v) for k, v in self.norm_bounds.items()}
        d["lambda_R"] = list(self.lambda_R) if self.lambda_R else None
        d["passed"] = self.passed
        return d


def _node_diameter(grid: Grid, member: np.ndarray) -> float:
    pts = grid.points[member]
    if len(pts) < 2:
        return 0.0
    if grid.dim == 1:
        return float(pts.max() - pts.min())
    from scipy.spatial import ConvexHull
    from scipy.spatial.distance import pdist
    try:
        pts = pts[ConvexHull(pts).vertices]
    except Exception:  # collinear sets
        pass
    return float(pdist(pts).max())


def _scan_lambda_R(grid: Grid, V: np.ndarray, centers) -> tuple[float, float] | None:
    """Smallest node radius ``R`` with ``min V`` outside ``B_R`` positive."""
    d = np.min([grid.distance(c) for c in centers], axis=0)
    order = np.argsort(d, kind="stable")
    # suffix minima: min of V over nodes at distance >= d[order[k]]
    tail_min = np.minimum.accumulate(V[order][::-1])[::-1]
    ok = np.flatnonzero(tail_min > 0)
    if ok.size == 0:
        return None
    k = ok[0]
    return float(tail_min[k]), float(d[order[k]])


def validate_assumptions(family: Sequence[ProblemInstance], eps_probe_list: Sequence[float]) -> AssumptionReport:
    if not family:
        raise ValueError("empty family")
    grid = family[0].grid
    V = family[0].V
    centers = family[0].centers
    B = max(float(np.max(np.abs(inst.K.values))) for inst in family)
    C = max(float(np.max(np.abs(inst.Q.values))) for inst in family)

    probes = []
    for eps in sorted(eps_probe_list, reverse=True):
        outside = balls_mask(grid, centers, eps, complement=True).member
        good = []
        for inst in family:
            q_out = inst.Q.values[outside]
            k_ok = not np.any(inst.K.values[outside] != 0.0)
            good.append(k_ok and (q_out.size == 0 or float(q_out.max()) < 0))
        N_eps, delta = None, None
        # least index from which every later member qualifies
        for k in range(len(family)):
            if all(good[k:]):
                N_eps = family[k].n
                tail = [inst.Q.values[outside] for inst in family[k:]]
                if any(t.size for t in tail):
                    delta = min(-float(t.max()) for t in tail if t.size)
                break
        probes.append(ProbeRow(float(eps), N_eps, delta))

    deltas = []
    for inst in family:
        nonpos = inst.Q.values[inst.Q.values <= 0]
        deltas.append(-float(nonpos.max()) if nonpos.size else None)
    uniform_delta = None
    if deltas and all(d is not None and d > 0 for d in deltas):
        uniform_delta = min(deltas)

    eig = spectral.smallest_eigenvalue(V)
    norm_bounds = {}
    if eig.min_eig > 0:
        for inst in family:
            norm_bounds[inst.n] = tuple(spectral.norm_equivalence_bounds(V, inst.K, eig.min_eig))

    statuses = {inst.n: inst.status for inst in family}
    diam = {inst.n: _node_diameter(grid, inst.Q.values >= 0) for inst in family}
    lambda_R = _scan_lambda_R(grid, V.values, centers)

    flags = {
        "p_admissible": all(inst.p > 2 for inst in family),
        "V_nonnegative": bool(np.all(V.values >= 0)),
        "spectrum_positive": bool(eig.min_eig > 0),
        "norm_equivalent": bool(norm_bounds) and all(c1 > 0 for c1, _ in norm_bounds.values()),
        "K_support_shrinks": all(p.N_eps is not None for p in probes),
        "Q_positive_somewhere": all(s == STATUS_OK for s in statuses.values()),
        "Q_negative_outside": all(p.N_eps is not None and (p.delta is None or p.delta > 0) for p in probes),
    }
    if grid.unbounded_truncation:
        flags["V_bounded_below_far_out"] = lambda_R is not None
    mesh = {"h": list(grid.h), "lo": list(grid.lo), "hi": list(grid.hi),
            "unbounded_truncation": grid.unbounded_truncation}
    return AssumptionReport(B, C, probes, uniform_delta, lambda_R, float(eig.min_eig), flags, statuses,
                            diam, norm_bounds, mesh)


# ----------------------------------------------------------------------------
# Declarative family specs
# ----------------------------------------------------------------------------

FAMILY_KINDS = ("shrinking_ball", "level_shift", "two_point", "custom")


def expand_sequence(spec) -> list[float]:
    """Explicit list, or ``{start, ratio, count}`` geometric descriptor."""
    if isinstance(spec, dict):
        return [float(spec["start"]) * float(spec["ratio"]) ** k for k in range(int(spec["count"]))]
    return [float(x) for x in spec]


def potential_from_spec(grid: Grid, spec: dict, base_dir: Path | None = None) -> ScalarField:
    """``V`` from ``{kind: constant | well | custom-dump, params}``."""
    kind = spec["kind"]
    params = spec.get("params", {})
    if kind == "constant":
        return grid.constant(params.get("value", 0.0))
    if kind == "well":
        center = params.get("center", [0.0] * grid.dim)
        inside = ball_mask(grid, center, params["radius"]).member
        return ScalarField(grid, np.where(inside, params.get("inner", 0.0), params["outer"]))
    if kind == "custom-dump":
        return _load_dump(grid, params["path"], base_dir)
    raise ValueError(f"unknown potential kind {kind!r}")


def profile_from_spec(grid: Grid, spec: dict, base_dir: Path | None = None) -> ScalarField:
    """Level-shift profile: ``paraboloid`` ``top - curvature |x - c|^2`` or a dump."""
    kind = spec["kind"]
    params = spec.get("params", {})
    if kind == "paraboloid":
        c = np.asarray(params.get("center", [0.0] * grid.dim), dtype=float)
        r2 = ((grid.points - c) ** 2).sum(axis=1)
        return ScalarField(grid, params.get("top", 1.0) - params.get("curvature", 1.0) * r2)
    if kind == "custom-dump":
        return _load_dump(grid, params["path"], base_dir)
    raise ValueError(f"unknown profile kind {kind!r}")


def _load_dump(grid: Grid, path, base_dir: Path | None) -> ScalarField:
    from .fieldio import load_field
    path = Path(path)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    f, _ = load_field(path.with_suffix(""))
    if f.grid != grid:
        raise ValueError(f"dump {path} was written on a different grid")
    return f


@dataclass
class FamilySpec:
    kind: str
    p: float
    V: dict
    params: dict
    n_start: int = 1

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"family kind must be one of {FAMILY_KINDS}")

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        d = dict(d)
        kind, p, V = d.pop("kind"), float(d.pop("p")), d.pop("V")
        n_start = int(d.pop("n_start", 1))
        return cls(kind, p, V, d, n_start)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p, "V": self.V, "n_start": self.n_start, **self.params}

    def build(self, grid: Grid, base_dir: Path | None = None) -> list[ProblemInstance]:
        V = potential_from_spec(grid, self.V, base_dir)
        prm = self.params
        k_spec = KSpec(**prm["K"]) if "K" in prm else None
        if self.kind == "shrinking_ball":
            return make_family_shrinking_ball(grid, expand_sequence(prm["eps"]), prm["q_plus"], prm["q_minus"],
                                              V, k_spec, self.p, prm.get("center", [0.0] * grid.dim),
                                              self.n_start)
        if self.kind == "level_shift":
            Q = profile_from_spec(grid, prm["Q"], base_dir)
            return make_family_level_shift(grid, Q, expand_sequence(prm["lambda"]), V, self.p,
                                           prm.get("center", [0.0] * grid.dim), self.n_start)
        if self.kind == "two_point":
            x1, x2 = prm["centers"]
            return make_two_point_family(grid, expand_sequence(prm["eps"]), prm["q_plus"], prm["q_minus"], V,
                                         self.p, x1, x2, k_spec, self.n_start)
        members = []
        for k, m in enumerate(prm["members"]):
            Q = _load_dump(grid, m["Q"], base_dir)
            K = _load_dump(grid, m["K"], base_dir) if "K" in m else None
            members.append(make_instance(grid, V, Q, self.p, prm["centers"], K, n=self.n_start + k))
        return members
