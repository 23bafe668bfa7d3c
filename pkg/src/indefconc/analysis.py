"""Concentration diagnostics for families of ground states.

All integrals use the node masks of ``mesh``: a ball ``B_eps(c)`` is the set
of nodes with ``|x - c| < eps``, and ratios compare the complement of the
ball(s) with the whole grid. Trends in ``n`` are finite-family proxies for
limits; numeric thresholds other than the two-point selection level are left
to the caller.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .mesh import ScalarField, ball_mask, balls_mask, energy_density, integrate, lq_norm, norm_n
from .problem import ProblemInstance
from .solver import GroundState, NoAdmissibleStartError, SolverConfig, SolverError, J_n, solve_ground_state

log = logging.getLogger(__name__)

CSV_COLUMNS = ("n", "eps", "q", "h1_ratio", "lp_ratio", "tail_q", "total_q", "norm_n", "m1", "m2", "selected",
               "margin")


# ----------------------------------------------------------------------------
# Exponents
# ----------------------------------------------------------------------------

def _exact(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**6)


def q_star(N: int, p) -> Fraction:
    """Borderline Lebesgue exponent ``N (p - 2) / 2`` in exact arithmetic."""
    return Fraction(int(N)) * (_exact(p) - 2) / 2


def sobolev_exponent(N: int) -> Fraction | float:
    """``2N/(N-2)`` for ``N >= 3``, infinity otherwise."""
    return Fraction(2 * N, N - 2) if N >= 3 else math.inf


def vanishing_exponent(N: int) -> Fraction | float:
    """``(2N-2)/(N-2)`` for ``N >= 3``, infinity otherwise."""
    return Fraction(2 * N - 2, N - 2) if N >= 3 else math.inf


def uniform_vanishing_applies(N: int, p) -> bool:
    """Whether ``N >= 3`` and ``(2N-2)/(N-2) <= p < 2N/(N-2)``.

    These are the dimension and exponent conditions under which the exterior
    norms themselves (not only their ratios) go to zero.
    """
    if N < 3:
        return False
    pe = _exact(p)
    return vanishing_exponent(N) <= pe < sobolev_exponent(N)


def _q_key(q) -> float:
    return math.inf if q in ("inf", math.inf) else float(q)


def q_label(q) -> str:
    q = _q_key(q)
    return "inf" if math.isinf(q) else repr(q)


# ----------------------------------------------------------------------------
# Per-instance diagnostics
# ----------------------------------------------------------------------------

def _core_mask(instance: ProblemInstance, eps: float):
    """Union of the balls of radius ``eps`` around all concentration points."""
    return balls_mask(instance.grid, instance.centers, eps)


def _mask_flag(instance: ProblemInstance, eps: float, core) -> str:
    if core.is_empty:
        return "mask empty"
    if eps < max(instance.grid.h):
        return "eps below mesh width"
    return ""


@dataclass(frozen=True)
class RatioRow:
    eps: float
    h1_ratio: float
    lp_ratio: float
    flag: str = ""


def h1_lp_ratios(gs: GroundState, eps_list: Sequence[float]) -> list[RatioRow]:
    """Exterior share of the energy and of ``int |u|^p`` for each ``eps``.

    For two concentration points the excluded set is the union of both balls.
    """
    inst = gs.instance
    dens = energy_density(gs.u, inst.V_n)
    up = ScalarField(inst.grid, np.abs(gs.u.values) ** inst.p)
    e_tot, p_tot = integrate(dens), integrate(up)
    rows = []
    for eps in eps_list:
        core = _core_mask(inst, eps)
        outside = core.complement()
        rows.append(RatioRow(float(eps), integrate(dens, outside) / e_tot, integrate(up, outside) / p_tot,
                             _mask_flag(inst, eps, core)))
    return rows


@dataclass(frozen=True)
class LqRow:
    q: float
    eps: float
    tail: float
    total: float
    flag: str = ""

    @property
    def ratio(self) -> float:
        return self.tail / self.total if self.total > 0 else 0.0


def scan_q_list(N: int, p, q_list: Sequence) -> list[float]:
    """``q_list`` with ``q*`` added when ``q* >= 1``; sorted, infinity last."""
    qs = {_q_key(q) for q in q_list}
    if any(not q >= 1 for q in qs):
        raise ValueError("every q must be >= 1 or 'inf'")
    qs_star = q_star(N, p)
    if qs_star >= 1:
        qs.add(float(qs_star))
    return sorted(qs)


def lq_tail_scan(gs: GroundState, q_list: Sequence, eps_list: Sequence[float]) -> list[LqRow]:
    """``|u|_{q, outside}`` and ``|u|_q`` per ``(q, eps)``; ``q*`` is always included."""
    inst = gs.instance
    rows = []
    for q in scan_q_list(inst.dim, inst.p, q_list):
        total = lq_norm(gs.u, q)
        for eps in eps_list:
            core = _core_mask(inst, eps)
            rows.append(LqRow(q, float(eps), lq_norm(gs.u, q, core.complement()), total,
                              _mask_flag(inst, eps, core)))
    return rows


@dataclass(frozen=True)
class DecayResult:
    margin: float
    M: float
    R_anchor: float
    alpha_decay: float
    checked_nodes: int


def decay_envelope_check(target, R: float, lam: float, rate_slack: float = 0.0, center=None) -> DecayResult:
    """Smallest gap between the envelope ``M exp(-(1-slack) sqrt(lam) (r - R))`` and ``|u|``.

    ``target`` is a ``GroundState`` or a bare ``ScalarField``. The envelope is
    anchored at ``R_anchor``, the smallest node radius ``>= R``; ``M`` is the
    max of ``|u|`` over the shell ``R_anchor <= r < R_anchor + h`` and the gap
    is taken over nodes beyond that shell. Gaps at rounding level (relative
    to ``M``) are reported as zero. For a ``GroundState`` the grid must be a
    truncated unbounded domain and ``V_n >= lam`` must hold beyond ``R``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0 <= rate_slack < 1:
        raise ValueError("rate_slack must lie in [0, 1)")
    if isinstance(target, GroundState):
        inst = target.instance
        u = target.u
        if not inst.grid.unbounded_truncation:
            raise ValueError("decay check needs a truncated unbounded grid")
        center = inst.centers[0] if center is None else center
        r = inst.grid.distance(center)
        if np.any(inst.V_n.values[r >= R] < lam):
            raise ValueError(f"V_n < {lam} somewhere outside B_{R}")
    else:
        u = target
        center = (0.0,) * u.grid.dim if center is None else center
        r = u.grid.distance(center)
    beyond_R = r >= R
    if not beyond_R.any():
        raise ValueError(f"no nodes beyond R = {R}")
    r_anchor = float(r[beyond_R].min())
    h = max(u.grid.h)
    shell = beyond_R & (r < r_anchor + h * (1 - 1e-9))
    checked = r >= r_anchor + h * (1 - 1e-9)
    if not checked.any():
        raise ValueError(f"no nodes beyond R = {R}")
    absu = np.abs(u.values)
    M = float(absu[shell].max())
    alpha = math.sqrt(lam)
    envelope = M * np.exp(-(1 - rate_slack) * alpha * (r[checked] - r_anchor))
    margin = float(np.min(envelope - absu[checked]))
    if abs(margin) <= 8 * np.finfo(float).eps * M:
        margin = 0.0
    return DecayResult(margin, M, r_anchor, alpha, int(checked.sum()))


@dataclass(frozen=True)
class SingularConstant:
    """``c`` such that ``c |x|^(-beta)`` solves ``-Lap w = -sign delta w^(p-1)`` for ``x != 0``."""

    c: float
    beta: float
    N: int
    p: float
    delta: float
    sign_flipped: bool

    @property
    def sign(self) -> int:
        return -1 if self.sign_flipped else 1

    def profile(self, r):
        return self.c * np.asarray(r, dtype=float) ** (-self.beta)


def singular_constant(N: int, p: float, delta: float) -> SingularConstant:
    """Amplitude of the radial power solution of ``-Lap w = -delta w^(p-1)``.

    Substituting ``w = c r^(-beta)``, ``beta = 2/(p-2)``, and using
    ``Lap r^(-beta) = beta (beta + 2 - N) r^(-beta-2)`` gives
    ``c^(p-2) = beta (beta + 2 - N) / delta``. For ``p > (2N-2)/(N-2)`` the
    bracket is negative and ``c`` solves the equation with ``-delta`` in place
    of ``delta``; that case is returned with ``sign_flipped = True``.
    """
    if N < 3:
        raise ValueError("the power solution needs N >= 3")
    if not p > 2:
        raise ValueError("p must exceed 2")
    if not delta > 0:
        raise ValueError("delta must be positive")
    pe = _exact(p)
    beta = 2 / (pe - 2)
    bracket = beta * (beta + 2 - N)
    if bracket == 0:
        raise ValueError(f"p = {p} is the borderline exponent (2N-2)/(N-2); no nonzero power solution")
    flipped = bracket < 0
    base = abs(bracket) / _exact(delta)
    expo = 1 / (pe - 2)
    if expo.denominator == 1:
        c = float(base ** expo.numerator)
    else:
        c = float(base) ** float(expo)
    return SingularConstant(c, float(beta), int(N), float(p), float(delta), flipped)


@dataclass(frozen=True)
class MassSplit:
    m1: float
    m2: float
    selected: int | None
    j1: float
    j2: float

    @property
    def tie(self) -> bool:
        return self.selected is None


def two_point_mass_split(gs: GroundState, eps: float, tie_tol: float = 1e-9) -> MassSplit:
    """Energy and ``J_n`` fractions inside ``B_eps(x1)`` and ``B_eps(x2)``.

    ``selected`` is 1 or 2 for the ball with the larger energy share, or
    ``None`` when the shares agree to ``tie_tol`` relative.
    """
    inst = gs.instance
    if len(inst.centers) != 2:
        raise ValueError("mass split needs exactly two concentration points")
    b1 = ball_mask(inst.grid, inst.centers[0], eps)
    b2 = ball_mask(inst.grid, inst.centers[1], eps)
    if not (b1 & b2).is_empty or math.dist(*inst.centers) < 2 * eps:
        raise ValueError("the two balls overlap")
    dens = energy_density(gs.u, inst.V_n)
    qu = ScalarField(inst.grid, inst.Q.values * np.abs(gs.u.values) ** inst.p)
    tot, jtot = integrate(dens), integrate(qu)
    m1, m2 = integrate(dens, b1) / tot, integrate(dens, b2) / tot
    j1, j2 = integrate(qu, b1) / jtot, integrate(qu, b2) / jtot
    if abs(m1 - m2) <= tie_tol * max(m1, m2):
        sel = None
    else:
        sel = 1 if m1 > m2 else 2
    return MassSplit(m1, m2, sel, j1, j2)


# ----------------------------------------------------------------------------
# Family study
# ----------------------------------------------------------------------------

@dataclass
class DecaySettings:
    R: float
    lam: float
    rate_slack: float = 0.1


@dataclass
class InstanceDiagnostics:
    n: int
    scale: float
    status: str
    s: float = math.nan
    norm_n: float = math.nan
    w_norm: float = math.nan
    J_v: float = math.nan
    identity_gap: float = math.nan
    residual: float = math.nan
    start_label: str = ""
    ratios: list[RatioRow] = field(default_factory=list)
    lq: list[LqRow] = field(default_factory=list)
    decay: DecayResult | None = None
    split: MassSplit | None = None

    @property
    def solved(self) -> bool:
        return self.status == "solved"

    def ratio_at(self, eps: float) -> RatioRow:
        return next(r for r in self.ratios if r.eps == eps)

    def lq_at(self, q: float, eps: float) -> LqRow:
        return next(r for r in self.lq if r.q == q and r.eps == eps)


def diagnose(gs: GroundState, eps_list, q_list, decay: DecaySettings | None = None,
             split_eps: float | None = None) -> InstanceDiagnostics:
    inst = gs.instance
    nrm = gs.norm_n
    w = ScalarField(inst.grid, gs.u.values / nrm)
    d = InstanceDiagnostics(
        n=inst.n, scale=inst.scale, status="solved", s=gs.s, norm_n=nrm, w_norm=norm_n(w, inst.V_n),
        J_v=J_n(inst, gs.v), identity_gap=abs(gs.alpha_check) / nrm**2, residual=gs.residual,
        start_label=gs.start_label, ratios=h1_lp_ratios(gs, eps_list), lq=lq_tail_scan(gs, q_list, eps_list))
    if decay is not None:
        d.decay = decay_envelope_check(gs, decay.R, decay.lam, decay.rate_slack)
    if len(inst.centers) == 2:
        d.split = two_point_mass_split(gs, split_eps if split_eps is not None else min(eps_list))
    return d


def default_eps_list(family: Sequence[ProblemInstance], count: int = 4) -> list[float]:
    """``eps_1 2^-k`` for ``k = 0..count-1`` restricted to ``eps > 3h``."""
    first = family[0]
    h = max(first.grid.h)
    out = [first.scale * 2.0**-k for k in range(count)]
    return [e for e in out if e > 3 * h]


def _strictly_increasing(xs) -> bool:
    return all(b > a for a, b in zip(xs, xs[1:]))


def _strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


@dataclass
class ConcentrationReport:
    N: int
    p: float
    q_star: Fraction
    eps_list: list[float]
    q_list: list[float]
    rows: list[InstanceDiagnostics]
    threshold: float = 0.9
    verdicts: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def solved(self) -> list[InstanceDiagnostics]:
        return [r for r in self.rows if r.solved]

    def row(self, n: int) -> InstanceDiagnostics:
        return next(r for r in self.rows if r.n == n)

    def series(self, attr: str) -> list[float]:
        return [getattr(r, attr) for r in self.solved]

    def ratio_series(self, eps: float, which: str = "h1_ratio") -> list[float]:
        return [getattr(r.ratio_at(eps), which) for r in self.solved]

    def lq_series(self, q, eps: float, which: str = "total") -> list[float]:
        q = _q_key(q)
        return [getattr(r.lq_at(q, eps), which) for r in self.solved]

    @property
    def passed(self) -> bool:
        applicable = [v for v in self.verdicts.values() if v is not None]
        return bool(applicable) and all(applicable) and all(r.solved for r in self.rows)

    def compute_verdicts(self) -> dict:
        solved = self.solved
        v: dict = {}
        self.notes = [n for n in self.notes if n != "insufficient n"]
        if len(solved) < 2:
            self.notes.append("insufficient n")
            self.verdicts = {"insufficient_n": False}
            return self.verdicts
        eps_ok = [e for e in self.eps_list if all(not r.ratio_at(e).flag for r in solved)]
        qs = float(self.q_star)
        two_point = all(r.split is not None for r in solved)
        v["norm_increasing"] = _strictly_increasing(self.series("norm_n"))
        v["ratios_decreasing"] = all(
            _strictly_decreasing(self.ratio_series(e, "h1_ratio")) and _strictly_decreasing(self.ratio_series(e, "lp_ratio"))
            for e in eps_ok) if eps_ok else None
        above = [q for q in self.q_list if q > qs and q >= 1]
        v["total_q_increasing"] = all(_strictly_increasing(self.lq_series(q, self.eps_list[0])) for q in above) \
            if above else None
        v["tail_ratio_decreasing"] = all(
            _strictly_decreasing([r.lq_at(q, e).ratio for r in solved]) for q in above for e in eps_ok) \
            if above and eps_ok else None
        if qs >= 1:
            tot = self.lq_series(qs, self.eps_list[0])
            v["qstar_bounded_below"] = all(t >= 0.5 * tot[0] for t in tot)
        else:
            v["qstar_bounded_below"] = None
        if any(r.decay is not None for r in solved):
            v["decay_envelope"] = all(r.decay is not None and r.decay.margin >= 0 for r in solved)
        if two_point:
            last = solved[-1].split
            v["single_point"] = max(last.m1, last.m2) >= self.threshold
        if self.N == 2 and self.p == 4:
            self.notes.append("q = 2 is the borderline exponent for N = 2, p = 4; its tail ratio carries no verdict")
        self.verdicts = v
        return v

    # -- serialization ---------------------------------------------------------

    def csv_rows(self) -> list[list[str]]:
        out = []
        for r in self.rows:
            split = r.split
            for eps in self.eps_list:
                rr = r.ratio_at(eps) if r.solved else None
                for q in self.q_list:
                    lq = r.lq_at(q, eps) if r.solved else None
                    out.append([
                        str(r.n), _fmt(eps), q_label(q),
                        _fmt(rr.h1_ratio if rr else math.nan), _fmt(rr.lp_ratio if rr else math.nan),
                        _fmt(lq.tail if lq else math.nan), _fmt(lq.total if lq else math.nan), _fmt(r.norm_n),
                        _fmt(split.m1) if split else "", _fmt(split.m2) if split else "",
                        ("tie" if split.tie else str(split.selected)) if split else "",
                        _fmt(r.decay.margin) if r.decay else "",
                    ])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.csv_rows())
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    def summary(self) -> dict:
        return {
            "N": self.N,
            "p": self.p,
            "q_star": str(self.q_star),
            "eps_list": self.eps_list,
            "q_list": [q_label(q) for q in self.q_list],
            "threshold": self.threshold,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "notes": self.notes,
            "instances": [
                {
                    "n": r.n, "scale": r.scale, "status": r.status, "s": _num(r.s), "norm_n": _num(r.norm_n),
                    "w_norm": _num(r.w_norm), "J_v": _num(r.J_v), "identity_gap": _num(r.identity_gap),
                    "residual": _num(r.residual), "start_label": r.start_label,
                    "decay": asdict(r.decay) if r.decay else None,
                    "split": asdict(r.split) if r.split else None,
                }
                for r in self.rows
            ],
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return path


def _fmt(x: float) -> str:
    return repr(float(x))


def _num(x: float):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def run_concentration_study(family: Sequence[ProblemInstance], solver_config: SolverConfig | None = None,
                            eps_list: Sequence[float] | None = None, q_list: Sequence = (2, 4, "inf"),
                            decay: DecaySettings | None = None, split_eps: float | None = None,
                            threshold: float = 0.9, jobs: int = 1) -> ConcentrationReport:
    """Solve every member, collect diagnostics and derive trend verdicts.

    Failures are recorded per row (``status``) and do not abort the study.
    """
    if not family:
        raise ValueError("empty family")
    cfg = solver_config or SolverConfig()
    eps_list = sorted(float(e) for e in (eps_list if eps_list is not None else default_eps_list(family)))
    if not eps_list:
        raise ValueError("no usable eps (all below 3h)")
    first = family[0]
    qs = scan_q_list(first.dim, first.p, q_list)

    def one(inst: ProblemInstance) -> InstanceDiagnostics:
        if not inst.feasible:
            return InstanceDiagnostics(inst.n, inst.scale, f"infeasible: {inst.status}")
        try:
            gs = solve_ground_state(inst, cfg)
        except (NoAdmissibleStartError, SolverError) as exc:
            log.warning("instance n=%d failed: %s", inst.n, exc)
            return InstanceDiagnostics(inst.n, inst.scale, f"failed: {exc}")
        return diagnose(gs, eps_list, qs, decay, split_eps)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, family))
    else:
        rows = [one(inst) for inst in family]
    rows.sort(key=lambda r: r.n)
    report = ConcentrationReport(first.dim, first.p, q_star(first.dim, first.p), eps_list, qs, rows, threshold)
    report.compute_verdicts()
    return report
