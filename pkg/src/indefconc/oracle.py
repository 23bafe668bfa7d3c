"""Independent checks for the grid solver.

* ``shoot_1d``: even 1D ground states from the ODE ``-u'' + V u = Q |u|^(p-2) u``
  with ``u'(0) = 0``, classical RK4 and bisection on ``u(0)`` for
  ``u(L) = 0``. It never touches the finite-difference operator.
* ``dense_min_eig``: Householder tridiagonalization followed by Sturm-count
  bisection, for small grids.
* ``minimality_probe``: random smooth perturbations of a candidate minimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline

from .mesh import Grid, ScalarField, build_grid
from .problem import ProblemInstance
from .solver import InadmissibleDirectionError, _Workspace, rayleigh


class NoBracketError(ValueError):
    pass


class BlowUpError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EvenProblem1D:
    """Even piecewise-constant coefficients on ``(-L, L)``.

    ``q_pieces`` and ``v_pieces`` are ``(x_end, value)`` pairs covering
    ``[0, L]`` in increasing order; the last ``x_end`` must equal ``L``.
    """

    half_width: float
    p: float
    q_pieces: tuple[tuple[float, float], ...]
    v_pieces: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        v = self.v_pieces or ((self.half_width, 0.0),)
        object.__setattr__(self, "v_pieces", tuple((float(a), float(b)) for a, b in v))
        object.__setattr__(self, "q_pieces", tuple((float(a), float(b)) for a, b in self.q_pieces))
        for pieces in (self.q_pieces, self.v_pieces):
            ends = [e for e, _ in pieces]
            if any(b <= a for a, b in zip(ends, ends[1:])) or abs(ends[-1] - self.half_width) > 1e-14:
                raise ValueError("pieces must be increasing and end at the half width")

    def segments(self) -> list[tuple[float, float, float, float]]:
        """``(x_start, x_end, V, Q)`` on each interval where both are constant."""
        cuts = sorted({0.0, *(e for e, _ in self.q_pieces), *(e for e, _ in self.v_pieces)})
        out = []
        for a, b in zip(cuts, cuts[1:]):
            mid = 0.5 * (a + b)
            out.append((a, b, _lookup(self.v_pieces, mid), _lookup(self.q_pieces, mid)))
        return out

    def Q(self, x) -> np.ndarray:
        return np.vectorize(lambda t: _lookup(self.q_pieces, abs(t)))(x)

    def V(self, x) -> np.ndarray:
        return np.vectorize(lambda t: _lookup(self.v_pieces, abs(t)))(x)


def _lookup(pieces, x: float) -> float:
    for end, val in pieces:
        if x < end:
            return val
    return pieces[-1][1]


def shrinking_ball_1d(eps: float, q_plus: float = 1.0, q_minus: float = -1.0, half_width: float = 1.0,
                      p: float = 4.0, v_pieces=()) -> EvenProblem1D:
    return EvenProblem1D(half_width, p, ((eps, q_plus), (half_width, q_minus)), tuple(v_pieces))


_BLOWUP = 1e8


def _integrate(problem: EvenProblem1D, u0: np.ndarray, rk_step: float, keep: bool = False):
    """RK4 for a batch of initial values; returns end values (and samples if ``keep``)."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _integrate_raw(problem, u0, rk_step, keep)


def _integrate_raw(problem, u0, rk_step, keep):
    u = np.array(u0, dtype=float)
    du = np.zeros_like(u)
    alive = np.ones(u.shape, dtype=bool)
    p = problem.p
    xs, us, dus = ([0.0], [u.copy()], [du.copy()]) if keep else (None, None, None)

    for a, b, Vc, Qc in problem.segments():
        m = max(1, math.ceil((b - a) / rk_step - 1e-9))
        hh = (b - a) / m

        def acc(y):
            return Vc * y - Qc * np.abs(y) ** (p - 2) * y

        for k in range(m):
            k1u, k1v = du, acc(u)
            k2u, k2v = du + 0.5 * hh * k1v, acc(u + 0.5 * hh * k1u)
            k3u, k3v = du + 0.5 * hh * k2v, acc(u + 0.5 * hh * k2u)
            k4u, k4v = du + hh * k3v, acc(u + hh * k3u)
            u_new = u + hh / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
            du_new = du + hh / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            u = np.where(alive, u_new, u)
            du = np.where(alive, du_new, du)
            blown = alive & ~(np.abs(u) <= _BLOWUP)
            if blown.any():
                u = np.where(blown, np.where(u_new < 0, -_BLOWUP, _BLOWUP), u)
                du = np.where(blown, 0.0, du)
                alive &= ~blown
            if keep:
                xs.append(a + (k + 1) * hh)
                us.append(u.copy())
                dus.append(du.copy())
    if keep:
        return u, alive, (np.array(xs), np.array(us), np.array(dus))
    return u, alive


def find_bracket(problem: EvenProblem1D, u0_min: float = 1e-3, u0_max: float = 1e3, samples: int = 241,
                 rk_step: float = 1e-3) -> tuple[float, float]:
    """First sign change of ``u0 -> u(L; u0)`` on a log-spaced scan."""
    grid = np.geomspace(u0_min, u0_max, samples)
    end, _ = _integrate(problem, grid, rk_step)
    sign = np.sign(end)
    idx = np.flatnonzero((sign[:-1] > 0) & (sign[1:] <= 0))
    if idx.size == 0:
        raise NoBracketError("boundary mismatch does not change sign on the scanned range")
    return float(grid[idx[0]]), float(grid[idx[0] + 1])


@dataclass
class ShootingResult:
    u0: float
    x: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    du: np.ndarray = field(repr=False)
    s_value: float
    match_norm: float
    problem: EvenProblem1D
    rk_step: float

    @property
    def profile(self) -> tuple[np.ndarray, np.ndarray]:
        return self.x, self.u

    def on_grid(self, grid: Grid) -> ScalarField:
        """Cubic Hermite interpolation of the profile onto the grid nodes."""
        spline = CubicHermiteSpline(self.x, self.u, self.du)
        return ScalarField(grid, spline(grid.points[:, 0]))


def shoot_1d(problem: EvenProblem1D, u0_bracket: tuple[float, float] | None = None, rk_step: float = 1e-4,
             tol: float = 1e-10, sections: int = 16, max_rounds: int = 60) -> ShootingResult:
    """Positive even solution with ``u(L) = 0``.

    Each bisection round evaluates ``sections - 1`` interior points of the
    bracket at once and keeps the first sign change.
    """
    lo, hi = u0_bracket if u0_bracket is not None else find_bracket(problem)
    f_lo, _ = _integrate(problem, np.array([lo, hi]), rk_step)
    if not (f_lo[0] > 0 >= f_lo[1]):
        raise NoBracketError(f"mismatch does not change sign on [{lo}, {hi}]")
    best, best_f = lo, f_lo[0]
    for _ in range(max_rounds):
        pts = np.linspace(lo, hi, sections + 1)
        vals, alive = _integrate(problem, pts, rk_step)
        k = int(np.argmin(np.abs(np.where(alive, vals, np.inf))))
        if abs(vals[k]) < abs(best_f):
            best, best_f = float(pts[k]), float(vals[k])
        if abs(best_f) < tol:
            break
        change = np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0))
        if change.size == 0:
            break
        lo, hi = float(pts[change[0]]), float(pts[change[0] + 1])
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    end, alive, (xs, us, dus) = _integrate(problem, np.array([best]), rk_step, keep=True)
    if not alive[0]:
        raise BlowUpError(f"trajectory from u0={best} blew up")
    u, du = us[:, 0], dus[:, 0]
    if np.any(u < -1e-8):
        raise NoBracketError("the located solution changes sign; the bracket missed the ground state")
    s_value = _rayleigh_of_profile(problem, xs, u, du)
    # even extension to (-L, L); drop repeated breakpoints
    keep = np.concatenate([[True], np.diff(xs) > 0])
    xs, u, du = xs[keep], u[keep], du[keep]
    x_full = np.concatenate([-xs[:0:-1], xs])
    u_full = np.concatenate([u[:0:-1], u])
    du_full = np.concatenate([-du[:0:-1], du])
    return ShootingResult(best, x_full, u_full, du_full, s_value, abs(float(end[0])), problem, rk_step)


def _rayleigh_of_profile(problem: EvenProblem1D, xs, u, du) -> float:
    energy, J = 0.0, 0.0
    start = 0
    for a, b, Vc, Qc in problem.segments():
        stop = start + 1
        while stop < len(xs) and xs[stop] < b - 1e-12:
            stop += 1
        sl = slice(start, stop + 1)
        x, y, dy = xs[sl], u[sl], du[sl]
        energy += simpson(dy**2 + Vc * y**2, x=x)
        J += simpson(Qc * np.abs(y) ** problem.p, x=x)
        start = stop
    energy, J = 2 * energy, 2 * J
    if not J > 0:
        raise ValueError("profile has J <= 0")
    return float(energy / J ** (2.0 / problem.p))


def grid_instance(problem: EvenProblem1D, n_nodes: int) -> ProblemInstance:
    """Node sampling of ``problem`` on ``(-L, L)`` with ``n_nodes`` nodes."""
    from .problem import make_instance
    L = problem.half_width
    grid = build_grid(1, -L, L, n_nodes)
    x = grid.points[:, 0]
    return make_instance(grid, ScalarField(grid, problem.V(x)), ScalarField(grid, problem.Q(x)), problem.p, [0.0],
                         scale=problem.q_pieces[0][0])


# ----------------------------------------------------------------------------
# Dense eigenvalue oracle
# ----------------------------------------------------------------------------

DENSE_MAX_NODES = 200


def householder_tridiagonal(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of a symmetric matrix reduced by Householder reflections."""
    A = np.array(M, dtype=float)
    n = A.shape[0]
    for k in range(n - 2):
        x = A[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        # A <- H A H with H = I - 2 v v^T acting on rows/cols k+1..n-1
        A[k + 1:, :] -= 2.0 * np.outer(v, v @ A[k + 1:, :])
        A[:, k + 1:] -= 2.0 * np.outer(A[:, k + 1:] @ v, v)
    return np.diag(A).copy(), np.diag(A, 1).copy()


def _sturm_count(d: np.ndarray, e: np.ndarray, x: float) -> int:
    """Number of eigenvalues of the tridiagonal matrix below ``x``."""
    count = 0
    q = d[0] - x
    # pivot floor keeps the recurrence finite when a pivot vanishes
    pivmin = np.finfo(float).eps * max(1.0, float(np.max(e**2, initial=0.0)))
    if q < 0:
        count += 1
    for i in range(1, d.size):
        if abs(q) < pivmin:
            q = -pivmin
        q = d[i] - x - e[i - 1] ** 2 / q
        if q < 0:
            count += 1
    return count


def dense_min_eig(V: ScalarField) -> float:
    """Smallest eigenvalue of ``-Lap_h + V`` by dense reduction (grids up to 200 nodes)."""
    grid = V.grid
    if grid.size > DENSE_MAX_NODES:
        raise ValueError(f"dense oracle limited to {DENSE_MAX_NODES} nodes, grid has {grid.size}")
    M = grid.laplacian().toarray() + np.diag(V.values)
    d, e = householder_tridiagonal(M)
    # Gershgorin interval
    off = np.abs(np.concatenate([[0.0], e])) + np.abs(np.concatenate([e, [0.0]]))
    lo, hi = float(np.min(d - off)), float(np.max(d + off))
    while hi - lo > 4 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _sturm_count(d, e, mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------------
# Minimality probe
# ----------------------------------------------------------------------------

def minimality_probe(instance: ProblemInstance, v_star: ScalarField, trials: int = 100, t: float = 1e-3,
                     seed: int = 0) -> float:
    """``max_k rayleigh(v*) - rayleigh(v* + t d_k)`` over random unit perturbations.

    Perturbations are smoothed white noise (one application of the inverse
    operator), normalized in discrete L^2. Inadmissible perturbed fields
    count as no violation.
    """
    if t == 0:
        return 0.0
    ws = _Workspace(instance)
    rng = np.random.default_rng(seed)
    base = rayleigh(instance, v_star)
    worst = -float("inf")
    for _ in range(trials):
        d = ws.precond(rng.standard_normal(instance.grid.size))
        d /= math.sqrt(float(d @ d) * instance.grid.cell_volume)
        try:
            val = rayleigh(instance, ScalarField(instance.grid, v_star.values + t * d))
        except InadmissibleDirectionError:
            continue
        worst = max(worst, base - val)
    return worst if worst > -float("inf") else 0.0


def even_problem_from_family(spec, grid: Grid, n: int) -> EvenProblem1D:
    """Piecewise-constant 1D problem for member ``n`` of a centered single-ball family.

    ``spec`` is a ``FamilySpec`` of kind ``shrinking_ball`` on a symmetric
    interval, centered at 0, with a constant or well potential.
    """
    from .problem import expand_sequence
    if grid.dim != 1 or spec.kind != "shrinking_ball":
        raise ValueError("the shooting oracle handles 1D shrinking-ball families only")
    L = grid.hi[0]
    if abs(grid.lo[0] + L) > 1e-14 * L:
        raise ValueError("the shooting oracle needs a symmetric interval")
    prm = spec.params
    if float(np.ravel(prm.get("center", [0.0]))[0]) != 0.0:
        raise ValueError("the shooting oracle needs the ball centered at 0")
    if "K" in prm and prm["K"].get("amplitude", 0.0) != 0.0:
        raise ValueError("the shooting oracle does not handle K_n")
    eps = expand_sequence(prm["eps"])
    k = n - spec.n_start
    if not 0 <= k < len(eps):
        raise IndexError(f"n={n} outside the family")
    V = spec.V
    vp = V.get("params", {})
    if V["kind"] == "constant":
        v_pieces = ((L, vp.get("value", 0.0)),)
    elif V["kind"] == "well" and float(np.ravel(vp.get("center", [0.0]))[0]) == 0.0:
        v_pieces = ((vp["radius"], vp.get("inner", 0.0)), (L, vp["outer"]))
    else:
        raise ValueError("the shooting oracle needs a constant or centered well potential")
    return EvenProblem1D(L, spec.p, ((eps[k], prm["q_plus"]), (L, prm["q_minus"])), v_pieces)


def save_oracle(result: ShootingResult, grid: Grid, stem) -> dict:
    """Dump the interpolated profile with an ``oracle`` provenance tag."""
    from .fieldio import save_field
    meta = {"provenance": "oracle", "u0": result.u0, "s_value": result.s_value,
            "match_norm": result.match_norm, "rk_step": result.rk_step}
    save_field(result.on_grid(grid), stem, name="u", extra=meta)
    return meta
