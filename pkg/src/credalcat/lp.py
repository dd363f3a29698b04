"""Small dense linear programming: two-phase primal simplex with Bland's rule.

The LPs solved here come from mode-cell bound computations and have at most a
few dozen variables, so a plain tableau with anti-cycling pivoting is both
sufficient and fully deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Iterator, Mapping, Sequence

import numpy as np

from .model import IntervalPmf

FEASIBILITY_TOL = 1e-8
PIVOT_TOL = 1e-10
MAX_PIVOTS = 20000


class LpError(ValueError):
    """Malformed problem."""


class LpSolverError(RuntimeError):
    """Numerical breakdown; carries pivot diagnostics."""


@dataclass(frozen=True)
class LpConstraint:
    coeffs: Mapping[str, float]
    relation: str  # one of "<=", ">=", "="
    constant: float
    name: str = ""

    def __post_init__(self):
        if self.relation not in ("<=", ">=", "="):
            raise LpError(f"unknown relation {self.relation!r}")


@dataclass(frozen=True)
class LpProblem:
    variables: tuple[str, ...]
    objective: Mapping[str, float]
    sense: str  # "maximize" | "minimize"
    constraints: tuple[LpConstraint, ...]
    lower_bounds: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.sense not in ("maximize", "minimize"):
            raise LpError(f"unknown sense {self.sense!r}")
        declared = set(self.variables)
        if len(declared) != len(self.variables):
            raise LpError("duplicate variable names")
        for name, coef in self.objective.items():
            if name not in declared:
                raise LpError(f"objective references undeclared variable {name!r}")
            if not math.isfinite(coef):
                raise LpError(f"non-finite objective coefficient for {name!r}")
        for c in self.constraints:
            for name, coef in c.coeffs.items():
                if name not in declared:
                    raise LpError(
                        f"constraint {c.name!r} references undeclared variable {name!r}"
                    )
                if not math.isfinite(coef):
                    raise LpError(f"non-finite coefficient in constraint {c.name!r}")
            if not math.isfinite(c.constant):
                raise LpError(f"non-finite constant in constraint {c.name!r}")


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    value: float | None = None
    assignment: Mapping[str, float] | None = None


def lp_text(problem: LpProblem) -> str:
    """Dump in the classic LP text format for external inspection."""

    def expr(coeffs: Mapping[str, float]) -> str:
        parts = []
        for name in problem.variables:
            c = coeffs.get(name, 0.0)
            if c == 0.0:
                continue
            sign = "+" if c >= 0 else "-"
            parts.append(f"{sign} {abs(c):.12g} {name}")
        text = " ".join(parts) or "0"
        return text[2:] if text.startswith("+ ") else text

    lines = [problem.sense.capitalize(), f"  obj: {expr(problem.objective)}", "Subject To"]
    for i, c in enumerate(problem.constraints):
        rel = {"<=": "<=", ">=": ">=", "=": "="}[c.relation]
        lines.append(f"  {c.name or f'c{i}'}: {expr(c.coeffs)} {rel} {c.constant:.12g}")
    lines.append("Bounds")
    for name in problem.variables:
        lines.append(f"  {name} >= {problem.lower_bounds.get(name, 0.0):.12g}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def _bland_simplex(
    tableau: np.ndarray, basis: list[int], cost: np.ndarray, ncols: int
) -> tuple[str, int]:
    """Minimize cost over the tableau in place; returns (status, pivots)."""
    nrows = tableau.shape[0]
    # Reduced-cost row: z_j = c_j - c_B . B^-1 A_j, kept updated alongside.
    z = cost[:ncols].astype(float).copy()
    for r, b in enumerate(basis):
        if cost[b] != 0.0:
            z -= cost[b] * tableau[r, :ncols]
    pivots = 0
    while True:
        entering = -1
        for j in range(ncols):
            if z[j] < -FEASIBILITY_TOL:
                entering = j
                break  # Bland: smallest improving index
        if entering < 0:
            return "optimal", pivots
        ratios = []
        for r in range(nrows):
            a = tableau[r, entering]
            if a > PIVOT_TOL:
                ratios.append((tableau[r, -1] / a, basis[r], r))
        if not ratios:
            return "unbounded", pivots
        ratios.sort(key=lambda t: (t[0], t[1]))  # Bland: smallest basic index on ties
        _, _, leaving_row = ratios[0]
        pivot = tableau[leaving_row, entering]
        tableau[leaving_row] /= pivot
        for r in range(nrows):
            if r != leaving_row and abs(tableau[r, entering]) > 0.0:
                tableau[r] -= tableau[r, entering] * tableau[leaving_row]
        z = z - z[entering] * tableau[leaving_row, :ncols]
        basis[leaving_row] = entering
        pivots += 1
        if pivots > MAX_PIVOTS:
            raise LpSolverError(
                f"simplex exceeded {MAX_PIVOTS} pivots "
                f"(rows={nrows}, cols={ncols}); tableau may be degenerate"
            )


def solve(problem: LpProblem) -> LpSolution:
    """Solve a small LP; deterministic for a fixed problem."""
    n = len(problem.variables)
    index = {name: i for i, name in enumerate(problem.variables)}
    lb = np.array([problem.lower_bounds.get(v, 0.0) for v in problem.variables])

    # Shift x = y + lb, y >= 0, and bring every row to b >= 0.
    rows = []
    for c in problem.constraints:
        a = np.zeros(n)
        for name, coef in c.coeffs.items():
            a[index[name]] = coef
        b = c.constant - float(a @ lb)
        rel = c.relation
        if b < 0:
            a, b = -a, -b
            rel = {"<=": ">=", ">=": "<=", "=": "="}[rel]
        rows.append((a, rel, b))

    m = len(rows)
    n_slack = sum(1 for _, rel, _ in rows if rel != "=")
    n_art = sum(1 for _, rel, _ in rows if rel != "<=")
    ncols = n + n_slack + n_art
    tableau = np.zeros((m, ncols + 1))
    basis: list[int] = []
    slack_i, art_i = n, n + n_slack
    artificial_cols = []
    for r, (a, rel, b) in enumerate(rows):
        tableau[r, :n] = a
        tableau[r, -1] = b
        if rel == "<=":
            tableau[r, slack_i] = 1.0
            basis.append(slack_i)
            slack_i += 1
        elif rel == ">=":
            tableau[r, slack_i] = -1.0
            slack_i += 1
            tableau[r, art_i] = 1.0
            basis.append(art_i)
            artificial_cols.append(art_i)
            art_i += 1
        else:
            tableau[r, art_i] = 1.0
            basis.append(art_i)
            artificial_cols.append(art_i)
            art_i += 1

    if artificial_cols:
        phase1_cost = np.zeros(ncols + 1)
        phase1_cost[artificial_cols] = 1.0
        status, _ = _bland_simplex(tableau, basis, phase1_cost, ncols)
        if status != "optimal":
            raise LpSolverError("phase-1 reported unbounded; problem is malformed")
        art_set = set(artificial_cols)
        infeas = sum(tableau[r, -1] for r, b in enumerate(basis) if b in art_set)
        if infeas > FEASIBILITY_TOL:
            return LpSolution(status="infeasible")
        # Pivot remaining artificials out of the basis, or drop redundant rows.
        drop_rows = []
        for r, b in enumerate(basis):
            if b not in art_set:
                continue
            entering = next(
                (
                    j
                    for j in range(n + n_slack)
                    if abs(tableau[r, j]) > PIVOT_TOL
                ),
                -1,
            )
            if entering < 0:
                drop_rows.append(r)
                continue
            pivot = tableau[r, entering]
            tableau[r] /= pivot
            for rr in range(m):
                if rr != r and abs(tableau[rr, entering]) > 0.0:
                    tableau[rr] -= tableau[rr, entering] * tableau[r]
            basis[r] = entering
        if drop_rows:
            keep = [r for r in range(m) if r not in set(drop_rows)]
            tableau = tableau[keep]
            basis = [basis[r] for r in keep]
            m = len(keep)
        # Zero out artificial columns so they can never re-enter.
        tableau[:, artificial_cols] = 0.0

    cost = np.zeros(ncols + 1)
    for name, coef in problem.objective.items():
        cost[index[name]] = coef if problem.sense == "minimize" else -coef
    status, _ = _bland_simplex(tableau, basis, cost, n + n_slack)
    if status == "unbounded":
        return LpSolution(status="unbounded")

    y = np.zeros(ncols)
    for r, b in enumerate(basis):
        y[b] = tableau[r, -1]
    x = y[:n] + lb
    assignment = {name: float(x[i]) for name, i in index.items()}
    value = sum(problem.objective.get(v, 0.0) * assignment[v] for v in problem.variables)
    return LpSolution(status="optimal", value=float(value), assignment=assignment)


# -- mode-cell bound problems ------------------------------------------------


@dataclass(frozen=True)
class ModeAssignment:
    """Per question state, the skill-state index designated as the mode."""

    jhat: tuple[int, ...]


def enumerate_mode_assignments(m: int, n: int) -> Iterator[ModeAssignment]:
    """All m**n ways to assign a modal skill state to each answer state."""
    for combo in product(range(m), repeat=n):
        yield ModeAssignment(combo)


def var_name(i: int, j: int) -> str:
    return f"x_{i}_{j}"


def build_mode_cell_problem(
    skill_bounds: IntervalPmf,
    question_row_bounds: Sequence[IntervalPmf],
    mode: ModeAssignment,
    sense: str,
) -> LpProblem:
    """LP over the joint cells x[i][j] = P(q_i, s_j) for one mode cell.

    ``question_row_bounds[j]`` holds the interval row P(Q | s_j). The
    constraints are: the cells sum to one and are non-negative; the skill
    marginals respect the skill bounds; each cell respects the linearized
    row-interval constraints l*sum_k x[k][j] <= x[i][j] <= u*sum_k x[k][j];
    and within every answer state the designated mode cell dominates.
    """
    m = len(skill_bounds.lower)
    if len(question_row_bounds) != m:
        raise LpError(
            f"need one question row per skill state: got {len(question_row_bounds)}, "
            f"expected {m}"
        )
    n = len(question_row_bounds[0].lower)
    for row in question_row_bounds:
        if len(row.lower) != n:
            raise LpError("question rows disagree on the number of answer states")
    if len(mode.jhat) != n:
        raise LpError(f"mode assignment needs {n} entries, got {len(mode.jhat)}")
    for j in mode.jhat:
        if not (0 <= j < m):
            raise LpError(f"mode index {j} outside skill states 0..{m - 1}")

    variables = tuple(var_name(i, j) for i in range(n) for j in range(m))
    objective = {var_name(i, mode.jhat[i]): 1.0 for i in range(n)}
    constraints: list[LpConstraint] = [
        LpConstraint({v: 1.0 for v in variables}, "=", 1.0, "mass")
    ]
    for j in range(m):
        col = {var_name(i, j): 1.0 for i in range(n)}
        constraints.append(
            LpConstraint(col, ">=", skill_bounds.lower[j], f"skill_lo_{j}")
        )
        constraints.append(
            LpConstraint(col, "<=", skill_bounds.upper[j], f"skill_hi_{j}")
        )
    for i in range(n):
        for j in range(m):
            lo = question_row_bounds[j].lower[i]
            hi = question_row_bounds[j].upper[i]
            lo_coeffs = {var_name(k, j): lo for k in range(n)}
            lo_coeffs[var_name(i, j)] = lo - 1.0
            constraints.append(LpConstraint(lo_coeffs, "<=", 0.0, f"row_lo_{i}_{j}"))
            hi_coeffs = {var_name(k, j): hi for k in range(n)}
            hi_coeffs[var_name(i, j)] = hi - 1.0
            constraints.append(LpConstraint(hi_coeffs, ">=", 0.0, f"row_hi_{i}_{j}"))
    for i in range(n):
        for j in range(m):
            # The j == jhat[i] row is the vacuous x >= x, kept so the emitted
            # problem matches the documented schema one-to-one.
            coeffs = (
                {}
                if j == mode.jhat[i]
                else {var_name(i, mode.jhat[i]): 1.0, var_name(i, j): -1.0}
            )
            constraints.append(LpConstraint(coeffs, ">=", 0.0, f"mode_{i}_{j}"))
    return LpProblem(variables, objective, sense, tuple(constraints))
