"""Model representation: skills, questions, CPTs and their credal (interval) variants.

A test model is a directed acyclic graph whose internal nodes are latent
skill variables and whose leaves are observable question variables. Each
variable carries a conditional probability table; in the credal variant the
table rows are probability intervals instead of sharp values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Mapping, Sequence

SKILL = "skill"
QUESTION = "question"
ROLES = (SKILL, QUESTION)

PMF_SUM_TOL = 1e-9
FORMAT_VERSION = 1


class ModelError(ValueError):
    """Invalid model construction or use."""


class ModelFormatError(ModelError):
    """Unparseable or schema-violating model document; carries field context."""

    def __init__(self, message: str, *, where: str = ""):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class Variable:
    """A discrete variable with an explicit, ordered state space."""

    id: str
    name: str
    states: tuple[str, ...]
    role: str

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))
        if len(self.states) < 2:
            raise ModelError(f"variable {self.id!r}: needs at least 2 states")
        if len(set(self.states)) != len(self.states):
            raise ModelError(f"variable {self.id!r}: duplicate state labels")
        if self.role not in ROLES:
            raise ModelError(f"variable {self.id!r}: unknown role {self.role!r}")

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def state_index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise ModelError(
                f"variable {self.id!r}: unknown state {state!r} "
                f"(expected one of {list(self.states)})"
            ) from None


@dataclass(frozen=True)
class Pmf:
    """A probability mass function over the states of one variable.

    Numeric invariants (entries in [0,1] summing to one) are checked by
    :meth:`violations` rather than at construction, so that invalid rows can
    be represented and reported by model validation.
    """

    over: str
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    def violations(self) -> list[str]:
        out = []
        if any(p < 0 for p in self.probs):
            out.append("negative probability entry")
        if abs(sum(self.probs) - 1.0) > PMF_SUM_TOL:
            out.append(f"entries sum to {sum(self.probs):.12g}, expected 1")
        return out

    def prob(self, index: int) -> float:
        return self.probs[index]


@dataclass(frozen=True)
class IntervalPmf:
    """Per-state probability intervals [lower, upper] over one variable."""

    over: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(p) for p in self.lower))
        object.__setattr__(self, "upper", tuple(float(p) for p in self.upper))
        if len(self.lower) != len(self.upper):
            raise ModelError(f"interval row over {self.over!r}: bound length mismatch")

    def violations(self, tol: float = 1e-9) -> list[str]:
        out = []
        for lo, hi in zip(self.lower, self.upper):
            if not (-tol <= lo <= hi <= 1 + tol):
                out.append(f"bad interval [{lo:.12g}, {hi:.12g}]")
                break
        if sum(self.lower) > 1 + tol or sum(self.upper) < 1 - tol:
            out.append("interval set is empty (sum of lowers > 1 or of uppers < 1)")
        elif not self.is_reachable(tol):
            out.append("intervals are not reachable (some bound is unattainable)")
        return out

    def is_reachable(self, tol: float = 1e-9) -> bool:
        lo_sum, hi_sum = sum(self.lower), sum(self.upper)
        for lo, hi in zip(self.lower, self.upper):
            if lo + (hi_sum - hi) < 1 - tol:
                return False
            if hi + (lo_sum - lo) > 1 + tol:
                return False
        return True

    def tightened(self) -> "IntervalPmf":
        """Shrink bounds to their reachable (coherent) normal form."""
        lo_sum, hi_sum = sum(self.lower), sum(self.upper)
        if lo_sum > 1 + 1e-12 or hi_sum < 1 - 1e-12:
            raise ModelError(f"interval row over {self.over!r}: empty credal set")
        lower = tuple(
            max(lo, 1.0 - (hi_sum - hi)) for lo, hi in zip(self.lower, self.upper)
        )
        upper = tuple(
            min(hi, 1.0 - (lo_sum - lo)) for lo, hi in zip(self.lower, self.upper)
        )
        return IntervalPmf(self.over, lower, upper)

    def contains(self, probs: Sequence[float], tol: float = 1e-9) -> bool:
        return all(
            lo - tol <= p <= hi + tol
            for p, lo, hi in zip(probs, self.lower, self.upper)
        )

    def vertices(self, tol: float = 1e-12) -> list[tuple[float, ...]]:
        """Extreme points of {p : lower <= p <= upper, sum(p) = 1}.

        Every vertex has at most one coordinate strictly between its bounds,
        so enumerating, per free coordinate, all lower/upper assignments of
        the remaining ones covers all vertices.
        """
        k = len(self.lower)
        seen: dict[tuple[float, ...], None] = {}
        for free in range(k):
            others = [i for i in range(k) if i != free]
            for picks in product((0, 1), repeat=k - 1):
                p = [0.0] * k
                for i, side in zip(others, picks):
                    p[i] = self.upper[i] if side else self.lower[i]
                rest = 1.0 - sum(p[i] for i in others)
                if self.lower[free] - tol <= rest <= self.upper[free] + tol:
                    p[free] = min(max(rest, self.lower[free]), self.upper[free])
                    key = tuple(round(v, 12) for v in p)
                    seen.setdefault(key, None)
        return [tuple(v) for v in seen]

    def midpoint_pmf(self) -> Pmf:
        mid = [(lo + hi) / 2.0 for lo, hi in zip(self.lower, self.upper)]
        total = sum(mid)
        return Pmf(self.over, tuple(m / total for m in mid))


@dataclass(frozen=True)
class Cpt:
    """Conditional probability table: one Pmf row per parent configuration."""

    child: str
    parents: tuple[str, ...]
    rows: Mapping[tuple[str, ...], Pmf]

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(
            self, "rows", {tuple(k): v for k, v in dict(self.rows).items()}
        )

    def row(self, config: Sequence[str]) -> Pmf:
        return self.rows[tuple(config)]


@dataclass(frozen=True)
class CredalCpt:
    """Interval-valued conditional probability table (CCPT)."""

    child: str
    parents: tuple[str, ...]
    rows: Mapping[tuple[str, ...], IntervalPmf]

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(
            self, "rows", {tuple(k): v for k, v in dict(self.rows).items()}
        )

    def row(self, config: Sequence[str]) -> IntervalPmf:
        return self.rows[tuple(config)]


@dataclass(frozen=True)
class QuestionParams:
    """Difficulty/discrimination parametrization of a Boolean question.

    delta is the average probability of a wrong answer across skill values;
    kappa the gap between the right-answer probabilities of skilled and
    unskilled takers. kappa >= 0 is a rationality requirement: possessing the
    skill must not make a correct answer less likely.
    """

    delta: float
    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ModelError(f"kappa={self.kappa} violates the rationality constraint")
        for label, p in (("S=1", self.p_right_skilled), ("S=0", self.p_right_unskilled)):
            if not (0.0 <= p <= 1.0):
                raise ModelError(
                    f"(delta={self.delta}, kappa={self.kappa}) puts row {label} "
                    f"probability {p:.6g} outside [0, 1]"
                )

    @property
    def p_right_skilled(self) -> float:
        return (1.0 - self.delta) + self.kappa / 2.0

    @property
    def p_right_unskilled(self) -> float:
        return (1.0 - self.delta) - self.kappa / 2.0


@dataclass(frozen=True)
class PerturbationSpec:
    """Half-width of the interval put around every sharp parameter."""

    epsilon: float
    clip: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ModelError("epsilon must be >= 0")


@dataclass(frozen=True)
class Violation:
    """One validation finding: which object broke which rule."""

    subject: str
    rule: str
    detail: str

    def __str__(self):
        return f"[{self.rule}] {self.subject}: {self.detail}"


class NetworkModel:
    """A Bayesian or credal network over skill and question variables.

    Immutable after construction; safe to share across threads. Structural
    indexes (parents, children, topological order) are precomputed.
    """

    def __init__(
        self,
        variables: Sequence[Variable],
        edges: Iterable[tuple[str, str]],
        tables: Mapping[str, Cpt | CredalCpt],
        kind: str,
    ):
        if kind not in ("bayesian", "credal"):
            raise ModelError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.variables = tuple(variables)
        self.edges = tuple((str(a), str(b)) for a, b in edges)
        self.tables = dict(tables)
        self._by_id = {v.id: v for v in self.variables}
        if len(self._by_id) != len(self.variables):
            raise ModelError("duplicate variable ids")
        for a, b in self.edges:
            if a not in self._by_id or b not in self._by_id:
                raise ModelError(f"edge ({a!r}, {b!r}) references unknown variable")
        self._parents: dict[str, tuple[str, ...]] = {v.id: () for v in self.variables}
        self._children: dict[str, tuple[str, ...]] = {v.id: () for v in self.variables}
        for a, b in self.edges:
            self._parents[b] = self._parents[b] + (a,)
            self._children[a] = self._children[a] + (b,)
        self._topo = self._topological_order()

    # -- structure ---------------------------------------------------------

    def variable(self, var_id: str) -> Variable:
        try:
            return self._by_id[var_id]
        except KeyError:
            raise ModelError(f"unknown variable {var_id!r}") from None

    def has_variable(self, var_id: str) -> bool:
        return var_id in self._by_id

    def states(self, var_id: str) -> tuple[str, ...]:
        return self.variable(var_id).states

    def parents(self, var_id: str) -> tuple[str, ...]:
        return self._parents[var_id]

    def children(self, var_id: str) -> tuple[str, ...]:
        return self._children[var_id]

    def skills(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variables if v.role == SKILL)

    def questions(self) -> tuple[str, ...]:
        return tuple(v.id for v in self.variables if v.role == QUESTION)

    def table(self, var_id: str) -> Cpt | CredalCpt:
        try:
            return self.tables[var_id]
        except KeyError:
            raise ModelError(f"variable {var_id!r} has no table") from None

    def topological_order(self) -> tuple[str, ...] | None:
        """Variable ids in parent-before-child order, or None on a cycle."""
        return self._topo

    def _topological_order(self) -> tuple[str, ...] | None:
        indeg = {v.id: len(self._parents[v.id]) for v in self.variables}
        ready = [v.id for v in self.variables if indeg[v.id] == 0]
        order: list[str] = []
        while ready:
            n = ready.pop(0)
            order.append(n)
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return tuple(order) if len(order) == len(self.variables) else None

    def parent_configs(self, var_id: str) -> list[tuple[str, ...]]:
        """All parent-state configurations, row-major over the parent order."""
        spaces = [self.states(p) for p in self.parents(var_id)]
        return [tuple(c) for c in product(*spaces)] if spaces else [()]

    def require_valid(self):
        problems = validate(self)
        if problems:
            listing = "; ".join(str(p) for p in problems[:5])
            more = "" if len(problems) <= 5 else f" (+{len(problems) - 5} more)"
            raise ModelError(f"invalid model: {listing}{more}")

    def __repr__(self):
        return (
            f"NetworkModel(kind={self.kind!r}, "
            f"skills={len(self.skills())}, questions={len(self.questions())})"
        )


def validate(model: NetworkModel) -> list[Violation]:
    """Check every structural and numeric invariant; violations are data."""
    out: list[Violation] = []

    if model.topological_order() is None:
        out.append(Violation("graph", "acyclicity", "edges contain a directed cycle"))

    for v in model.variables:
        if v.role == QUESTION:
            if model.children(v.id):
                out.append(
                    Violation(v.id, "question-leaf", "question has outgoing edges")
                )
            bad_parents = [
                p for p in model.parents(v.id) if model.variable(p).role != SKILL
            ]
            if bad_parents:
                out.append(
                    Violation(
                        v.id,
                        "question-parents",
                        f"non-skill parents: {bad_parents}",
                    )
                )

    expected_kind = Cpt if model.kind == "bayesian" else CredalCpt
    for v in model.variables:
        if v.id not in model.tables:
            out.append(Violation(v.id, "table-missing", "no table for variable"))
            continue
        table = model.tables[v.id]
        if not isinstance(table, expected_kind):
            out.append(
                Violation(
                    v.id,
                    "table-kind",
                    f"{type(table).__name__} in a {model.kind} model",
                )
            )
            continue
        if table.parents != model.parents(v.id):
            out.append(
                Violation(
                    v.id,
                    "table-parents",
                    f"table parents {list(table.parents)} != "
                    f"graph parents {list(model.parents(v.id))}",
                )
            )
            continue
        configs = model.parent_configs(v.id)
        missing = [c for c in configs if c not in table.rows]
        extra = [c for c in table.rows if c not in set(configs)]
        if missing:
            out.append(
                Violation(v.id, "table-complete", f"missing rows for {missing[:3]}")
            )
        if extra:
            out.append(
                Violation(v.id, "table-complete", f"unexpected rows for {extra[:3]}")
            )
        for config, row in table.rows.items():
            if len(row_probs_len(row)) != v.cardinality:
                out.append(
                    Violation(
                        f"{v.id}|{','.join(config) or '()'}",
                        "row-arity",
                        "row length does not match the state count",
                    )
                )
                continue
            for problem in row.violations():
                out.append(
                    Violation(
                        f"{v.id}|{','.join(config) or '()'}", "row-invalid", problem
                    )
                )
    return out


def row_probs_len(row: Pmf | IntervalPmf) -> tuple[float, ...]:
    return row.probs if isinstance(row, Pmf) else row.lower


def build_boolean_question(
    question_id: str, skill_id: str, params: QuestionParams
) -> Cpt:
    """CPT of a Boolean question with one Boolean skill parent.

    State "1" of the question is the correct answer, state "1" of the skill
    is possession of the skill.
    """
    rows = {}
    for skill_state, p_right in (
        ("0", params.p_right_unskilled),
        ("1", params.p_right_skilled),
    ):
        rows[(skill_state,)] = Pmf(question_id, (1.0 - p_right, p_right))
    return Cpt(question_id, (skill_id,), rows)


def perturb_to_credal(model: NetworkModel, spec: PerturbationSpec) -> NetworkModel:
    """Widen every sharp parameter into [p - eps, p + eps], clipped and tightened."""
    if model.kind != "bayesian":
        raise ModelError("perturb_to_credal expects a Bayesian model")
    model.require_valid()
    eps = spec.epsilon
    tables: dict[str, CredalCpt] = {}
    for var_id, cpt in model.tables.items():
        rows = {}
        for config, pmf in cpt.rows.items():
            lower = tuple(p - eps for p in pmf.probs)
            upper = tuple(p + eps for p in pmf.probs)
            if spec.clip:
                lower = tuple(max(0.0, lo) for lo in lower)
                upper = tuple(min(1.0, hi) for hi in upper)
            rows[config] = IntervalPmf(pmf.over, lower, upper).tightened()
        tables[var_id] = CredalCpt(cpt.child, cpt.parents, rows)
    return NetworkModel(model.variables, model.edges, tables, "credal")


# -- serialization ----------------------------------------------------------


def serialize(model: NetworkModel) -> str:
    """Deterministic JSON document for a model (see ``load_model``)."""
    tables = {}
    for v in model.variables:
        table = model.tables.get(v.id)
        if table is None:
            continue
        rows = []
        for config in model.parent_configs(v.id):
            if config not in table.rows:
                continue
            row = table.rows[config]
            if isinstance(row, Pmf):
                rows.append({"given": list(config), "p": list(row.probs)})
            else:
                rows.append(
                    {
                        "given": list(config),
                        "bounds": [list(b) for b in zip(row.lower, row.upper)],
                    }
                )
        tables[v.id] = {"parents": list(table.parents), "rows": rows}
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "variables": [
            {"id": v.id, "name": v.name, "states": list(v.states), "role": v.role}
            for v in model.variables
        ],
        "edges": [list(e) for e in model.edges],
        "tables": tables,
    }
    return json.dumps(doc, indent=2) + "\n"


def _require(doc: Mapping, key: str, where: str):
    if key not in doc:
        raise ModelFormatError(f"missing field {key!r}", where=where)
    return doc[key]


def load_model(text: str, *, validate_model: bool = True) -> NetworkModel:
    """Parse a model document, raising on syntax, schema or validity errors."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"not valid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            where="document",
        ) from None
    if not isinstance(doc, dict):
        raise ModelFormatError("top level must be an object", where="document")
    version = _require(doc, "format_version", "document")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r}", where="document")
    kind = _require(doc, "kind", "document")
    if kind not in ("bayesian", "credal"):
        raise ModelFormatError(f"kind must be bayesian or credal, got {kind!r}", where="kind")

    variables = []
    for i, vdoc in enumerate(_require(doc, "variables", "document")):
        where = f"variables[{i}]"
        try:
            variables.append(
                Variable(
                    id=str(_require(vdoc, "id", where)),
                    name=str(vdoc.get("name", vdoc.get("id"))),
                    states=tuple(_require(vdoc, "states", where)),
                    role=str(_require(vdoc, "role", where)),
                )
            )
        except ModelError as exc:
            raise ModelFormatError(str(exc), where=where) from None

    edges = []
    for i, edoc in enumerate(_require(doc, "edges", "document")):
        if not isinstance(edoc, (list, tuple)) or len(edoc) != 2:
            raise ModelFormatError("edge must be a [parent, child] pair", where=f"edges[{i}]")
        edges.append((str(edoc[0]), str(edoc[1])))

    tables: dict[str, Cpt | CredalCpt] = {}
    for var_id, tdoc in _require(doc, "tables", "document").items():
        where = f"tables[{var_id}]"
        parents = tuple(str(p) for p in _require(tdoc, "parents", where))
        point_rows: dict[tuple[str, ...], Pmf] = {}
        interval_rows: dict[tuple[str, ...], IntervalPmf] = {}
        for j, rdoc in enumerate(_require(tdoc, "rows", where)):
            rwhere = f"{where}.rows[{j}]"
            config = tuple(str(s) for s in _require(rdoc, "given", rwhere))
            if "p" in rdoc:
                point_rows[config] = Pmf(var_id, tuple(rdoc["p"]))
            elif "bounds" in rdoc:
                bounds = rdoc["bounds"]
                try:
                    lower = tuple(float(b[0]) for b in bounds)
                    upper = tuple(float(b[1]) for b in bounds)
                except (TypeError, IndexError):
                    raise ModelFormatError(
                        "bounds must be [lower, upper] pairs", where=rwhere
                    ) from None
                interval_rows[config] = IntervalPmf(var_id, lower, upper)
            else:
                raise ModelFormatError("row needs either 'p' or 'bounds'", where=rwhere)
        if point_rows and interval_rows:
            raise ModelFormatError("mixed point and interval rows", where=where)
        if kind == "bayesian":
            if interval_rows:
                raise ModelFormatError(
                    "interval rows in a bayesian document", where=where
                )
            tables[var_id] = Cpt(var_id, parents, point_rows)
        else:
            if point_rows:
                # Degenerate intervals are accepted for convenience.
                interval_rows = {
                    c: IntervalPmf(var_id, r.probs, r.probs)
                    for c, r in point_rows.items()
                }
            tables[var_id] = CredalCpt(var_id, parents, interval_rows)

    model = NetworkModel(variables, edges, tables, kind)
    if validate_model:
        problems = validate(model)
        if problems:
            listing = "; ".join(str(p) for p in problems[:5])
            raise ModelError(f"model document failed validation: {listing}")
    return model


def models_equal(a: NetworkModel, b: NetworkModel, tol: float = 1e-12) -> bool:
    """Structural equality with numeric tolerance, used for round-trip checks."""
    if a.kind != b.kind or a.variables != b.variables or a.edges != b.edges:
        return False
    if set(a.tables) != set(b.tables):
        return False
    for var_id, ta in a.tables.items():
        tb = b.tables[var_id]
        if ta.parents != tb.parents or set(ta.rows) != set(tb.rows):
            return False
        for config, ra in ta.rows.items():
            rb = tb.rows[config]
            if isinstance(ra, Pmf) != isinstance(rb, Pmf):
                return False
            if isinstance(ra, Pmf):
                if any(abs(x - y) > tol for x, y in zip(ra.probs, rb.probs)):
                    return False
            else:
                if any(abs(x - y) > tol for x, y in zip(ra.lower, rb.lower)):
                    return False
                if any(abs(x - y) > tol for x, y in zip(ra.upper, rb.upper)):
                    return False
    return True
