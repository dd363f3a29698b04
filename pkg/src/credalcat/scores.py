"""Question-selection scores: entropy and deviation-from-the-mode (DM).

All scores are normalized to [0, 1] by construction: entropy uses the state
count as its logarithm base, and DM is an index of qualitative variation
(zero on degenerate distributions, one on uniform ones). Conditional scores
are answer-probability-weighted mixtures of per-answer scores.

The credal DM bounds reduce to linear programs over the joint cells
x[i][j] = P(q_i, s_j): within the region where a fixed skill state is the
posterior mode for each answer, the objective sum_i max_j x[i][j] is linear,
so enumerating the m**n mode assignments and solving one LP per cell yields
the exact bounds of the conditional DM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from . import _skillspace as ss
from . import lp
from .credal import CredalStrategy, _lambda_coordinates
from .inference import (
    Evidence,
    InconsistentEvidenceError,
    check_evidence,
    joint_skill_question,
    posterior,
    question_marginal,
)
from .model import IntervalPmf, ModelError, NetworkModel, Pmf

DEFAULT_MODE_CAP = 4096


@dataclass(frozen=True)
class ScoreValue:
    """A point score or a [lower, upper] score interval.

    ``exact`` is False when the bounds come from an approximation (inner
    ascent or the outer posterior-bound decoupling used under evidence).
    """

    value: float | None = None
    bounds: tuple[float, float] | None = None
    exact: bool = True

    @property
    def lower(self) -> float:
        return self.bounds[0] if self.bounds is not None else self.value

    @property
    def upper(self) -> float:
        return self.bounds[1] if self.bounds is not None else self.value

    def pick(self, bound: str = "lower") -> float:
        """Scalar used for ranking/stopping: lower, upper or midpoint."""
        if self.bounds is None:
            return self.value
        if bound == "lower":
            return self.bounds[0]
        if bound == "upper":
            return self.bounds[1]
        if bound == "midpoint":
            return (self.bounds[0] + self.bounds[1]) / 2.0
        raise ModelError(f"unknown bound selector {bound!r}")


def entropy_of(probs: Sequence[float]) -> float:
    """Entropy with logarithm base equal to the state count; 0*log(0) = 0."""
    base = len(probs)
    if base < 2:
        raise ModelError("entropy needs at least two states")
    h = 0.0
    for p in probs:
        if p > 0.0:
            h -= p * math.log(p, base)
    return min(max(h, 0.0), 1.0)


def dm_of(probs: Sequence[float]) -> float:
    """Deviation from the mode: |V| * (1 - max p) / (|V| - 1)."""
    m = len(probs)
    if m < 2:
        raise ModelError("dm needs at least two states")
    return min(max(m * (1.0 - max(probs)) / (m - 1.0), 0.0), 1.0)


def dm_sum_form(probs: Sequence[float]) -> float:
    """The defining summation form, kept for equivalence checks."""
    m = len(probs)
    top = max(probs)
    return 1.0 - sum((top - p) / (m - 1.0) for p in probs)


def entropy(p: Pmf) -> ScoreValue:
    return ScoreValue(value=entropy_of(p.probs))


def dm(p: Pmf) -> ScoreValue:
    return ScoreValue(value=dm_of(p.probs))


def conditional_entropy(
    model: NetworkModel, skill: str, question: str, evidence: Evidence
) -> ScoreValue:
    """H(S | Q, e) = sum_i P(q_i | e) * H(S | q_i, e)."""
    marginal = question_marginal(model, question, evidence)
    states = model.states(question)
    total = 0.0
    for i, q_state in enumerate(states):
        weight = marginal.probs[i]
        if weight <= 0.0:
            continue
        branch = dict(evidence)
        branch[question] = q_state
        total += weight * entropy_of(posterior(model, skill, branch).probs)
    return ScoreValue(value=min(max(total, 0.0), 1.0))


def conditional_dm(
    model: NetworkModel, skill: str, question: str, evidence: Evidence
) -> ScoreValue:
    """M(S | Q, e) = m * (1 - sum_i max_j P(s_j, q_i | e)) / (m - 1)."""
    joint = joint_skill_question(model, skill, question, evidence)
    m = len(joint.skill_states)
    modal_mass = float(joint.p.max(axis=0).sum())
    return ScoreValue(value=min(max(m * (1.0 - modal_mass) / (m - 1.0), 0.0), 1.0))


def score_gain(
    model: NetworkModel,
    skill: str,
    question: str,
    evidence: Evidence,
    kind: str = "entropy",
) -> ScoreValue:
    """Prior score minus conditional score for one candidate question.

    Entropy gain is information gain and provably non-negative, so it is
    clamped at zero; DM gain can legitimately be negative and is left as is.
    """
    prior = posterior(model, skill, evidence)
    if kind == "entropy":
        gain = entropy_of(prior.probs) - conditional_entropy(
            model, skill, question, evidence
        ).value
        return ScoreValue(value=max(gain, 0.0))
    if kind == "dm":
        gain = dm_of(prior.probs) - conditional_dm(model, skill, question, evidence).value
        return ScoreValue(value=gain)
    raise ModelError(f"unknown score kind {kind!r}")


# -- credal scores ------------------------------------------------------------


def max_singleton_upper(bounds: IntervalPmf) -> float:
    """Largest attainable modal probability within the interval set."""
    lo_sum = sum(bounds.lower)
    return max(
        min(hi, 1.0 - (lo_sum - lo)) for lo, hi in zip(bounds.lower, bounds.upper)
    )


def min_max_probability_waterfill(bounds: IntervalPmf) -> float:
    """Smallest attainable modal probability by water-filling.

    The smallest feasible cap t satisfies sum_v min(t, upper[v]) = 1 and
    t >= max lower[v]; equals the LP answer (property-tested against it).
    """
    k = len(bounds.lower)
    floor = max(bounds.lower)
    uppers = sorted(bounds.upper)
    # Raise t through the sorted uppers until the remaining states can absorb
    # the leftover mass evenly.
    absorbed = 0.0
    for i, u in enumerate(uppers):
        remaining = k - i
        t = (1.0 - absorbed) / remaining
        if t <= u:
            return max(t, floor)
        absorbed += u
    return max(1.0, floor)


def min_max_probability(bounds: IntervalPmf) -> float:
    """Smallest attainable modal probability, via the tiny LP {min t : p <= t}."""
    k = len(bounds.lower)
    names = tuple(f"p{i}" for i in range(k)) + ("t",)
    constraints = [
        lp.LpConstraint({f"p{i}": 1.0 for i in range(k)}, "=", 1.0, "mass")
    ]
    for i in range(k):
        constraints.append(
            lp.LpConstraint({f"p{i}": 1.0, "t": -1.0}, "<=", 0.0, f"cap{i}")
        )
        constraints.append(
            lp.LpConstraint({f"p{i}": 1.0}, "<=", bounds.upper[i], f"hi{i}")
        )
    problem = lp.LpProblem(
        variables=names,
        objective={"t": 1.0},
        sense="minimize",
        constraints=tuple(constraints),
        lower_bounds={f"p{i}": bounds.lower[i] for i in range(k)},
    )
    solution = lp.solve(problem)
    if solution.status != "optimal":
        raise ModelError(f"modal-probability LP came back {solution.status}")
    return float(solution.value)


def credal_dm_bounds(bounds: IntervalPmf) -> ScoreValue:
    """DM bounds over an interval credal set, from the modal probability range."""
    m = len(bounds.lower)
    hi_mode = max_singleton_upper(bounds)
    lo_mode = min_max_probability(bounds)
    lower = m * (1.0 - hi_mode) / (m - 1.0)
    upper = m * (1.0 - lo_mode) / (m - 1.0)
    clamp = lambda v: min(max(v, 0.0), 1.0)
    return ScoreValue(bounds=(clamp(lower), clamp(upper)))


def credal_entropy_lower(bounds: IntervalPmf) -> ScoreValue:
    """Minimum entropy over the interval set; entropy is concave, so the
    minimum sits at an extreme point of the polytope."""
    best = min(entropy_of(v) for v in bounds.vertices())
    return ScoreValue(value=best)


def modal_mass_bounds(
    skill_bounds: IntervalPmf,
    question_row_bounds: Sequence[IntervalPmf],
    mode_cap: int = DEFAULT_MODE_CAP,
) -> tuple[float, float]:
    """Exact bounds of the modal mass sum_i max_j P(q_i, s_j) by mode-cell LPs.

    Enumerates all m**n mode assignments; infeasible cells are skipped.
    """
    m = len(skill_bounds.lower)
    n = len(question_row_bounds[0].lower)
    cells = m**n
    if cells > mode_cap:
        raise ModelError(
            f"mode enumeration needs {cells} cells (m={m}, n={n}), cap is {mode_cap}"
        )
    mass_hi: float | None = None
    mass_lo: float | None = None
    for mode in lp.enumerate_mode_assignments(m, n):
        hi = lp.solve(
            lp.build_mode_cell_problem(skill_bounds, question_row_bounds, mode, "maximize")
        )
        if hi.status == "optimal":
            mass_hi = hi.value if mass_hi is None else max(mass_hi, hi.value)
        lo = lp.solve(
            lp.build_mode_cell_problem(skill_bounds, question_row_bounds, mode, "minimize")
        )
        if lo.status == "optimal":
            mass_lo = lo.value if mass_lo is None else min(mass_lo, lo.value)
    if mass_hi is None or mass_lo is None:
        raise ModelError("all mode cells are infeasible; inconsistent interval inputs")
    return mass_lo, mass_hi


def modal_mass_upper_boolean(
    skill_bounds: IntervalPmf, question_row_bounds: Sequence[IntervalPmf]
) -> float:
    """Upper modal-mass bound in the Boolean (m = n = 2) case without LPs.

    As a function of (m, t0, t1) = (P(s1), P(q1|s0), P(q1|s1)) the modal mass
    max(t0(1-m), t1 m) + max((1-t0)(1-m), (1-t1)m) is
    convex in each variable separately, so its maximum over the parameter box
    sits at one of the eight box vertices. Cross-checked against the LP route
    in the test suite.
    """
    if len(skill_bounds.lower) != 2 or len(question_row_bounds[0].lower) != 2:
        raise ModelError("fast path is Boolean-only")
    m_lo = max(skill_bounds.lower[1], 1.0 - skill_bounds.upper[0])
    m_hi = min(skill_bounds.upper[1], 1.0 - skill_bounds.lower[0])
    t0 = (question_row_bounds[0].lower[1], question_row_bounds[0].upper[1])
    t1 = (question_row_bounds[1].lower[1], question_row_bounds[1].upper[1])
    best = 0.0
    for m_val, t0_val, t1_val in product((m_lo, m_hi), t0, t1):
        value = max(t0_val * (1 - m_val), t1_val * m_val) + max(
            (1 - t0_val) * (1 - m_val), (1 - t1_val) * m_val
        )
        best = max(best, value)
    return best


def modal_mass_lower_boolean(
    skill_bounds: IntervalPmf, question_row_bounds: Sequence[IntervalPmf]
) -> float:
    """Lower modal-mass bound in the Boolean case without LPs.

    The modal mass is piecewise bilinear, so each coordinate restriction is piecewise
    linear with computable kinks; exact coordinate descent from the box
    vertices, the center and the t0 = t1 crossing line finds the global
    minimum. Cross-checked against the LP route in the test suite.
    """
    if len(skill_bounds.lower) != 2 or len(question_row_bounds[0].lower) != 2:
        raise ModelError("fast path is Boolean-only")
    m_lo = max(skill_bounds.lower[1], 1.0 - skill_bounds.upper[0])
    m_hi = min(skill_bounds.upper[1], 1.0 - skill_bounds.lower[0])
    a0, b0 = question_row_bounds[0].lower[1], question_row_bounds[0].upper[1]
    a1, b1 = question_row_bounds[1].lower[1], question_row_bounds[1].upper[1]

    def mass(m, t0, t1):
        return max(t0 * (1 - m), t1 * m) + max((1 - t0) * (1 - m), (1 - t1) * m)

    def clip(x, lo, hi):
        return min(max(x, lo), hi)

    def min_m(t0, t1):
        cands = {m_lo, m_hi}
        if t0 + t1 > 0:
            cands.add(clip(t0 / (t0 + t1), m_lo, m_hi))
        if 2 - t0 - t1 > 0:
            cands.add(clip((1 - t0) / (2 - t0 - t1), m_lo, m_hi))
        return min(cands, key=lambda m: mass(m, t0, t1))

    def min_t0(m, t1):
        cands = {a0, b0}
        if 1 - m > 0:
            cands.add(clip(t1 * m / (1 - m), a0, b0))
            cands.add(clip(1 - (1 - t1) * m / (1 - m), a0, b0))
        return min(cands, key=lambda t0: mass(m, t0, t1))

    def min_t1(m, t0):
        cands = {a1, b1}
        if m > 0:
            cands.add(clip(t0 * (1 - m) / m, a1, b1))
            cands.add(clip(1 - (1 - t0) * (1 - m) / m, a1, b1))
        return min(cands, key=lambda t1: mass(m, t0, t1))

    starts = [
        (m, t0, t1) for m in (m_lo, m_hi) for t0 in (a0, b0) for t1 in (a1, b1)
    ]
    starts.append(((m_lo + m_hi) / 2, (a0 + b0) / 2, (a1 + b1) / 2))
    cross_lo, cross_hi = max(a0, a1), min(b0, b1)
    if cross_lo <= cross_hi:
        t = (cross_lo + cross_hi) / 2
        for m in (m_lo, m_hi, clip(0.5, m_lo, m_hi)):
            starts.append((m, t, t))
    best = None
    for m, t0, t1 in starts:
        current = mass(m, t0, t1)
        for _ in range(50):
            m = min_m(t0, t1)
            t0 = min_t0(m, t1)
            t1 = min_t1(m, t0)
            nxt = mass(m, t0, t1)
            if nxt >= current - 1e-15:
                current = min(current, nxt)
                break
            current = nxt
        if best is None or current < best:
            best = current
    return best


def credal_conditional_dm_bounds(
    skill_bounds: IntervalPmf,
    question_row_bounds: Sequence[IntervalPmf],
    *,
    mode_cap: int = DEFAULT_MODE_CAP,
    outer_approximation: bool = False,
) -> ScoreValue:
    """Conditional DM bounds from skill bounds and question-row intervals.

    DM is decreasing in the modal mass, so the lower DM bound uses the upper
    mass bound and vice versa. When the skill bounds are themselves posterior bounds (the
    with-evidence or multi-skill case) the result is an outer approximation
    and is flagged as such.
    """
    m = len(skill_bounds.lower)
    mass_lo, mass_hi = modal_mass_bounds(
        skill_bounds, question_row_bounds, mode_cap
    )
    lower = m * (1.0 - mass_hi) / (m - 1.0)
    upper = m * (1.0 - mass_lo) / (m - 1.0)
    clamp = lambda v: min(max(v, 0.0), 1.0)
    lower, upper = clamp(lower), clamp(upper)
    if lower > upper:
        lower, upper = upper, lower
    return ScoreValue(bounds=(lower, upper), exact=not outer_approximation)


def conditional_entropy_lower_from_bounds(
    skill_bounds: IntervalPmf, question_row_bounds: Sequence[IntervalPmf]
) -> ScoreValue:
    """Lower conditional entropy over the decoupled (bounds x rows) set.

    The mixture sum_i P(q_i) H(S|q_i) is concave in the joint over (S, Q), so
    the minimum over the decoupled polytope is at a vertex combination.
    Used for ranking in the multi-skill case; an outer approximation whenever
    the skill bounds come from conditioning.
    """
    m = len(skill_bounds.lower)
    best = None
    row_vertex_lists = [row.vertices() for row in question_row_bounds]
    for prior in skill_bounds.vertices():
        for rows in product(*row_vertex_lists):
            joint = np.asarray(
                [[prior[j] * rows[j][i] for i in range(len(rows[0]))] for j in range(m)]
            )
            p_q = joint.sum(axis=0)
            value = 0.0
            for i, w in enumerate(p_q):
                if w > 0.0:
                    value += w * entropy_of(joint[:, i] / w)
            if best is None or value < best:
                best = value
    return ScoreValue(value=min(max(best, 0.0), 1.0), exact=False)


def credal_conditional_entropy_lower(
    model: NetworkModel,
    skill: str,
    question: str,
    evidence: Evidence,
    strategy: CredalStrategy | None = None,
) -> ScoreValue:
    """Lower bound of H(S | Q, e) over all completions of a credal model.

    Full vertex enumeration (exact) when it fits the strategy cap, otherwise
    coordinate ascent over the same coordinates (an inner approximation).
    """
    if model.kind != "credal":
        raise ModelError("credal_conditional_entropy_lower expects a credal model")
    evidence = check_evidence(model, evidence)
    if question in evidence:
        raise ModelError(f"question {question!r} is already answered")
    strategy = strategy or CredalStrategy()

    skills = ss.relevant_skills(model, [skill, question], evidence)
    space = ss.cached_space(model, skills)
    coords = ss.cached_skill_rows(model, space)
    groups = ss.lambda_groups(model, space, evidence)
    lam_coords = _lambda_coordinates(space, groups)
    q_choices, q_mid = ss.question_row_choices(model, space, question)
    card = model.variable(skill).cardinality
    masks = [space.mask(skill, i) for i in range(card)]

    combos = 2 ** len(groups) * len(q_choices)
    for c in coords:
        combos *= len(c.vectors)

    if strategy.kind == "vertex_enumeration" and combos <= strategy.max_vertices:
        w = ss.enumerate_weights(
            np.ones(space.size), coords + lam_coords, strategy.max_vertices
        )
        best = None
        for likelihood in q_choices:
            value = _conditional_entropy_batch(w, likelihood, masks)
            candidate = float(value.min())
            if best is None or candidate < best:
                best = candidate
        return ScoreValue(value=min(max(best, 0.0), 1.0), exact=True)

    value = _conditional_entropy_ascent(
        space, coords + lam_coords, q_choices, q_mid, masks, strategy
    )
    return ScoreValue(value=min(max(value, 0.0), 1.0), exact=False)


def _conditional_entropy_batch(
    w: np.ndarray, likelihood: np.ndarray, masks: Sequence[np.ndarray]
) -> np.ndarray:
    """Objective sum_i P(q_i|e) H(S|q_i,e) for each completion row of w."""
    z = np.stack([(w[:, mask] @ likelihood[mask]) for mask in masks], axis=1)
    den = z.sum(axis=(1, 2))
    if np.any(den <= 0.0):
        raise InconsistentEvidenceError(
            "evidence has probability zero under some completion"
        )
    p_q = z.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(p_q[:, None, :] > 0.0, z / p_q[:, None, :], 0.0)
        logs = np.where(cond > 0.0, np.log(cond), 0.0)
    h = -(cond * logs).sum(axis=1) / math.log(len(masks))
    return (p_q * h).sum(axis=1) / den


def _conditional_entropy_ascent(
    space: ss.SkillSpace,
    coords: Sequence[ss.RowCoordinate],
    q_choices: Sequence[np.ndarray],
    q_mid: np.ndarray,
    masks: Sequence[np.ndarray],
    strategy: CredalStrategy,
) -> float:
    rng = np.random.default_rng(strategy.seed)
    n_coords = len(coords)

    def evaluate(picks: list[int | None], q_pick: int | None) -> float | None:
        w = np.ones(space.size)
        for coord, pick in zip(coords, picks):
            w = w * (coord.midpoint if pick is None else coord.vectors[pick])
        likelihood = q_mid if q_pick is None else q_choices[q_pick]
        try:
            return float(_conditional_entropy_batch(w[None, :], likelihood, masks)[0])
        except InconsistentEvidenceError:
            return None

    starts: list[tuple[list[int | None], int | None]] = [([None] * n_coords, None)]
    for _ in range(strategy.restarts - 1):
        starts.append(
            (
                [int(rng.integers(len(c.vectors))) for c in coords],
                int(rng.integers(len(q_choices))),
            )
        )
    best = None
    for picks, q_pick in starts:
        current = evaluate(picks, q_pick)
        improved = True
        while improved and current is not None:
            improved = False
            for ci, coord in enumerate(coords):
                original = picks[ci]
                for choice in range(len(coord.vectors)):
                    if choice == original:
                        continue
                    picks[ci] = choice
                    cand = evaluate(picks, q_pick)
                    if cand is not None and cand < current - 1e-13:
                        current, original, improved = cand, choice, True
                picks[ci] = original
            q_original = q_pick
            for choice in range(len(q_choices)):
                if choice == q_original:
                    continue
                cand = evaluate(picks, choice)
                if cand is not None and (current is None or cand < current - 1e-13):
                    current, q_original, improved = cand, choice, True
            q_pick = q_original
        if current is not None and (best is None or current < best):
            best = current
    if best is None:
        raise InconsistentEvidenceError(
            "evidence has probability zero under every tried completion"
        )
    return best
