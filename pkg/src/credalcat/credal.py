"""Lower and upper posterior skill probabilities in interval credal networks.

Bounds are exact under vertex enumeration: the posterior of a fixed state is
a ratio of multilinear functions of the table-row parameters, so each bound
is attained at a combination of row vertices. Coordinate ascent is offered as
an inner approximation for cases where enumeration would be too large.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _skillspace as ss
from .inference import Evidence, InconsistentEvidenceError, check_evidence
from .model import IntervalPmf, ModelError, NetworkModel, Pmf, SKILL

DEFAULT_MAX_VERTICES = 1 << 20
DEFAULT_RESTARTS = 5
_IMPROVE_TOL = 1e-13


class VertexCapExceededError(RuntimeError):
    """Vertex enumeration would exceed the configured cap.

    Callers should fall back to ``CredalStrategy(kind="coordinate_ascent")``.
    """


@dataclass(frozen=True)
class CredalStrategy:
    kind: str = "vertex_enumeration"
    max_vertices: int = DEFAULT_MAX_VERTICES
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("vertex_enumeration", "coordinate_ascent"):
            raise ModelError(f"unknown credal strategy {self.kind!r}")
        if self.max_vertices < 1 or self.restarts < 1:
            raise ModelError("max_vertices and restarts must be >= 1")


@dataclass(frozen=True)
class PosteriorBounds:
    """Per-state posterior probability intervals plus approximation metadata."""

    bounds: IntervalPmf
    exact: bool
    method: str


def midpoint(bounds: IntervalPmf | PosteriorBounds) -> Pmf:
    """Mid-point decision rule: (lower+upper)/2 per state, renormalized."""
    ipmf = bounds.bounds if isinstance(bounds, PosteriorBounds) else bounds
    return ipmf.midpoint_pmf()


def _lambda_coordinates(
    space: ss.SkillSpace, groups: Sequence[ss.LambdaGroup]
) -> list[ss.RowCoordinate]:
    out = []
    for g in groups:
        lo = np.ones(space.size)
        lo[g.mask] = g.lo
        hi = np.ones(space.size)
        hi[g.mask] = g.hi
        mid = np.ones(space.size)
        mid[g.mask] = g.mid
        label = f"lambda[{','.join(g.parents)}={','.join(g.config)}]"
        out.append(ss.RowCoordinate(label, np.stack([lo, hi]), mid))
    return out


def _monotone_applicable(
    model: NetworkModel,
    space: ss.SkillSpace,
    target: str,
    groups: Sequence[ss.LambdaGroup],
) -> bool:
    """Whether answered-question likelihoods act monotonically on the target.

    Holds for Boolean skills arranged in a forest whose links are totally
    positive for every completion, with single-parent questions: raising the
    likelihood of a skill's high state then never lowers the posterior of any
    other skill's high state, so each lambda group can be set directly to the
    endpoint matching the requested bound.
    """
    if model.variable(target).cardinality != 2:
        return False
    for skill in space.skills:
        if model.variable(skill).cardinality != 2:
            return False
        parents = model.parents(skill)
        if len(parents) > 1:
            return False
        if parents:
            table = model.table(skill)
            p_states = model.states(parents[0])
            hi_given_low = table.row((p_states[0],)).upper[1]
            lo_given_high = table.row((p_states[1],)).lower[1]
            if hi_given_low > lo_given_high + 1e-12:
                return False
    return all(len(g.parents) == 1 for g in groups)


def _ratio_bounds(w: np.ndarray, mask: np.ndarray) -> tuple[float, float]:
    den = w.sum(axis=1)
    if np.any(den <= 0.0):
        raise InconsistentEvidenceError(
            "evidence has probability zero under some completion"
        )
    ratios = w[:, mask].sum(axis=1) / den
    return float(ratios.min()), float(ratios.max())


def credal_posterior_bounds(
    model: NetworkModel,
    target: str,
    evidence: Evidence,
    strategy: CredalStrategy | None = None,
) -> PosteriorBounds:
    """Per-state [lower, upper] on P(target | evidence) for a credal model."""
    if model.kind != "credal":
        raise ModelError("credal_posterior_bounds expects a credal model")
    if model.variable(target).role != SKILL:
        raise ModelError(f"target {target!r} is not a skill")
    evidence = check_evidence(model, evidence)
    strategy = strategy or CredalStrategy()

    skills = ss.relevant_skills(model, [target], evidence)
    space = ss.cached_space(model, skills)
    coords = ss.cached_skill_rows(model, space)
    groups = ss.lambda_groups(model, space, evidence)
    card = model.variable(target).cardinality
    masks = [space.mask(target, i) for i in range(card)]

    if strategy.kind == "vertex_enumeration":
        row_combos = 1
        for c in coords:
            row_combos *= len(c.vectors)
        if groups and _monotone_applicable(model, space, target, groups):
            if row_combos > strategy.max_vertices:
                raise VertexCapExceededError(
                    f"{row_combos} row-vertex combinations exceed "
                    f"max_vertices={strategy.max_vertices}; "
                    "fall back to coordinate_ascent"
                )
            w_rows = ss.enumerate_weights(np.ones(space.size), coords, strategy.max_vertices)
            lowers = [0.0] * card
            uppers = [0.0] * card
            for direction in ("upper", "lower"):
                picks = []
                for g in groups:
                    parent = g.parents[0]
                    high = model.variable(parent).state_index(g.config[0]) == 1
                    want_hi = (direction == "upper") == high
                    picks.append("hi" if want_hi else "lo")
                lam = ss.lambda_vector(space, groups, picks)
                lo1, hi1 = _ratio_bounds(w_rows * lam[None, :], masks[1])
                if direction == "upper":
                    uppers[1] = hi1
                    lowers[0] = 1.0 - hi1
                else:
                    lowers[1] = lo1
                    uppers[0] = 1.0 - lo1
        else:
            total = row_combos * (2 ** len(groups))
            if total > strategy.max_vertices:
                raise VertexCapExceededError(
                    f"{total} vertex combinations exceed "
                    f"max_vertices={strategy.max_vertices}; "
                    "fall back to coordinate_ascent"
                )
            all_coords = coords + _lambda_coordinates(space, groups)
            w = ss.enumerate_weights(
                np.ones(space.size), all_coords, strategy.max_vertices
            )
            lowers, uppers = [], []
            for mask in masks:
                lo, hi = _ratio_bounds(w, mask)
                lowers.append(lo)
                uppers.append(hi)
        method = "vertex_enumeration"
        exact = True
    else:
        lowers, uppers = _ascent_bounds(space, coords, groups, masks, strategy)
        method = "coordinate_ascent"
        exact = False

    lowers = [min(max(v, 0.0), 1.0) for v in lowers]
    uppers = [min(max(v, 0.0), 1.0) for v in uppers]
    return PosteriorBounds(IntervalPmf(target, lowers, uppers), exact, method)


def _ascent_bounds(
    space: ss.SkillSpace,
    coords: Sequence[ss.RowCoordinate],
    groups: Sequence[ss.LambdaGroup],
    masks: Sequence[np.ndarray],
    strategy: CredalStrategy,
) -> tuple[list[float], list[float]]:
    all_coords = list(coords) + _lambda_coordinates(space, groups)
    rng = np.random.default_rng(strategy.seed)
    n_coords = len(all_coords)

    def weight(picks: list[int | None]) -> np.ndarray:
        w = np.ones(space.size)
        for coord, pick in zip(all_coords, picks):
            w = w * (coord.midpoint if pick is None else coord.vectors[pick])
        return w

    def objective(w: np.ndarray, mask: np.ndarray) -> float | None:
        den = float(w.sum())
        if den <= 0.0:
            return None
        return float(w[mask].sum()) / den

    lowers, uppers = [], []
    for mask in masks:
        results = {}
        for sense in (-1, 1):  # -1 minimizes (lower bound), +1 maximizes
            starts: list[list[int | None]] = [[None] * n_coords]
            for _ in range(strategy.restarts - 1):
                starts.append(
                    [int(rng.integers(len(c.vectors))) for c in all_coords]
                )
            best = None
            for picks in starts:
                current = objective(weight(picks), mask)
                improved = True
                while improved and current is not None:
                    improved = False
                    for ci, coord in enumerate(all_coords):
                        original = picks[ci]
                        for choice in range(len(coord.vectors)):
                            if choice == original:
                                continue
                            picks[ci] = choice
                            cand = objective(weight(picks), mask)
                            if cand is not None and (
                                current is None
                                or sense * (cand - current) > _IMPROVE_TOL
                            ):
                                current = cand
                                original = choice
                                improved = True
                        picks[ci] = original
                if current is not None and (
                    best is None or sense * (current - best) > 0
                ):
                    best = current
            if best is None:
                raise InconsistentEvidenceError(
                    "evidence has probability zero under every tried completion"
                )
            results[sense] = best
        lowers.append(results[-1])
        uppers.append(results[1])
    return lowers, uppers


def compute_posterior_bounds(
    model: NetworkModel,
    target: str,
    evidence: Evidence,
    strategy: CredalStrategy | None = None,
) -> PosteriorBounds:
    """Default pipeline: exact enumeration, coordinate-ascent on cap overflow."""
    base = strategy or CredalStrategy()
    if base.kind == "coordinate_ascent":
        return credal_posterior_bounds(model, target, evidence, base)
    try:
        return credal_posterior_bounds(model, target, evidence, base)
    except VertexCapExceededError:
        fallback = CredalStrategy(
            kind="coordinate_ascent",
            max_vertices=base.max_vertices,
            restarts=base.restarts,
            seed=base.seed,
        )
        return credal_posterior_bounds(model, target, evidence, fallback)


def expectation_bounds(
    bounds: IntervalPmf, utilities: Sequence[float]
) -> tuple[float, float]:
    """Lower/upper expectation of a utility vector over an interval credal set.

    Greedy mass assignment: start every state at its lower bound and push the
    remaining mass toward the smallest (resp. largest) utilities.
    """
    k = len(bounds.lower)
    if len(utilities) != k:
        raise ModelError("utility vector length does not match the state count")

    def directed(value_order: list[int]) -> float:
        p = list(bounds.lower)
        slack = 1.0 - sum(p)
        for idx in value_order:
            room = bounds.upper[idx] - p[idx]
            take = min(room, max(slack, 0.0))
            p[idx] += take
            slack -= take
        return float(sum(u * q for u, q in zip(utilities, p)))

    ascending = sorted(range(k), key=lambda i: (utilities[i], i))
    return directed(ascending), directed(ascending[::-1])
