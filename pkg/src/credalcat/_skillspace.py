"""Joint skill-configuration machinery shared by credal inference and scoring.

Valid models have all questions as leaves with skill parents, so conditioning
on answers factorizes as a product of per-skill-configuration weights. Both
the point and the credal computations in this package work on that joint
skill space: a vector indexed by the cartesian product of the kept skills'
states.

For credal models every table row is an independent credal set, and the
posterior of a fixed state is a ratio of functions that are multilinear in
the row parameters, so its extremes are attained at combinations of row
vertices. Answered questions additionally collapse: only the probability of
the observed answer enters the weight, and products of answered rows sharing
a parent configuration collapse into one scalar interval per configuration
(a "lambda group"), which keeps enumeration small no matter how many
questions have been answered.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import CredalCpt, ModelError, NetworkModel

MAX_CONFIGS = 1 << 16

# Models are immutable, so per-model geometry is memoized; entries die with
# their model. Values are keyed by the kept-skill tuple.
_SPACE_CACHE: "weakref.WeakKeyDictionary[NetworkModel, dict]" = (
    weakref.WeakKeyDictionary()
)


def cached_space(model: NetworkModel, skills: Sequence[str]) -> "SkillSpace":
    per_model = _SPACE_CACHE.setdefault(model, {})
    key = ("space", tuple(skills))
    if key not in per_model:
        per_model[key] = build_space(model, skills)
    return per_model[key]


def cached_skill_rows(model: NetworkModel, space: "SkillSpace") -> list["RowCoordinate"]:
    per_model = _SPACE_CACHE.setdefault(model, {})
    key = ("rows", space.skills)
    if key not in per_model:
        per_model[key] = skill_row_coordinates(model, space)
    return per_model[key]


def cached_row_weights(
    model: NetworkModel, space: "SkillSpace", cap: int
) -> np.ndarray:
    per_model = _SPACE_CACHE.setdefault(model, {})
    key = ("row_weights", space.skills)
    if key not in per_model:
        coords = cached_skill_rows(model, space)
        per_model[key] = enumerate_weights(np.ones(space.size), coords, cap)
    return per_model[key]


@dataclass(frozen=True)
class SkillSpace:
    """Index arrays over the joint configurations of a set of skills."""

    skills: tuple[str, ...]
    cards: tuple[int, ...]
    size: int
    state_index: Mapping[str, np.ndarray]  # per skill, shape (size,)

    def mask(self, skill: str, state_idx: int) -> np.ndarray:
        return self.state_index[skill] == state_idx

    def config_index(self, assignment: Mapping[str, str], model: NetworkModel) -> int:
        idx = 0
        for skill, card in zip(self.skills, self.cards):
            idx = idx * card + model.variable(skill).state_index(assignment[skill])
        return idx


def ancestor_closure(model: NetworkModel, seeds: Sequence[str]) -> set[str]:
    out: set[str] = set()
    stack = list(seeds)
    while stack:
        v = stack.pop()
        if v in out:
            continue
        out.add(v)
        stack.extend(model.parents(v))
    return out


def build_space(model: NetworkModel, skills: Sequence[str]) -> SkillSpace:
    order = [s for s in model.topological_order() or () if s in set(skills)]
    cards = tuple(model.variable(s).cardinality for s in order)
    size = 1
    for c in cards:
        size *= c
    if size > MAX_CONFIGS:
        raise ModelError(
            f"joint skill space of {size} configurations exceeds the supported "
            f"maximum of {MAX_CONFIGS}"
        )
    state_index = {}
    stride = size
    for skill, card in zip(order, cards):
        stride //= card
        state_index[skill] = (np.arange(size) // stride) % card
    return SkillSpace(tuple(order), cards, size, state_index)


def relevant_skills(
    model: NetworkModel, targets: Sequence[str], evidence: Mapping[str, str]
) -> tuple[str, ...]:
    closure = ancestor_closure(model, list(targets) + list(evidence))
    return tuple(s for s in model.skills() if s in closure)


def _row_mask(
    model: NetworkModel, space: SkillSpace, parents: Sequence[str], config: Sequence[str]
) -> np.ndarray:
    mask = np.ones(space.size, dtype=bool)
    for p, s in zip(parents, config):
        mask &= space.mask(p, model.variable(p).state_index(s))
    return mask


def point_prior_weights(model: NetworkModel, space: SkillSpace) -> np.ndarray:
    """Joint prior over skill configurations for a Bayesian model."""
    w = np.ones(space.size)
    for skill in space.skills:
        cpt = model.table(skill)
        child_idx = space.state_index[skill]
        for config in model.parent_configs(skill):
            mask = _row_mask(model, space, cpt.parents, config)
            probs = np.asarray(cpt.row(config).probs)
            w[mask] *= probs[child_idx[mask]]
    return w


def question_likelihood(
    model: NetworkModel, space: SkillSpace, question: str
) -> np.ndarray:
    """P(question state | skill configuration), shape (size, n_states)."""
    cpt = model.table(question)
    n = model.variable(question).cardinality
    out = np.empty((space.size, n))
    for config in model.parent_configs(question):
        mask = _row_mask(model, space, cpt.parents, config)
        out[mask, :] = np.asarray(cpt.row(config).probs)
    return out


# -- credal coordinates -------------------------------------------------------


@dataclass(frozen=True)
class RowCoordinate:
    """One credal table row as an enumeration coordinate.

    ``vectors[c]`` is the multiplicative weight over skill configurations for
    the row's c-th vertex; ``midpoint`` is the weight at the row's normalized
    interval midpoint (the starting point of coordinate ascent).
    """

    label: str
    vectors: np.ndarray  # (n_choices, size)
    midpoint: np.ndarray  # (size,)


def skill_row_coordinates(
    model: NetworkModel, space: SkillSpace
) -> list[RowCoordinate]:
    coords = []
    for skill in space.skills:
        table = model.table(skill)
        if not isinstance(table, CredalCpt):
            raise ModelError("credal machinery called with a point table")
        child_idx = space.state_index[skill]
        for config in model.parent_configs(skill):
            mask = _row_mask(model, space, table.parents, config)
            row = table.row(config)
            vectors = []
            for vertex in row.vertices():
                v = np.ones(space.size)
                probs = np.asarray(vertex)
                v[mask] = probs[child_idx[mask]]
                vectors.append(v)
            mid = np.ones(space.size)
            mid_probs = np.asarray(row.midpoint_pmf().probs)
            mid[mask] = mid_probs[child_idx[mask]]
            coords.append(
                RowCoordinate(
                    f"{skill}|{','.join(config) or '()'}",
                    np.stack(vectors),
                    mid,
                )
            )
    return coords


@dataclass(frozen=True)
class LambdaGroup:
    """Collapsed likelihood of all answered questions sharing a parent config."""

    parents: tuple[str, ...]
    config: tuple[str, ...]
    mask: np.ndarray  # (size,) bool
    lo: float
    hi: float
    mid: float


def lambda_groups(
    model: NetworkModel, space: SkillSpace, evidence: Mapping[str, str]
) -> list[LambdaGroup]:
    acc: dict[tuple[tuple[str, ...], tuple[str, ...]], list[float]] = {}
    for question, answer in evidence.items():
        table = model.table(question)
        a_idx = model.variable(question).state_index(answer)
        for config in model.parent_configs(question):
            row = table.row(config)
            if isinstance(table, CredalCpt):
                lo, hi = row.lower[a_idx], row.upper[a_idx]
                mid = row.midpoint_pmf().probs[a_idx]
            else:
                lo = hi = mid = row.probs[a_idx]
            key = (table.parents, config)
            entry = acc.setdefault(key, [1.0, 1.0, 1.0])
            entry[0] *= lo
            entry[1] *= hi
            entry[2] *= mid
    groups = []
    for (parents, config), (lo, hi, mid) in sorted(acc.items()):
        mask = _row_mask(model, space, parents, config)
        groups.append(LambdaGroup(parents, config, mask, lo, hi, mid))
    return groups


def lambda_vector(space: SkillSpace, groups: Sequence[LambdaGroup], picks) -> np.ndarray:
    """Combine per-group scalar picks ("lo"/"hi"/"mid" or floats) into weights."""
    w = np.ones(space.size)
    for group, pick in zip(groups, picks):
        value = (
            group.lo
            if pick == "lo"
            else group.hi
            if pick == "hi"
            else group.mid
            if pick == "mid"
            else float(pick)
        )
        w[group.mask] *= value
    return w


def question_row_choices(
    model: NetworkModel, space: SkillSpace, question: str
) -> tuple[list[np.ndarray], np.ndarray]:
    """Likelihood matrices for every vertex combination of a question's CCPT.

    Returns (choices, midpoint): each entry has shape (size, n_states).
    """
    table = model.table(question)
    n = model.variable(question).cardinality
    configs = model.parent_configs(question)
    per_row: list[tuple[np.ndarray, list[tuple[float, ...]], tuple[float, ...]]] = []
    for config in configs:
        mask = _row_mask(model, space, table.parents, config)
        row = table.row(config)
        if isinstance(table, CredalCpt):
            per_row.append((mask, row.vertices(), row.midpoint_pmf().probs))
        else:
            per_row.append((mask, [row.probs], row.probs))

    choices = [np.zeros((space.size, n))]
    for mask, vertices, _ in per_row:
        expanded = []
        for base in choices:
            for vertex in vertices:
                nxt = base.copy()
                nxt[mask, :] = np.asarray(vertex)
                expanded.append(nxt)
        choices = expanded
    midpoint = np.zeros((space.size, n))
    for mask, _, mid in per_row:
        midpoint[mask, :] = np.asarray(mid)
    return choices, midpoint


def enumerate_weights(
    base: np.ndarray, coordinates: Sequence[RowCoordinate], cap: int
) -> np.ndarray:
    """All vertex combinations of the coordinates applied to a base weight row.

    Returns shape (n_combos, size); raises ModelError beyond the cap.
    """
    total = 1
    for c in coordinates:
        total *= len(c.vectors)
    if total > cap:
        raise ModelError(f"enumeration of {total} vertex combinations exceeds cap {cap}")
    w = base[None, :].copy()
    for coord in coordinates:
        w = (w[:, None, :] * coord.vectors[None, :, :]).reshape(-1, base.shape[0])
    return w
