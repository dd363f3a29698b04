"""Exact posterior inference in discrete Bayesian networks.

Variable elimination with a min-degree ordering; the models in this package
are small, so no approximation is ever needed. All functions are pure and
safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import ModelError, NetworkModel, Pmf, QUESTION, SKILL

Evidence = Mapping[str, str]


class InconsistentEvidenceError(ValueError):
    """The observed answers have probability zero under the model."""


def check_evidence(model: NetworkModel, evidence: Evidence) -> dict[str, str]:
    """Validate evidence keys/states; only questions can be observed."""
    out = {}
    for var_id, state in evidence.items():
        var = model.variable(var_id)
        if var.role != QUESTION:
            raise ModelError(f"evidence on non-question variable {var_id!r}")
        var.state_index(state)  # raises on unknown state
        out[var_id] = state
    return out


@dataclass
class _Factor:
    vars: tuple[str, ...]
    table: np.ndarray


def _cpt_factor(model: NetworkModel, var_id: str) -> _Factor:
    cpt = model.table(var_id)
    axes = cpt.parents + (var_id,)
    shape = tuple(model.variable(v).cardinality for v in axes)
    table = np.empty(shape)
    for config in model.parent_configs(var_id):
        idx = tuple(
            model.variable(p).state_index(s) for p, s in zip(cpt.parents, config)
        )
        table[idx] = cpt.row(config).probs
    return _Factor(axes, table)


def _restrict(factor: _Factor, var_id: str, state_index: int) -> _Factor:
    axis = factor.vars.index(var_id)
    table = np.take(factor.table, state_index, axis=axis)
    keep = tuple(v for v in factor.vars if v != var_id)
    return _Factor(keep, table)


def _multiply(a: _Factor, b: _Factor) -> _Factor:
    out_vars = a.vars + tuple(v for v in b.vars if v not in a.vars)
    a_shape = [slice(None)] * len(a.vars) + [None] * (len(out_vars) - len(a.vars))
    axes_b = [out_vars.index(v) for v in b.vars]
    tb = np.moveaxis(
        b.table.reshape(b.table.shape + (1,) * (len(out_vars) - len(b.vars))),
        range(len(b.vars)),
        axes_b,
    )
    return _Factor(out_vars, a.table[tuple(a_shape)] * tb)


def _marginalize(factor: _Factor, var_id: str) -> _Factor:
    axis = factor.vars.index(var_id)
    keep = tuple(v for v in factor.vars if v != var_id)
    return _Factor(keep, factor.table.sum(axis=axis))


def _prune_barren(
    model: NetworkModel, keep: set[str], evidence: Evidence
) -> set[str]:
    """Variables that can influence P(keep, evidence)."""
    alive = set(keep) | set(evidence)
    relevant: set[str] = set()
    stack = list(alive)
    while stack:
        v = stack.pop()
        if v in relevant:
            continue
        relevant.add(v)
        stack.extend(model.parents(v))
    return relevant


def _min_degree_order(factors: list[_Factor], eliminate: set[str]) -> list[str]:
    neighbors: dict[str, set[str]] = {v: set() for v in eliminate}
    for f in factors:
        for v in f.vars:
            if v in eliminate:
                neighbors[v].update(u for u in f.vars if u != v)
    order = []
    remaining = set(eliminate)
    while remaining:
        v = min(remaining, key=lambda u: (len(neighbors[u] & remaining), u))
        order.append(v)
        remaining.discard(v)
        nbrs = neighbors[v] & remaining
        for u in nbrs:
            neighbors[u].update(nbrs - {u})
    return order


def _joint_factor(
    model: NetworkModel, keep: tuple[str, ...], evidence: Evidence
) -> _Factor:
    """Unnormalized P(keep, evidence) by variable elimination."""
    if model.kind != "bayesian":
        raise ModelError("exact inference expects a Bayesian model")
    evidence = check_evidence(model, evidence)
    for k in keep:
        if k in evidence:
            raise ModelError(f"query variable {k!r} is already observed")
    relevant = _prune_barren(model, set(keep), evidence)
    factors = []
    for var_id in relevant:
        f = _cpt_factor(model, var_id)
        for ev_var, ev_state in evidence.items():
            if ev_var in f.vars:
                f = _restrict(f, ev_var, model.variable(ev_var).state_index(ev_state))
        factors.append(f)
    to_eliminate = {v for v in relevant if v not in keep and v not in evidence}
    for var in _min_degree_order(factors, to_eliminate):
        bucket = [f for f in factors if var in f.vars]
        factors = [f for f in factors if var not in f.vars]
        prod = bucket[0]
        for f in bucket[1:]:
            prod = _multiply(prod, f)
        factors.append(_marginalize(prod, var))
    result = _Factor((), np.array(1.0))
    for f in factors:
        result = _multiply(result, f)
    if result.vars != tuple(keep):
        perm = [result.vars.index(v) for v in keep]
        result = _Factor(tuple(keep), np.transpose(result.table, perm))
    return result


def posterior(model: NetworkModel, target: str, evidence: Evidence) -> Pmf:
    """Exact P(target | evidence) for a skill variable."""
    if model.variable(target).role != SKILL:
        raise ModelError(f"posterior target {target!r} is not a skill")
    f = _joint_factor(model, (target,), evidence)
    total = float(f.table.sum())
    if total <= 0.0:
        raise InconsistentEvidenceError(
            f"evidence {dict(evidence)!r} has probability zero"
        )
    return Pmf(target, tuple(f.table / total))


def question_marginal(model: NetworkModel, question: str, evidence: Evidence) -> Pmf:
    """Exact P(question | evidence) for an unanswered question."""
    if model.variable(question).role != QUESTION:
        raise ModelError(f"{question!r} is not a question")
    if question in evidence:
        raise ModelError(f"question {question!r} is already answered")
    f = _joint_factor(model, (question,), evidence)
    total = float(f.table.sum())
    if total <= 0.0:
        raise InconsistentEvidenceError(
            f"evidence {dict(evidence)!r} has probability zero"
        )
    return Pmf(question, tuple(f.table / total))


@dataclass(frozen=True)
class JointSkillQuestion:
    """P(skill state, question state | evidence), rows = skill, cols = question."""

    skill: str
    question: str
    skill_states: tuple[str, ...]
    question_states: tuple[str, ...]
    p: np.ndarray

    def prob(self, skill_state: str, question_state: str) -> float:
        i = self.skill_states.index(skill_state)
        j = self.question_states.index(question_state)
        return float(self.p[i, j])


def joint_skill_question(
    model: NetworkModel, skill: str, question: str, evidence: Evidence
) -> JointSkillQuestion:
    """Exact joint of one skill and one unanswered question given evidence."""
    if model.variable(skill).role != SKILL:
        raise ModelError(f"{skill!r} is not a skill")
    if model.variable(question).role != QUESTION:
        raise ModelError(f"{question!r} is not a question")
    f = _joint_factor(model, (skill, question), evidence)
    total = float(f.table.sum())
    if total <= 0.0:
        raise InconsistentEvidenceError(
            f"evidence {dict(evidence)!r} has probability zero"
        )
    return JointSkillQuestion(
        skill,
        question,
        model.states(skill),
        model.states(question),
        f.table / total,
    )
