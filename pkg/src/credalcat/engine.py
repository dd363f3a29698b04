"""The testing loop: stopping rule, question picking, answers, evaluation.

Sessions are immutable snapshots: ``submit_answer`` returns a new state, so
replaying a trace reproduces every intermediate posterior exactly. Each
snapshot carries an incrementally updated belief over the joint skill
configurations, which keeps per-candidate scoring cheap for both the point
and the credal case.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _skillspace as ss
from . import scores as sc
from .credal import (
    PosteriorBounds,
    _lambda_coordinates,
    compute_posterior_bounds,
    expectation_bounds,
    midpoint,
)
from .inference import InconsistentEvidenceError
from .model import IntervalPmf, ModelError, NetworkModel, Pmf, QUESTION

BELIEF_ROW_CAP = 1 << 12


class SessionError(ValueError):
    """Misuse of a session: unknown or already-answered question, etc."""


@dataclass(frozen=True)
class StoppingRule:
    kind: str  # "score_threshold" | "max_questions" | "exhaust"
    threshold: float = 0.25
    max_questions: int = 0

    def __post_init__(self):
        if self.kind not in ("score_threshold", "max_questions", "exhaust"):
            raise SessionError(f"unknown stopping rule {self.kind!r}")
        if not (0.0 <= self.threshold <= 1.0):
            raise SessionError(f"threshold {self.threshold} outside [0, 1]")
        if self.max_questions < 0:
            raise SessionError("max_questions must be >= 0")


@dataclass(frozen=True)
class PickPolicy:
    kind: str  # "entropy_gain" | "dm_gain" | "random" | "fixed_order"
    model_kind: str = "bayesian"
    credal_bound: str = "lower"  # used only with model_kind == "credal"

    def __post_init__(self):
        if self.kind not in ("entropy_gain", "dm_gain", "random", "fixed_order"):
            raise SessionError(f"unknown pick policy {self.kind!r}")
        if self.model_kind not in ("bayesian", "credal"):
            raise SessionError(f"unknown model kind {self.model_kind!r}")
        if self.credal_bound not in ("lower", "upper", "midpoint"):
            raise SessionError(f"unknown credal bound {self.credal_bound!r}")

    @property
    def score_kind(self) -> str:
        return "dm" if self.kind == "dm_gain" else "entropy"


@dataclass(frozen=True)
class EvaluationSpec:
    """Per-skill utilities assigned to each skill state."""

    utilities: Mapping[str, Mapping[str, float]]

    @staticmethod
    def top_state_indicator(model: NetworkModel) -> "EvaluationSpec":
        """Grade = probability of the highest (last) state of each skill."""
        return EvaluationSpec(
            {
                s: {
                    st: float(i == model.variable(s).cardinality - 1)
                    for i, st in enumerate(model.states(s))
                }
                for s in model.skills()
            }
        )

    def vector(self, model: NetworkModel, skill: str) -> list[float]:
        table = self.utilities[skill]
        missing = [st for st in model.states(skill) if st not in table]
        if missing:
            raise SessionError(f"utilities for {skill!r} missing states {missing}")
        return [float(table[st]) for st in model.states(skill)]


@dataclass(frozen=True)
class CandidateScore:
    question: str
    conditional: float
    gain: float
    bounds: tuple[float, float] | None = None
    exact: bool = True


@dataclass(frozen=True)
class PickRecord:
    question: str
    policy_kind: str
    scores: tuple[CandidateScore, ...]


@dataclass(frozen=True)
class AnswerRecord:
    question: str
    answer: str
    posterior: Mapping[str, Mapping[str, object]]


@dataclass(frozen=True)
class GradeValue:
    value: float | None = None
    bounds: tuple[float, float] | None = None
    midpoint: float | None = None


# -- belief states ------------------------------------------------------------


class _BayesBelief:
    """Posterior over joint skill configurations of a point model."""

    def __init__(self, model: NetworkModel, w: np.ndarray | None = None):
        self.model = model
        self.space = ss.cached_space(model, model.skills())
        self.w = ss.point_prior_weights(model, self.space) if w is None else w
        self._likelihoods: dict[str, np.ndarray] = {}

    def _likelihood(self, question: str) -> np.ndarray:
        if question not in self._likelihoods:
            self._likelihoods[question] = ss.question_likelihood(
                self.model, self.space, question
            )
        return self._likelihoods[question]

    def advanced(self, question: str, answer: str) -> "_BayesBelief":
        a = self.model.variable(question).state_index(answer)
        w = self.w * self._likelihood(question)[:, a]
        total = w.sum()
        if total <= 0.0:
            raise InconsistentEvidenceError(
                f"answer {question}={answer} has probability zero"
            )
        child = _BayesBelief(self.model, w / total)
        child._likelihoods = self._likelihoods  # shared immutable cache
        return child

    def skill_marginal(self, skill: str) -> np.ndarray:
        card = self.model.variable(skill).cardinality
        return np.bincount(
            self.space.state_index[skill], weights=self.w, minlength=card
        )

    def skill_posterior(self, skill: str) -> Pmf:
        marg = self.skill_marginal(skill)
        return Pmf(skill, tuple(marg / marg.sum()))

    def candidate_scores(
        self, candidates: Sequence[str], kind: str, bound: str = "lower"
    ) -> list[CandidateScore]:
        skills = self.model.skills()
        prior_score = {}
        for s in skills:
            p = self.skill_posterior(s).probs
            prior_score[s] = sc.entropy_of(p) if kind == "entropy" else sc.dm_of(p)
        out = []
        for q in candidates:
            z = self.w[:, None] * self._likelihood(q)  # (configs, answers)
            p_q = z.sum(axis=0)
            gain = 0.0
            conditional_total = 0.0
            for s in skills:
                idx = self.space.state_index[s]
                card = self.model.variable(s).cardinality
                joint = np.zeros((card, z.shape[1]))
                np.add.at(joint, idx, z)
                cond = 0.0
                for i, weight in enumerate(p_q):
                    if weight <= 0.0:
                        continue
                    col = tuple(joint[:, i] / weight)
                    cond += weight * (
                        sc.entropy_of(col) if kind == "entropy" else sc.dm_of(col)
                    )
                conditional_total += cond
                gain += prior_score[s] - cond
            if kind == "entropy":
                gain = max(gain, 0.0)
            out.append(CandidateScore(q, float(conditional_total), float(gain)))
        return out

    def posterior_score_total(self, kind: str, bound: str = "lower") -> float:
        total = 0.0
        for s in self.model.skills():
            p = self.skill_posterior(s).probs
            total += sc.entropy_of(p) if kind == "entropy" else sc.dm_of(p)
        return total

    def grades(self, spec: EvaluationSpec) -> dict[str, GradeValue]:
        out = {}
        for s in self.model.skills():
            u = np.asarray(spec.vector(self.model, s))
            p = np.asarray(self.skill_posterior(s).probs)
            out[s] = GradeValue(value=float(u @ p))
        return out

    def posterior_snapshot(self) -> dict[str, dict[str, object]]:
        return {
            s: {"p": [float(v) for v in self.skill_posterior(s).probs]}
            for s in self.model.skills()
        }


class _CredalBelief:
    """Interval posterior machinery for a credal model.

    Keeps the once-enumerated skill-row vertex matrix and re-derives the
    collapsed answered-question likelihood intervals from the evidence on
    demand. Falls back to the generic credal-inference pipeline when the
    model is too large for cached enumeration.
    """

    def __init__(self, model: NetworkModel, evidence: dict[str, str] | None = None):
        self.model = model
        self.evidence = dict(evidence or {})
        self.space = ss.cached_space(model, model.skills())
        self.monotone = self._monotone_model(model, self.space)
        rows = ss.cached_skill_rows(model, self.space)
        combos = 1
        for c in rows:
            combos *= len(c.vectors)
        self.enumerable = combos <= BELIEF_ROW_CAP
        self.w_rows = (
            ss.cached_row_weights(model, self.space, BELIEF_ROW_CAP)
            if self.enumerable
            else None
        )
        self._groups: list[ss.LambdaGroup] | None = None
        self._bounds: dict[str, IntervalPmf] = {}
        self._memo: dict = {}

    @staticmethod
    def _monotone_model(model: NetworkModel, space: ss.SkillSpace) -> bool:
        for skill in space.skills:
            if model.variable(skill).cardinality != 2:
                return False
            parents = model.parents(skill)
            if len(parents) > 1:
                return False
            if parents:
                table = model.table(skill)
                p_states = model.states(parents[0])
                if (
                    table.row((p_states[0],)).upper[1]
                    > table.row((p_states[1],)).lower[1] + 1e-12
                ):
                    return False
        return all(len(model.parents(q)) == 1 for q in model.questions())

    def advanced(self, question: str, answer: str) -> "_CredalBelief":
        evidence = dict(self.evidence)
        evidence[question] = answer
        return _CredalBelief(self.model, evidence)

    def groups(self) -> list[ss.LambdaGroup]:
        if self._groups is None:
            self._groups = ss.lambda_groups(self.model, self.space, self.evidence)
        return self._groups

    def skill_bounds(self, skill: str) -> IntervalPmf:
        if skill in self._bounds:
            return self._bounds[skill]
        groups = self.groups()
        if self.enumerable and self.monotone:
            lowers = [0.0, 0.0]
            uppers = [0.0, 0.0]
            mask = self.space.mask(skill, 1)
            for direction in ("upper", "lower"):
                picks = []
                for g in groups:
                    high = (
                        self.model.variable(g.parents[0]).state_index(g.config[0]) == 1
                    )
                    picks.append("hi" if (direction == "upper") == high else "lo")
                lam = ss.lambda_vector(self.space, groups, picks)
                w = self.w_rows * lam[None, :]
                den = w.sum(axis=1)
                if np.any(den <= 0.0):
                    raise InconsistentEvidenceError("evidence has probability zero")
                ratios = w[:, mask].sum(axis=1) / den
                if direction == "upper":
                    uppers[1] = float(ratios.max())
                    lowers[0] = 1.0 - uppers[1]
                else:
                    lowers[1] = float(ratios.min())
                    uppers[0] = 1.0 - lowers[1]
            bounds = IntervalPmf(skill, lowers, uppers)
        else:
            bounds = compute_posterior_bounds(self.model, skill, self.evidence).bounds
        self._bounds[skill] = bounds
        return bounds

    def skill_posterior(self, skill: str) -> PosteriorBounds:
        return PosteriorBounds(
            self.skill_bounds(skill),
            exact=self.enumerable and self.monotone,
            method="belief",
        )

    def _full_weights(self) -> np.ndarray:
        # Row vertices x lambda-interval endpoints; single-skill models stay tiny.
        if "full_weights" not in self._memo:
            w = self.w_rows
            for coord in _lambda_coordinates(self.space, self.groups()):
                w = (w[:, None, :] * coord.vectors[None, :, :]).reshape(
                    -1, self.space.size
                )
            self._memo["full_weights"] = w
        return self._memo["full_weights"]

    def _question_rows(self, question: str) -> list[IntervalPmf]:
        table = self.model.table(question)
        parent = self.model.parents(question)[0]
        return [table.row((st,)) for st in self.model.states(parent)]

    def candidate_scores(
        self, candidates: Sequence[str], kind: str, bound: str = "lower"
    ) -> list[CandidateScore]:
        single_skill = len(self.model.skills()) == 1
        out = []
        for q in candidates:
            parents = self.model.parents(q)
            if len(parents) != 1:
                raise ModelError(
                    f"credal scoring needs single-parent questions; {q!r} has "
                    f"{len(parents)} parents"
                )
            parent = parents[0]
            rows = self._question_rows(q)
            memo_key = (
                "cand",
                kind,
                bound,
                parent,
                tuple((r.lower, r.upper) for r in rows),
            )
            if memo_key not in self._memo:
                self._memo[memo_key] = self._score_candidate(
                    kind, bound, q, parent, rows, single_skill
                )
            conditional, bounds, exact = self._memo[memo_key]
            prior = self._prior_score(parent, kind, bound)
            out.append(
                CandidateScore(q, conditional, prior - conditional, bounds, exact)
            )
        return out

    def _score_candidate(
        self,
        kind: str,
        bound: str,
        question: str,
        parent: str,
        rows: list[IntervalPmf],
        single_skill: bool,
    ) -> tuple[float, tuple[float, float] | None, bool]:
        exact_flag = single_skill and not self.evidence
        if kind == "dm":
            skill_bounds = self.skill_bounds(parent)
            m, n = len(skill_bounds.lower), len(rows[0].lower)
            if m == 2 and n == 2:
                # Boolean fast paths, cross-checked against the LP route.
                mass_hi = sc.modal_mass_upper_boolean(skill_bounds, rows)
                lower = max(2.0 * (1.0 - mass_hi), 0.0)
                if bound == "lower":
                    return lower, None, exact_flag
                mass_lo = sc.modal_mass_lower_boolean(skill_bounds, rows)
                upper = min(max(2.0 * (1.0 - mass_lo), 0.0), 1.0)
                bounds = (lower, upper)
                value = {
                    "upper": upper,
                    "midpoint": (lower + upper) / 2.0,
                }[bound]
                return value, bounds, exact_flag
            value = sc.credal_conditional_dm_bounds(
                skill_bounds, rows, outer_approximation=not exact_flag
            )
            return float(value.pick(bound)), value.bounds, value.exact
        if single_skill and self.enumerable:
            w = self._full_weights()
            choices, _ = ss.question_row_choices(self.model, self.space, question)
            card = self.model.variable(parent).cardinality
            masks = [self.space.mask(parent, i) for i in range(card)]
            best = min(
                float(sc._conditional_entropy_batch(w, L, masks).min())
                for L in choices
            )
            return best, None, True
        skill_bounds = self.skill_bounds(parent)
        value = sc.conditional_entropy_lower_from_bounds(skill_bounds, rows)
        return float(value.value), None, False

    def _prior_score(self, skill: str, kind: str, bound: str) -> float:
        key = ("prior", skill, kind, bound)
        if key not in self._memo:
            bounds = self.skill_bounds(skill)
            if kind == "entropy":
                value = sc.credal_entropy_lower(bounds).value
            else:
                # Closed forms for the modal-probability range; equal to the
                # credal_dm_bounds LP route (cross-checked in tests).
                m = len(bounds.lower)
                lower = m * (1.0 - sc.max_singleton_upper(bounds)) / (m - 1.0)
                if bound == "lower":
                    value = max(lower, 0.0)
                else:
                    upper = (
                        m
                        * (1.0 - sc.min_max_probability_waterfill(bounds))
                        / (m - 1.0)
                    )
                    value = (
                        upper if bound == "upper" else (max(lower, 0.0) + upper) / 2.0
                    )
            self._memo[key] = float(value)
        return self._memo[key]

    def posterior_score_total(self, kind: str, bound: str = "lower") -> float:
        return sum(self._prior_score(s, kind, bound) for s in self.model.skills())

    def grades(self, spec: EvaluationSpec) -> dict[str, GradeValue]:
        out = {}
        for s in self.model.skills():
            bounds = self.skill_bounds(s)
            u = spec.vector(self.model, s)
            lo, hi = expectation_bounds(bounds, u)
            mid = float(np.asarray(u) @ np.asarray(midpoint(bounds).probs))
            out[s] = GradeValue(bounds=(lo, hi), midpoint=mid)
        return out

    def posterior_snapshot(self) -> dict[str, dict[str, object]]:
        out = {}
        for s in self.model.skills():
            b = self.skill_bounds(s)
            out[s] = {
                "lower": [float(v) for v in b.lower],
                "upper": [float(v) for v in b.upper],
            }
        return out


# -- sessions -------------------------------------------------------------------


class SessionState:
    """One taker's test in progress: evidence, remaining repository, trace."""

    def __init__(
        self,
        model: NetworkModel,
        remaining: tuple[str, ...],
        evidence_items: tuple[tuple[str, str], ...],
        trace: tuple,
        rng_seed: int,
        record_trace: bool,
        belief,
    ):
        self.model = model
        self.remaining = remaining
        self.evidence_items = evidence_items
        self.trace = trace
        self.rng_seed = rng_seed
        self.record_trace = record_trace
        self._belief = belief

    @property
    def evidence(self) -> dict[str, str]:
        return dict(self.evidence_items)

    def __repr__(self):
        return (
            f"SessionState(answered={len(self.evidence_items)}, "
            f"remaining={len(self.remaining)})"
        )


def new_session(
    model: NetworkModel,
    repository: Sequence[str] | None = None,
    rng_seed: int = 0,
    record_trace: bool = True,
) -> SessionState:
    """Fresh session over the given repository (default: all questions)."""
    model.require_valid()
    repo = tuple(repository) if repository is not None else model.questions()
    for q in repo:
        if model.variable(q).role != QUESTION:
            raise SessionError(f"repository entry {q!r} is not a question")
    if len(set(repo)) != len(repo):
        raise SessionError("repository contains duplicate questions")
    belief = (
        _BayesBelief(model) if model.kind == "bayesian" else _CredalBelief(model)
    )
    return SessionState(model, repo, (), (), rng_seed, record_trace, belief)


def pick_next(
    session: SessionState, policy: PickPolicy
) -> tuple[str, tuple[CandidateScore, ...]]:
    """Choose the next question; never mutates the session (idempotent)."""
    if not session.remaining:
        raise SessionError("repository is exhausted")
    if policy.model_kind != session.model.kind:
        raise SessionError(
            f"policy expects a {policy.model_kind} model, session has "
            f"{session.model.kind}"
        )
    if policy.kind == "fixed_order":
        return session.remaining[0], ()
    if policy.kind == "random":
        rng = np.random.default_rng(
            np.random.SeedSequence((session.rng_seed, len(session.evidence_items)))
        )
        return session.remaining[int(rng.integers(len(session.remaining)))], ()
    if session.model.kind == "bayesian":
        scored = session._belief.candidate_scores(
            session.remaining, policy.score_kind
        )
    else:
        scored = session._belief.candidate_scores(
            session.remaining, policy.score_kind, policy.credal_bound
        )
    best_gain = max(c.gain for c in scored)
    # Deterministic tie-break: smallest question id among the near-max gains.
    top = min(
        (c for c in scored if c.gain >= best_gain - 1e-12), key=lambda c: c.question
    )
    return top.question, tuple(sorted(scored, key=lambda c: c.question))


def submit_answer(
    session: SessionState,
    question: str,
    answer: str,
    pick_scores: tuple[CandidateScore, ...] | None = None,
    policy_kind: str = "",
) -> SessionState:
    """Record one answer; returns the successor state."""
    if question in dict(session.evidence_items):
        raise SessionError(f"question {question!r} was already answered")
    if question not in session.remaining:
        raise SessionError(f"question {question!r} is not in the remaining repository")
    session.model.variable(question).state_index(answer)  # validates the label
    belief = session._belief.advanced(question, answer)
    trace = session.trace
    if session.record_trace:
        records = []
        if pick_scores is not None:
            records.append(PickRecord(question, policy_kind, pick_scores))
        records.append(AnswerRecord(question, answer, belief.posterior_snapshot()))
        trace = trace + tuple(records)
    return SessionState(
        session.model,
        tuple(q for q in session.remaining if q != question),
        session.evidence_items + ((question, answer),),
        trace,
        session.rng_seed,
        session.record_trace,
        belief,
    )


def should_stop(
    session: SessionState, rule: StoppingRule, policy: PickPolicy
) -> bool:
    if rule.kind == "exhaust":
        return not session.remaining
    if rule.kind == "max_questions":
        return len(session.evidence_items) >= rule.max_questions
    if not session.remaining:
        return True
    score = session._belief.posterior_score_total(
        policy.score_kind, policy.credal_bound
    )
    return score <= rule.threshold


def evaluate(
    session: SessionState, spec: EvaluationSpec | None = None
) -> dict[str, GradeValue]:
    """Expected utility of each skill under the current posterior."""
    spec = spec or EvaluationSpec.top_state_indicator(session.model)
    return session._belief.grades(spec)


def skill_report(session: SessionState) -> dict[str, dict[str, object]]:
    """Posterior snapshot per skill (point probabilities or bounds)."""
    return session._belief.posterior_snapshot()


def sample_answer_from(
    model: NetworkModel,
    question: str,
    skill_states: Mapping[str, str],
    rng: np.random.Generator,
) -> str:
    """Draw an answer from P(question | its parents' states)."""
    cpt = model.table(question)
    config = tuple(skill_states[p] for p in cpt.parents)
    probs = np.asarray(cpt.row(config).probs)
    states = model.states(question)
    return states[int(rng.choice(len(states), p=probs / probs.sum()))]


def run_test(
    model: NetworkModel,
    repository: Sequence[str] | None,
    policy: PickPolicy,
    rule: StoppingRule,
    answer_source: Callable[[str], str] | None = None,
    *,
    profile: Mapping[str, str] | None = None,
    answer_model: NetworkModel | None = None,
    rng: np.random.Generator | None = None,
    rng_seed: int = 0,
    record_trace: bool = False,
    max_steps: int | None = None,
) -> SessionState:
    """Full stop/pick/answer loop.

    Answers come either from ``answer_source`` (interactive mode: question id
    -> state) or are sampled from the CPTs under a simulated ``profile`` of
    true skill states. Credal sessions sampling by profile must pass the
    point model as ``answer_model``.
    """
    if answer_source is None:
        if profile is None:
            raise SessionError("run_test needs an answer_source or a profile")
        sampler_model = answer_model or model
        if sampler_model.kind != "bayesian":
            raise SessionError("sampling answers needs a point (bayesian) model")
        sample_rng = rng or np.random.default_rng(rng_seed)
        states = dict(profile)

        def answer_source(question: str) -> str:
            return sample_answer_from(sampler_model, question, states, sample_rng)

    session = new_session(model, repository, rng_seed, record_trace)
    steps = 0
    while not should_stop(session, rule, policy):
        question, scores = pick_next(session, policy)
        answer = answer_source(question)
        session = submit_answer(session, question, answer, scores, policy.kind)
        steps += 1
        if max_steps is not None and steps >= max_steps:
            break
    return session


def export_trace(session: SessionState) -> list[dict]:
    """JSON-ready trace records: picks with score tables, answers, posteriors."""
    out: list[dict] = []
    for record in session.trace:
        if isinstance(record, PickRecord):
            out.append(
                {
                    "type": "pick",
                    "question": record.question,
                    "policy": record.policy_kind,
                    "scores": [
                        {
                            "question": s.question,
                            "conditional": s.conditional,
                            "gain": s.gain,
                            "bounds": list(s.bounds) if s.bounds else None,
                            "exact": s.exact,
                        }
                        for s in record.scores
                    ],
                }
            )
        else:
            out.append(
                {
                    "type": "answer",
                    "question": record.question,
                    "answer": record.answer,
                    "posterior": record.posterior,
                }
            )
    return out


def replay(
    model: NetworkModel,
    answers: Sequence[tuple[str, str]],
    repository: Sequence[str] | None = None,
    rng_seed: int = 0,
) -> SessionState:
    """Rebuild a session from an ordered answer list (event-log replay)."""
    session = new_session(model, repository, rng_seed, record_trace=False)
    for question, answer in answers:
        session = submit_answer(session, question, answer)
    return session
