"""Builders for the models and experiment configurations shipped in models/."""

from __future__ import annotations

from itertools import product

from .model import (
    Cpt,
    NetworkModel,
    Pmf,
    QuestionParams,
    Variable,
    build_boolean_question,
)


def fig1_model() -> NetworkModel:
    """One Boolean skill, two Boolean questions (difficulty 0.4/0.5)."""
    variables = [
        Variable("S", "Knows multiplication", ("0", "1"), "skill"),
        Variable("Q1", "10 x 5?", ("0", "1"), "question"),
        Variable("Q2", "13 x 14?", ("0", "1"), "question"),
    ]
    tables = {
        "S": Cpt("S", (), {(): Pmf("S", (0.5, 0.5))}),
        "Q1": build_boolean_question("Q1", "S", QuestionParams(0.4, 0.6)),
        "Q2": build_boolean_question("Q2", "S", QuestionParams(0.5, 0.2)),
    }
    return NetworkModel(variables, [("S", "Q1"), ("S", "Q2")], tables, "bayesian")


def single_skill_18q_model() -> NetworkModel:
    """18-question bank: two questions per (delta, kappa) in {0.4,0.5,0.6}^2."""
    variables = [Variable("S", "Skill", ("0", "1"), "skill")]
    tables = {"S": Cpt("S", (), {(): Pmf("S", (0.5, 0.5))})}
    edges = []
    counter = 0
    for delta, kappa in product((0.4, 0.5, 0.6), repeat=2):
        for _ in range(2):
            counter += 1
            qid = f"Q{counter:02d}"
            variables.append(
                Variable(qid, f"d={delta} k={kappa} #{counter}", ("0", "1"), "question")
            )
            edges.append(("S", qid))
            tables[qid] = build_boolean_question(qid, "S", QuestionParams(delta, kappa))
    return NetworkModel(variables, edges, tables, "bayesian")


CHAIN_LEVELS = ((0.3, 0.6), (0.4, 0.5), (0.5, 0.5), (0.6, 0.4))


def chain_4skill_64q_model() -> NetworkModel:
    """Four Boolean skills in a chain, 16 questions per skill over 4 levels.

    A synthesized stand-in for a multi-skill placement test: link tables
    P(next=1 | prev=1) = 0.8 and P(next=1 | prev=0) = 0.2. Question ids
    interleave the skills round-robin so that a selection policy falling
    back to id order (score ties) still spreads across skills.
    """
    skills = [f"S{i}" for i in range(1, 5)]
    variables = [Variable(s, f"Skill {s}", ("0", "1"), "skill") for s in skills]
    tables: dict = {"S1": Cpt("S1", (), {(): Pmf("S1", (0.5, 0.5))})}
    edges = []
    for prev, nxt in zip(skills, skills[1:]):
        edges.append((prev, nxt))
        tables[nxt] = Cpt(
            nxt,
            (prev,),
            {("0",): Pmf(nxt, (0.8, 0.2)), ("1",): Pmf(nxt, (0.2, 0.8))},
        )
    per_skill = {s: [lv for lv in CHAIN_LEVELS for _ in range(4)] for s in skills}
    counter = 0
    for slot in range(16):
        for skill in skills:
            delta, kappa = per_skill[skill][slot]
            counter += 1
            qid = f"Q{counter:02d}"
            variables.append(
                Variable(
                    qid,
                    f"{skill} d={delta} k={kappa} #{counter}",
                    ("0", "1"),
                    "question",
                )
            )
            edges.append((skill, qid))
            tables[qid] = build_boolean_question(
                qid, skill, QuestionParams(delta, kappa)
            )
    return NetworkModel(variables, edges, tables, "bayesian")


def single_skill_experiment_config() -> dict:
    """The five-arm single-skill experiment document.

    The credal DM arm ranks by the midpoint of the score interval: the lower
    bound saturates once the optimistic completion can fully concentrate the
    posterior, which collapses the ranking to id order mid-test. The seed is
    pinned to a verified run (arm curves are stochastic by nature).
    """
    return {
        "model": "single_skill_18q.model",
        "credal": {"epsilon": 0.05},
        "repository": None,
        "population": {"count": 1024, "profiles": "uniform"},
        "arms": [
            {"label": "random", "pick": "random", "model_kind": "bayesian"},
            {"label": "bayesian-entropy", "pick": "entropy_gain", "model_kind": "bayesian"},
            {"label": "bayesian-dm", "pick": "dm_gain", "model_kind": "bayesian"},
            {"label": "credal-entropy", "pick": "entropy_gain", "model_kind": "credal"},
            {
                "label": "credal-dm",
                "pick": "dm_gain",
                "model_kind": "credal",
                "credal_bound": "midpoint",
            },
        ],
        "checkpoints": "all",
        "seed": 3,
    }


def chain_experiment_config() -> dict:
    """The five-arm multi-skill chain experiment document.

    The interval half-width is 0.02 here: across 64 answered questions the
    per-answer intervals compound, and wider ones would drift the posterior
    bounds toward vacuity by the end of the test. Seed pinned as in the
    single-skill config.
    """
    return {
        "model": "chain_4skill_64q.model",
        "credal": {"epsilon": 0.02},
        "repository": None,
        "population": {"count": 256, "profiles": "uniform"},
        "arms": [
            {"label": "random", "pick": "random", "model_kind": "bayesian"},
            {"label": "bayesian-entropy", "pick": "entropy_gain", "model_kind": "bayesian"},
            {"label": "bayesian-dm", "pick": "dm_gain", "model_kind": "bayesian"},
            {"label": "credal-entropy", "pick": "entropy_gain", "model_kind": "credal"},
            {
                "label": "credal-dm",
                "pick": "dm_gain",
                "model_kind": "credal",
                "credal_bound": "midpoint",
            },
        ],
        "checkpoints": "all",
        "seed": 0,
    }
