"""Simulation harness: student populations, experiment arms, metrics export.

Students are simulated by sampling each question's answer from its CPT row
under the student's true skill profile. One answer sheet is drawn per
(seed, student) and shared by every arm, so arms are compared on identical
data and all arms coincide once the repository is exhausted; the random
pick policy draws from a separate per-(seed, arm, student) stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import engine
from .model import (
    ModelError,
    NetworkModel,
    PerturbationSpec,
    load_model,
    perturb_to_credal,
)
from ._skillspace import cached_space

ANSWER_STREAM_TAG = 7919
PICK_STREAM_TAG = 104729


@dataclass(frozen=True)
class StudentProfile:
    """True state of every skill for one simulated student."""

    skills: Mapping[str, str]

    def state(self, skill: str) -> str:
        return self.skills[skill]


@dataclass(frozen=True)
class ArmSpec:
    label: str
    pick: str  # PickPolicy kind
    model_kind: str = "bayesian"
    credal_bound: str = "lower"

    def policy(self) -> engine.PickPolicy:
        return engine.PickPolicy(self.pick, self.model_kind, self.credal_bound)


@dataclass(frozen=True)
class ExperimentConfig:
    model: NetworkModel
    credal_model: NetworkModel | None
    repository: tuple[str, ...]
    population: int
    arms: tuple[ArmSpec, ...]
    checkpoints: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if self.population < 1:
            raise ModelError("population count must be >= 1")
        if any(c > len(self.repository) for c in self.checkpoints):
            raise ModelError("checkpoints cannot exceed the repository size")
        if any(a.model_kind == "credal" for a in self.arms) and self.credal_model is None:
            raise ModelError("credal arms need a credal model")


@dataclass(frozen=True)
class MetricsSeries:
    arm: str
    checkpoints: tuple[int, ...]
    accuracy: tuple[float, ...]
    brier: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.checkpoints) == len(self.accuracy) == len(self.brier)):
            raise ModelError("metric series lengths must match the checkpoints")


def uniform_profiles(model: NetworkModel, count: int) -> list[StudentProfile]:
    """Deterministic equal split of students across joint skill configurations."""
    space = cached_space(model, model.skills())
    profiles = []
    for config in range(space.size):
        assignment = {
            s: model.states(s)[int(space.state_index[s][config])]
            for s in space.skills
        }
        profiles.append(StudentProfile(assignment))
    return [profiles[i % len(profiles)] for i in range(count)]


def sample_answer(
    model: NetworkModel, question: str, profile: StudentProfile, rng: np.random.Generator
) -> str:
    """Draw an answer from P(question | profile's parent skill states)."""
    return engine.sample_answer_from(model, question, profile.skills, rng)


def answer_sheet(
    model: NetworkModel,
    repository: Sequence[str],
    profile: StudentProfile,
    seed: int,
    student: int,
) -> dict[str, str]:
    rng = np.random.default_rng(np.random.SeedSequence((seed, ANSWER_STREAM_TAG, student)))
    return {q: sample_answer(model, q, profile, rng) for q in repository}


def _pick_seed(seed: int, arm_index: int, student: int) -> int:
    stream = np.random.SeedSequence((seed, PICK_STREAM_TAG, arm_index, student))
    return int(stream.generate_state(1)[0])


def _predictions(session: engine.SessionState) -> dict[str, tuple[int, float]]:
    """Per skill: (argmax state index, probability of state 1).

    Credal sessions decide by the interval midpoint. Probabilities are
    snapped to 1e-9 before the argmax so that exact ties (which float
    rounding would otherwise break in answer-order-dependent ways) always
    resolve to the lower state index, keeping evaluation exchangeable.
    """
    out = {}
    snapshot = session._belief
    for skill in session.model.skills():
        if session.model.kind == "bayesian":
            probs = np.asarray(snapshot.skill_posterior(skill).probs)
        else:
            bounds = snapshot.skill_bounds(skill)
            probs = np.asarray(bounds.midpoint_pmf().probs)
        snapped = np.round(probs, 9)
        out[skill] = (int(np.argmax(snapped)), float(probs[1]))
    return out


def run_experiment(config: ExperimentConfig) -> list[MetricsSeries]:
    """Run every arm over the population; exhaust stopping, paired answers."""
    model = config.model
    model.require_valid()
    for skill in model.skills():
        if model.variable(skill).cardinality != 2:
            raise ModelError("experiment metrics assume Boolean skills")
    profiles = uniform_profiles(model, config.population)
    sheets = [
        answer_sheet(model, config.repository, profile, config.seed, i)
        for i, profile in enumerate(profiles)
    ]
    checkpoints = tuple(sorted(config.checkpoints))
    skills = model.skills()
    n_skills = len(skills)

    series = []
    for arm_index, arm in enumerate(config.arms):
        policy = arm.policy()
        arm_model = config.credal_model if arm.model_kind == "credal" else model
        hits = np.zeros(len(checkpoints))
        sq_err = np.zeros(len(checkpoints))
        cp_index = {c: i for i, c in enumerate(checkpoints)}
        for student, (profile, sheet) in enumerate(zip(profiles, sheets)):
            true_idx = {
                s: model.variable(s).state_index(profile.state(s)) for s in skills
            }
            session = engine.new_session(
                arm_model,
                config.repository,
                rng_seed=_pick_seed(config.seed, arm_index, student),
                record_trace=False,
            )
            while True:
                count = len(session.evidence_items)
                if count in cp_index:
                    preds = _predictions(session)
                    i = cp_index[count]
                    for s in skills:
                        pred_idx, p_high = preds[s]
                        hits[i] += pred_idx == true_idx[s]
                        sq_err[i] += (p_high - float(true_idx[s] == 1)) ** 2
                if not session.remaining:
                    break
                question, _ = engine.pick_next(session, policy)
                session = engine.submit_answer(session, question, sheet[question])
        denom = config.population * n_skills
        series.append(
            MetricsSeries(
                arm.label,
                checkpoints,
                tuple(float(h) / denom for h in hits),
                tuple(float(e) / denom for e in sq_err),
            )
        )
    return series


# -- files --------------------------------------------------------------------


def export_metrics(series: Sequence[MetricsSeries], path: str | Path) -> None:
    """Write the metrics table: arm, question_count, accuracy, brier."""
    if not series:
        raise ModelError("no metric series to export")
    lines = ["arm,question_count,accuracy,brier"]
    for s in series:
        for c, acc, brier in zip(s.checkpoints, s.accuracy, s.brier):
            lines.append(f"{s.arm},{c},{acc:.12g},{brier:.12g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metrics(path: str | Path) -> list[MetricsSeries]:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines or lines[0] != "arm,question_count,accuracy,brier":
        raise ModelError(f"{path}: not a metrics file")
    data: dict[str, list[tuple[int, float, float]]] = {}
    order: list[str] = []
    for line in lines[1:]:
        arm, count, acc, brier = line.split(",")
        if arm not in data:
            data[arm] = []
            order.append(arm)
        data[arm].append((int(count), float(acc), float(brier)))
    return [
        MetricsSeries(
            arm,
            tuple(c for c, _, _ in rows),
            tuple(a for _, a, _ in rows),
            tuple(b for _, _, b in rows),
        )
        for arm, rows in ((arm, data[arm]) for arm in order)
    ]


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    """Parse an experiment document; model paths resolve relative to it."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not valid JSON: {exc.msg}") from None
    return experiment_config_from_doc(doc, base_dir=path.parent)


def experiment_config_from_doc(doc: Mapping, base_dir: Path) -> ExperimentConfig:
    model = load_model((base_dir / doc["model"]).read_text(encoding="utf-8"))
    credal_model = None
    credal_doc = doc.get("credal")
    if credal_doc:
        if "epsilon" in credal_doc:
            credal_model = perturb_to_credal(
                model, PerturbationSpec(float(credal_doc["epsilon"]))
            )
        else:
            credal_model = load_model(
                (base_dir / credal_doc["model"]).read_text(encoding="utf-8")
            )
    repository = tuple(doc.get("repository") or model.questions())
    checkpoints_doc = doc.get("checkpoints", "all")
    if checkpoints_doc == "all":
        checkpoints = tuple(range(len(repository) + 1))
    else:
        checkpoints = tuple(int(c) for c in checkpoints_doc)
    arms = tuple(
        ArmSpec(
            a["label"],
            a["pick"],
            a.get("model_kind", "bayesian"),
            a.get("credal_bound", "lower"),
        )
        for a in doc["arms"]
    )
    return ExperimentConfig(
        model=model,
        credal_model=credal_model,
        repository=repository,
        population=int(doc["population"]["count"]),
        arms=arms,
        checkpoints=checkpoints,
        seed=int(doc.get("seed", 0)),
    )
