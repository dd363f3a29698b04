"""Command line entry points: validate, score, simulate, serve, bundle.

Exit codes: 0 success, 1 domain violation (invalid model, unknown question),
2 usage or parse error (bad flags, unreadable or malformed files).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import bundled, engine, harness
from .model import (
    ModelError,
    ModelFormatError,
    PerturbationSpec,
    load_model,
    perturb_to_credal,
    serialize,
    validate,
)


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        click.echo(f"error: cannot read {path}: {exc}", err=True)
        sys.exit(2)


def _load_model_or_exit(path: str, validated: bool = True):
    text = _read_text(path)
    try:
        return load_model(text, validate_model=validated)
    except ModelFormatError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(2)
    except ModelError as exc:
        click.echo(f"invalid model: {exc}", err=True)
        sys.exit(1)


@click.group()
def main():
    """Adaptive tests over discrete Bayesian and credal networks."""


@main.command("validate")
@click.option("--model", "model_path", required=True, help="Model file to check.")
def cli_validate(model_path: str):
    """Check a model document; exit 0 only when no rule is violated."""
    text = _read_text(model_path)
    try:
        model = load_model(text, validate_model=False)
    except ModelFormatError as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(2)
    problems = validate(model)
    if problems:
        for p in problems:
            click.echo(str(p))
        sys.exit(1)
    click.echo(
        f"ok: {model.kind} model, {len(model.skills())} skill(s), "
        f"{len(model.questions())} question(s)"
    )


@main.command("score")
@click.option("--model", "model_path", required=True)
@click.option("--evidence", "evidence_items", multiple=True, help="Q=state, repeatable.")
@click.option("--question", "questions", multiple=True, help="Restrict to these questions.")
@click.option(
    "--score",
    "score_kind",
    type=click.Choice(["entropy", "dm", "both"]),
    default="both",
    show_default=True,
)
@click.option(
    "--kind",
    type=click.Choice(["bayesian", "credal"]),
    default="bayesian",
    show_default=True,
)
@click.option(
    "--epsilon",
    type=float,
    default=0.05,
    show_default=True,
    help="Interval half-width when --kind credal is applied to a point model.",
)
@click.option(
    "--bound",
    type=click.Choice(["lower", "upper", "midpoint"]),
    default="lower",
    show_default=True,
    help="Which credal bound drives the printed gain.",
)
def cli_score(model_path, evidence_items, questions, score_kind, kind, epsilon, bound):
    """Print the per-candidate score table used by the pick step."""
    model = _load_model_or_exit(model_path)
    try:
        if kind == "credal" and model.kind == "bayesian":
            model = perturb_to_credal(model, PerturbationSpec(epsilon))
        if kind == "bayesian" and model.kind == "credal":
            raise ModelError("model file is credal; use --kind credal")
        session = engine.new_session(model)
        for item in evidence_items:
            if "=" not in item:
                click.echo(f"error: evidence {item!r} must look like Q1=1", err=True)
                sys.exit(2)
            q, state = item.split("=", 1)
            session = engine.submit_answer(session, q.strip(), state.strip())
        if questions:
            unknown = [q for q in questions if q not in session.remaining]
            if unknown:
                raise ModelError(f"unknown or answered question(s): {unknown}")
        kinds = ["entropy", "dm"] if score_kind == "both" else [score_kind]
        tables = {}
        for k in kinds:
            policy = engine.PickPolicy(
                f"{k}_gain", model_kind=model.kind, credal_bound=bound
            )
            _, scored = engine.pick_next(session, policy)
            tables[k] = {c.question: c for c in scored}
    except (ModelError, engine.SessionError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)

    show = list(questions) if questions else list(session.remaining)
    header = ["question"]
    for k in kinds:
        header += [f"{k}_conditional", f"{k}_gain"]
        if model.kind == "credal" and k == "dm" and bound != "lower":
            header += ["dm_lower", "dm_upper"]
    click.echo("\t".join(header))
    for q in show:
        row = [q]
        for k in kinds:
            c = tables[k][q]
            row += [f"{c.conditional:.6f}", f"{c.gain:.6f}"]
            if model.kind == "credal" and k == "dm" and bound != "lower" and c.bounds:
                row += [f"{c.bounds[0]:.6f}", f"{c.bounds[1]:.6f}"]
        click.echo("\t".join(row))


@main.command("simulate")
@click.option("--config", "config_path", required=True)
@click.option("--out", "out_path", required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
def cli_simulate(config_path, out_path, seed):
    """Run an experiment config and write the metrics file."""
    if not Path(config_path).exists():
        click.echo(f"error: no such config {config_path}", err=True)
        sys.exit(2)
    try:
        config = harness.load_experiment_config(config_path)
        if seed is not None:
            config = harness.ExperimentConfig(
                model=config.model,
                credal_model=config.credal_model,
                repository=config.repository,
                population=config.population,
                arms=config.arms,
                checkpoints=config.checkpoints,
                seed=seed,
            )
        series = harness.run_experiment(config)
        harness.export_metrics(series, out_path)
    except ModelError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for s in series:
        click.echo(
            f"{s.arm}: final accuracy {s.accuracy[-1]:.4f}, "
            f"final brier {s.brier[-1]:.5f}"
        )
    click.echo(f"wrote {out_path}")


@main.command("serve")
@click.option("--models-dir", required=True)
@click.option("--store", default=None, help="Event log path (default: <models-dir>/sessions.jsonl).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--instructor-token", default="", help="Token unlocking score tables and traces.")
@click.option("--strict-offered", is_flag=True, help="Only accept answers to the offered question.")
def cli_serve(models_dir, store, host, port, instructor_token, strict_offered):
    """Start the HTTP session service."""
    import uvicorn

    from .service import create_app

    store = store or str(Path(models_dir) / "sessions.jsonl")
    try:
        app = create_app(models_dir, store, instructor_token, strict_offered)
    except ModelError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except SystemExit:
        raise
    except OSError as exc:
        click.echo(f"error: cannot bind {host}:{port}: {exc}", err=True)
        sys.exit(1)


@main.command("bundle")
@click.option("--out", "out_dir", default="models", show_default=True)
def cli_bundle(out_dir):
    """Write the bundled model and experiment files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "fig1.model": serialize(bundled.fig1_model()),
        "single_skill_18q.model": serialize(bundled.single_skill_18q_model()),
        "chain_4skill_64q.model": serialize(bundled.chain_4skill_64q_model()),
        "single_skill.experiment": json.dumps(
            bundled.single_skill_experiment_config(), indent=2
        )
        + "\n",
        "chain_4skill.experiment": json.dumps(bundled.chain_experiment_config(), indent=2)
        + "\n",
    }
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out / name}")


if __name__ == "__main__":
    main()
