import numpy as np
import pytest

from credalcat import engine, scores
from credalcat.credal import credal_posterior_bounds
from credalcat.inference import posterior
from credalcat.model import (
    Cpt,
    NetworkModel,
    Pmf,
    QuestionParams,
    Variable,
    build_boolean_question,
)

ENTROPY = engine.PickPolicy("entropy_gain")
DM = engine.PickPolicy("dm_gain")
EXHAUST = engine.StoppingRule("exhaust")


def kappa_one_model():
    variables = [
        Variable("S", "s", ("0", "1"), "skill"),
        Variable("Q", "q", ("0", "1"), "question"),
    ]
    tables = {
        "S": Cpt("S", (), {(): Pmf("S", (0.5, 0.5))}),
        "Q": build_boolean_question("Q", "S", QuestionParams(0.5, 1.0)),
    }
    return NetworkModel(variables, [("S", "Q")], tables, "bayesian")


class TestPickNext:
    def test_entropy_prefers_q1(self, fig1):
        session = engine.new_session(fig1)
        question, table = engine.pick_next(session, ENTROPY)
        assert question == "Q1"
        gains = {c.question: c.gain for c in table}
        assert gains["Q1"] == pytest.approx(0.2958, abs=5e-5)
        assert gains["Q2"] == pytest.approx(0.0290, abs=5e-5)

    def test_dm_prefers_q1(self, fig1):
        session = engine.new_session(fig1)
        question, table = engine.pick_next(session, DM)
        assert question == "Q1"
        gains = {c.question: c.gain for c in table}
        assert gains["Q1"] == pytest.approx(0.6, abs=1e-9)
        assert gains["Q2"] == pytest.approx(0.2, abs=1e-9)

    def test_random_is_seeded_and_idempotent(self, bank18):
        a = engine.new_session(bank18, rng_seed=7)
        policy = engine.PickPolicy("random")
        first, _ = engine.pick_next(a, policy)
        again, _ = engine.pick_next(a, policy)
        assert first == again
        b = engine.new_session(bank18, rng_seed=7)
        assert engine.pick_next(b, policy)[0] == first
        c = engine.new_session(bank18, rng_seed=8)
        picks_differ = engine.pick_next(c, policy)[0] != first
        # Not guaranteed for every pair of seeds, but fixed here.
        assert picks_differ

    def test_fixed_order_follows_repository(self, bank18):
        session = engine.new_session(bank18, repository=("Q05", "Q01"))
        policy = engine.PickPolicy("fixed_order")
        assert engine.pick_next(session, policy)[0] == "Q05"

    def test_tie_break_smallest_id(self, bank18):
        # Q01 and Q02 share a parametrization, so their gains tie exactly.
        session = engine.new_session(bank18, repository=("Q02", "Q01"))
        question, _ = engine.pick_next(session, ENTROPY)
        assert question == "Q01"

    def test_empty_repository_errors(self, fig1):
        session = engine.new_session(fig1, repository=())
        with pytest.raises(engine.SessionError):
            engine.pick_next(session, ENTROPY)

    def test_model_kind_mismatch(self, fig1):
        session = engine.new_session(fig1)
        with pytest.raises(engine.SessionError):
            engine.pick_next(session, engine.PickPolicy("dm_gain", model_kind="credal"))


class TestSubmitAnswer:
    def test_order_invariance(self, fig1):
        one = engine.new_session(fig1)
        one = engine.submit_answer(one, "Q1", "1")
        one = engine.submit_answer(one, "Q2", "1")
        two = engine.new_session(fig1)
        two = engine.submit_answer(two, "Q2", "1")
        two = engine.submit_answer(two, "Q1", "1")
        g1 = engine.evaluate(one)["S"].value
        g2 = engine.evaluate(two)["S"].value
        assert g1 == pytest.approx(0.818, abs=5e-4)
        assert g1 == pytest.approx(g2, abs=1e-12)

    def test_removes_from_remaining(self, fig1):
        session = engine.submit_answer(engine.new_session(fig1), "Q1", "1")
        assert session.remaining == ("Q2",)
        assert session.evidence == {"Q1": "1"}

    def test_double_answer_rejected(self, fig1):
        session = engine.submit_answer(engine.new_session(fig1), "Q1", "1")
        with pytest.raises(engine.SessionError, match="already"):
            engine.submit_answer(session, "Q1", "0")

    def test_unknown_question_rejected(self, fig1):
        with pytest.raises(Exception):
            engine.submit_answer(engine.new_session(fig1), "Q9", "1")

    def test_invalid_state_rejected(self, fig1):
        with pytest.raises(Exception):
            engine.submit_answer(engine.new_session(fig1), "Q1", "yes")


class TestShouldStop:
    def test_threshold_one_stops_immediately(self, fig1):
        session = engine.new_session(fig1)
        rule = engine.StoppingRule("score_threshold", threshold=1.0)
        assert engine.should_stop(session, rule, ENTROPY)

    def test_exhaust_runs_whole_bank(self, bank18):
        profile_answers = {q: "1" for q in bank18.questions()}
        session = engine.run_test(
            bank18, None, ENTROPY, EXHAUST, profile_answers.__getitem__
        )
        assert len(session.evidence_items) == 18
        assert not session.remaining

    def test_threshold_zero_with_kappa_one_question(self):
        model = kappa_one_model()
        rule = engine.StoppingRule("score_threshold", threshold=0.0)
        session = engine.new_session(model)
        assert not engine.should_stop(session, rule, ENTROPY)
        session = engine.submit_answer(session, "Q", "1")
        # kappa = 1 makes the posterior degenerate, entropy 0.
        assert engine.should_stop(session, rule, ENTROPY)

    def test_max_questions(self, fig1):
        rule = engine.StoppingRule("max_questions", max_questions=1)
        session = engine.new_session(fig1)
        assert not engine.should_stop(session, rule, ENTROPY)
        session = engine.submit_answer(session, "Q1", "0")
        assert engine.should_stop(session, rule, ENTROPY)


class TestEvaluate:
    def test_fig1_grade(self, fig1):
        session = engine.new_session(fig1)
        assert engine.evaluate(session)["S"].value == pytest.approx(0.5)
        session = engine.submit_answer(session, "Q1", "1")
        session = engine.submit_answer(session, "Q2", "1")
        assert engine.evaluate(session)["S"].value == pytest.approx(0.818, abs=5e-4)

    def test_credal_grade_bounds_and_midpoint(self, fig1_credal):
        session = engine.new_session(fig1_credal)
        session = engine.submit_answer(session, "Q1", "1")
        session = engine.submit_answer(session, "Q2", "1")
        grade = engine.evaluate(session)["S"]
        assert grade.bounds[0] == pytest.approx(0.708333333, abs=1e-6)
        assert grade.bounds[1] == pytest.approx(0.896108179, abs=1e-6)
        assert grade.midpoint == pytest.approx(
            (grade.bounds[0] + grade.bounds[1]) / 2, abs=1e-9
        )

    def test_custom_utilities(self, fig1):
        spec = engine.EvaluationSpec({"S": {"0": 2.0, "1": 6.0}})
        session = engine.new_session(fig1)
        assert engine.evaluate(session, spec)["S"].value == pytest.approx(4.0)

    def test_missing_state_rejected(self, fig1):
        spec = engine.EvaluationSpec({"S": {"0": 1.0}})
        with pytest.raises(engine.SessionError):
            engine.evaluate(engine.new_session(fig1), spec)


class TestRunTest:
    def test_kappa_one_identity(self):
        model = kappa_one_model()
        session = engine.run_test(
            model, None, ENTROPY, EXHAUST, lambda q: "1"
        )
        assert engine.evaluate(session)["S"].value == pytest.approx(1.0)

    def test_fig1_exhaust_asks_two(self, fig1):
        session = engine.run_test(fig1, None, ENTROPY, EXHAUST, lambda q: "0")
        assert len(session.evidence_items) == 2

    def test_fixed_seed_reproduces_trace(self, bank18):
        from credalcat.harness import StudentProfile, answer_sheet

        profile = StudentProfile({"S": "1"})
        sheet = answer_sheet(bank18, bank18.questions(), profile, seed=5, student=0)
        runs = []
        for _ in range(2):
            session = engine.run_test(
                bank18,
                None,
                engine.PickPolicy("random"),
                EXHAUST,
                sheet.__getitem__,
                rng_seed=123,
                record_trace=True,
            )
            runs.append(engine.export_trace(session))
        assert runs[0] == runs[1]

    def test_score_table_completeness(self, fig1):
        session = engine.run_test(
            fig1, None, ENTROPY, EXHAUST, lambda q: "1", record_trace=True
        )
        picks = [r for r in session.trace if isinstance(r, engine.PickRecord)]
        assert len(picks) == 2
        remaining = list(fig1.questions())
        for record in picks:
            assert sorted(c.question for c in record.scores) == sorted(remaining)
            remaining.remove(record.question)

    def test_exchangeability_of_stop_and_evaluate(self, bank18):
        items = [("Q01", "1"), ("Q07", "0"), ("Q14", "1")]
        rule = engine.StoppingRule("score_threshold", threshold=0.9)
        results = []
        for perm in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
            session = engine.new_session(bank18)
            for i in perm:
                session = engine.submit_answer(session, *items[i])
            results.append(
                (
                    engine.should_stop(session, rule, ENTROPY),
                    engine.evaluate(session)["S"].value,
                )
            )
        assert len({r[0] for r in results}) == 1
        assert max(r[1] for r in results) - min(r[1] for r in results) < 1e-12


class TestBeliefConsistency:
    def test_bayes_belief_matches_inference(self, chain):
        rng = np.random.default_rng(3)
        session = engine.new_session(chain)
        for q in ("Q01", "Q17", "Q33", "Q49", "Q08"):
            session = engine.submit_answer(session, q, str(rng.integers(2)))
        for skill in chain.skills():
            want = posterior(chain, skill, session.evidence).probs
            got = session._belief.skill_posterior(skill).probs
            assert got == pytest.approx(want, abs=1e-12)

    def test_credal_belief_matches_credal_inference(self, fig1_credal, chain_credal):
        cases = [
            (fig1_credal, {"Q1": "1"}),
            (chain_credal, {"Q01": "1", "Q18": "0", "Q40": "1"}),
        ]
        for model, evidence in cases:
            session = engine.new_session(model)
            for q, a in evidence.items():
                session = engine.submit_answer(session, q, a)
            for skill in model.skills():
                want = credal_posterior_bounds(model, skill, evidence).bounds
                got = session._belief.skill_bounds(skill)
                assert got.lower == pytest.approx(want.lower, abs=1e-9)
                assert got.upper == pytest.approx(want.upper, abs=1e-9)

    def test_bayes_candidate_scores_match_direct_ops(self, chain):
        session = engine.new_session(chain)
        session = engine.submit_answer(session, "Q01", "1")
        evidence = session.evidence
        for cand in session._belief.candidate_scores(("Q02", "Q20"), "entropy"):
            want = sum(
                scores.conditional_entropy(chain, s, cand.question, evidence).value
                for s in chain.skills()
            )
            assert cand.conditional == pytest.approx(want, abs=1e-9)
        for cand in session._belief.candidate_scores(("Q02", "Q20"), "dm"):
            want = sum(
                scores.conditional_dm(chain, s, cand.question, evidence).value
                for s in chain.skills()
            )
            assert cand.conditional == pytest.approx(want, abs=1e-9)

    def test_credal_single_skill_entropy_matches_scores_op(self, fig1_credal):
        session = engine.new_session(fig1_credal)
        session = engine.submit_answer(session, "Q2", "1")
        (cand,) = session._belief.candidate_scores(("Q1",), "entropy")
        want = scores.credal_conditional_entropy_lower(
            fig1_credal, "S", "Q1", {"Q2": "1"}
        )
        assert cand.conditional == pytest.approx(want.value, abs=1e-9)

    def test_credal_dm_fast_ranking_matches_lp(self, fig1_credal):
        session = engine.new_session(fig1_credal)
        (cand,) = session._belief.candidate_scores(("Q1",), "dm")
        bounds = session._belief.skill_bounds("S")
        rows = [fig1_credal.table("Q1").row((s,)) for s in ("0", "1")]
        want = scores.credal_conditional_dm_bounds(bounds, rows)
        assert cand.conditional == pytest.approx(want.bounds[0], abs=1e-8)


class TestReplay:
    def test_replay_reproduces_state(self, bank18):
        session = engine.new_session(bank18)
        for q, a in [("Q03", "1"), ("Q11", "0"), ("Q16", "1")]:
            session = engine.submit_answer(session, q, a)
        again = engine.replay(bank18, session.evidence_items)
        assert again.evidence == session.evidence
        assert again.remaining == session.remaining
        assert engine.evaluate(again)["S"].value == pytest.approx(
            engine.evaluate(session)["S"].value, abs=1e-12
        )
