import numpy as np
import pytest

from credalcat import lp
from credalcat.model import IntervalPmf
from oracles import lp_vertex_oracle


def simple(objective, sense, constraints, variables=None, lower_bounds=None):
    names = variables or sorted({v for c, _, _ in constraints for v in c} | set(objective))
    return lp.LpProblem(
        tuple(names),
        objective,
        sense,
        tuple(lp.LpConstraint(c, rel, b, f"c{i}") for i, (c, rel, b) in enumerate(constraints)),
        lower_bounds or {},
    )


class TestSolve:
    def test_single_variable_box(self):
        sol = lp.solve(simple({"x": 1.0}, "maximize", [({"x": 1.0}, "<=", 1.0)]))
        assert sol.status == "optimal"
        assert sol.value == pytest.approx(1.0, abs=1e-9)

    def test_infeasible(self):
        sol = lp.solve(
            simple(
                {"x": 1.0},
                "maximize",
                [({"x": 1.0}, ">=", 2.0), ({"x": 1.0}, "<=", 1.0)],
            )
        )
        assert sol.status == "infeasible"

    def test_two_variable_simplex(self):
        sol = lp.solve(
            simple({"x": 1.0, "y": 1.0}, "maximize", [({"x": 1.0, "y": 1.0}, "<=", 1.0)])
        )
        assert sol.status == "optimal"
        assert sol.value == pytest.approx(1.0, abs=1e-9)

    def test_unbounded(self):
        sol = lp.solve(simple({"x": 1.0}, "maximize", [({"x": -1.0}, "<=", 0.0)]))
        assert sol.status == "unbounded"

    def test_equality_and_lower_bounds(self):
        sol = lp.solve(
            simple(
                {"x": 2.0, "y": -1.0},
                "minimize",
                [({"x": 1.0, "y": 1.0}, "=", 1.0)],
                lower_bounds={"x": 0.2, "y": 0.0},
            )
        )
        assert sol.status == "optimal"
        assert sol.assignment["x"] == pytest.approx(0.2, abs=1e-9)
        assert sol.assignment["y"] == pytest.approx(0.8, abs=1e-9)

    def test_solution_satisfies_constraints(self):
        problem = simple(
            {"x": 3.0, "y": 5.0},
            "maximize",
            [
                ({"x": 1.0}, "<=", 4.0),
                ({"y": 2.0}, "<=", 12.0),
                ({"x": 3.0, "y": 2.0}, "<=", 18.0),
            ],
        )
        sol = lp.solve(problem)
        assert sol.status == "optimal"
        assert sol.value == pytest.approx(36.0, abs=1e-8)
        for c in problem.constraints:
            lhs = sum(coef * sol.assignment[v] for v, coef in c.coeffs.items())
            assert lhs <= c.constant + 1e-8

    def test_undeclared_variable_rejected(self):
        with pytest.raises(lp.LpError):
            lp.LpProblem(
                ("x",),
                {"y": 1.0},
                "maximize",
                (),
            )

    def test_random_lps_match_vertex_oracle(self):
        rng = np.random.default_rng(23)
        checked = 0
        while checked < 50:
            n = int(rng.integers(2, 5))
            names = [f"x{i}" for i in range(n)]
            constraints = []
            for i in range(int(rng.integers(2, 6))):
                coeffs = {
                    names[j]: float(np.round(rng.uniform(-2, 3), 3))
                    for j in range(n)
                    if rng.random() < 0.8
                }
                if not coeffs:
                    continue
                constraints.append((coeffs, "<=", float(np.round(rng.uniform(0.5, 4), 3))))
            for name in names:
                constraints.append(({name: 1.0}, "<=", 5.0))  # keep it bounded
            objective = {n_: float(np.round(rng.uniform(-1, 2), 3)) for n_ in names}
            problem = simple(objective, "maximize", constraints, variables=names)
            sol = lp.solve(problem)
            oracle = lp_vertex_oracle(problem)
            assert sol.status == "optimal"
            assert oracle is not None
            assert sol.value == pytest.approx(oracle, abs=1e-6)
            checked += 1

    def test_determinism(self):
        problem = simple(
            {"x": 1.0, "y": 2.0},
            "maximize",
            [({"x": 1.0, "y": 1.0}, "<=", 1.0), ({"x": 2.0, "y": 1.0}, "<=", 1.5)],
        )
        first = lp.solve(problem)
        second = lp.solve(problem)
        assert first.value == second.value
        assert first.assignment == second.assignment


class TestLpText:
    def test_dump_mentions_all_parts(self):
        problem = simple(
            {"x": 1.0},
            "maximize",
            [({"x": 1.0, "y": -0.5}, "<=", 1.0), ({"y": 1.0}, ">=", 0.25)],
        )
        text = lp.lp_text(problem)
        assert "Maximize" in text
        assert "Subject To" in text
        assert "x" in text and "y" in text
        assert "End" in text


def boolean_instance():
    skill = IntervalPmf("S", (0.45, 0.45), (0.55, 0.55))
    rows = [
        IntervalPmf("Q", (0.65, 0.25), (0.75, 0.35)),  # P(Q | S=0)
        IntervalPmf("Q", (0.05, 0.85), (0.15, 0.95)),  # P(Q | S=1)
    ]
    return skill, rows


class TestModeCellBuilder:
    def test_constraint_counts_boolean(self):
        skill, rows = boolean_instance()
        problem = lp.build_mode_cell_problem(
            skill, rows, lp.ModeAssignment((0, 1)), "maximize"
        )
        assert len(problem.variables) == 4
        by_prefix = {}
        for c in problem.constraints:
            by_prefix.setdefault(c.name.split("_")[0], []).append(c)
        assert len(by_prefix["mass"]) == 1
        assert len(by_prefix["skill"]) == 4
        assert len(by_prefix["row"]) == 8
        assert len(by_prefix["mode"]) == 4

    def test_dimension_mismatch(self):
        skill, rows = boolean_instance()
        with pytest.raises(lp.LpError):
            lp.build_mode_cell_problem(skill, rows[:1], lp.ModeAssignment((0, 1)), "maximize")
        with pytest.raises(lp.LpError):
            lp.build_mode_cell_problem(skill, rows, lp.ModeAssignment((0, 5)), "maximize")

    def test_degenerate_intervals_contain_point_joint(self, fig1):
        prior = fig1.table("S").row(())
        q1 = fig1.table("Q1")
        skill = IntervalPmf("S", prior.probs, prior.probs)
        rows = [
            IntervalPmf("Q1", q1.row(("0",)).probs, q1.row(("0",)).probs),
            IntervalPmf("Q1", q1.row(("1",)).probs, q1.row(("1",)).probs),
        ]
        # The point joint puts q=1 mass mostly on s=1 and q=0 mass on s=0.
        problem = lp.build_mode_cell_problem(skill, rows, lp.ModeAssignment((0, 1)), "maximize")
        sol = lp.solve(problem)
        assert sol.status == "optimal"
        assert sol.assignment["x_1_1"] == pytest.approx(0.45, abs=1e-8)
        assert sol.assignment["x_0_0"] == pytest.approx(0.35, abs=1e-8)

    def test_solution_reconstructs_valid_joint(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            point = rng.dirichlet((2, 2))
            eps = float(rng.uniform(0.01, 0.15))
            skill = IntervalPmf(
                "S",
                tuple(max(0.0, p - eps) for p in point),
                tuple(min(1.0, p + eps) for p in point),
            ).tightened()
            rows = []
            for _ in range(2):
                rp = rng.dirichlet((2, 2))
                rows.append(
                    IntervalPmf(
                        "Q",
                        tuple(max(0.0, p - eps) for p in rp),
                        tuple(min(1.0, p + eps) for p in rp),
                    ).tightened()
                )
            for mode in lp.enumerate_mode_assignments(2, 2):
                for sense in ("maximize", "minimize"):
                    sol = lp.solve(lp.build_mode_cell_problem(skill, rows, mode, sense))
                    if sol.status != "optimal":
                        continue
                    x = np.array(
                        [
                            [sol.assignment[lp.var_name(i, j)] for j in range(2)]
                            for i in range(2)
                        ]
                    )
                    marginals = x.sum(axis=0)
                    for j in range(2):
                        assert skill.lower[j] - 1e-8 <= marginals[j] <= skill.upper[j] + 1e-8
                        if marginals[j] > 1e-12:
                            for i in range(2):
                                ratio = x[i, j] / marginals[j]
                                assert rows[j].lower[i] - 1e-6 <= ratio <= rows[j].upper[i] + 1e-6
                    # mode-cell property: the designated cell dominates its row
                    for i in range(2):
                        assert x[i, mode.jhat[i]] >= x[i, 1 - mode.jhat[i]] - 1e-8
