from mgem import qp
from mgem import selfcheck


def test_all_suites_pass_quick():
    results = selfcheck.run_all(quick=True)
    assert len(results) == 5
    for r in results:
        assert r.passed, f"{r.name}: {r.detail}"


def test_injected_sign_flip_is_caught(monkeypatch):
    # a broken approximate solver must fail the single-constraint suite
    original = qp.solve_approx

    def flipped(inst):
        sol = original(inst)
        sol.direction = inst.target - inst.constraint_rows.T @ sol.multipliers
        return sol

    monkeypatch.setattr(qp, "solve_approx", flipped)
    passed, detail = selfcheck.check_approx_single_constraint(n_instances=20)
    assert not passed, detail


def test_biased_exact_solver_is_caught(monkeypatch):
    # a small systematic bias in the production solver must fail the
    # enumeration battery
    original = qp.solve_exact

    def biased(inst, tol=qp.DEFAULT_TOL, max_iter=qp.DEFAULT_MAX_ITER):
        sol = original(inst, tol=tol, max_iter=max_iter)
        sol.direction = sol.direction + 1e-4
        return sol

    monkeypatch.setattr(qp, "solve_exact", biased)
    passed, _ = selfcheck.check_oracle_equivalence(n_instances=30)
    assert not passed


def test_quick_mode_reduces_counts():
    passed, detail = selfcheck.check_oracle_equivalence(quick=True)
    assert passed
    assert "200 instances" in detail
