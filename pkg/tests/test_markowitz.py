"""Portfolio experiment: ingestion, moments, splitting, seeds, references."""

import numpy as np
import pytest

from splitdev import (
    CsvParseError,
    InsufficientDataError,
    InvalidParameterError,
    MarketData,
    MarkowitzProblem,
    ParamSchedule,
    ShapeError,
    StopRule,
    build_problem,
    chain_fb,
    estimate_moments,
    load_returns_csv,
    objective,
    portfolio_chain_scale,
    run_experiment,
    sample_simplex,
    shift_window,
    solve,
    synthetic_instance,
)
from splitdev.solver import SolverState, step
from splitdev.deviations import ZeroPolicy

from oracles import markowitz_reference


def write(tmp_path, text, name="returns.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_returns_csv_basic(tmp_path):
    path = write(tmp_path, "0.01,0.02\n0.00,-0.01\n0.02,0.01\n")
    data = load_returns_csv(path)
    assert data.days == 3 and data.assets == 2
    np.testing.assert_allclose(data.returns[1], [0.0, -0.01])


def test_load_returns_csv_skips_header_and_blanks(tmp_path):
    path = write(tmp_path, "alpha,beta\n\n0.1,0.2\n0.3,0.4\n")
    data = load_returns_csv(path)
    assert data.days == 2


def test_load_returns_csv_empty_file(tmp_path):
    with pytest.raises(InsufficientDataError):
        load_returns_csv(write(tmp_path, ""))


def test_load_returns_csv_single_row(tmp_path):
    with pytest.raises(InsufficientDataError):
        load_returns_csv(write(tmp_path, "0.1,0.2\n"))


def test_load_returns_csv_ragged_row_reports_line(tmp_path):
    path = write(tmp_path, "0.1,0.2\n0.1,0.2,0.3\n0.1,0.2\n")
    with pytest.raises(CsvParseError) as exc:
        load_returns_csv(path)
    assert exc.value.line == 2


def test_load_returns_csv_non_numeric_cell(tmp_path):
    path = write(tmp_path, "0.1,0.2\n0.1,oops\n")
    with pytest.raises(CsvParseError) as exc:
        load_returns_csv(path)
    assert exc.value.line == 2


def test_market_data_rejects_non_finite():
    with pytest.raises(CsvParseError):
        MarketData(np.array([[0.1], [np.inf]]))


def test_estimate_moments_constant_returns():
    Lam, r = estimate_moments(MarketData(np.full((5, 3), 0.07)))
    np.testing.assert_allclose(Lam, np.zeros((3, 3)), atol=1e-18)
    np.testing.assert_allclose(r, np.full(3, 0.07))


def test_estimate_moments_anticorrelated_unit_variance():
    # 4-day series scaled so the 1/(T-1) variance is exactly 1
    a = np.sqrt(3.0) / 2.0 * np.array([1.0, -1.0, 1.0, -1.0])
    Lam, r = estimate_moments(MarketData(np.column_stack([a, -a])))
    np.testing.assert_allclose(r, [0.0, 0.0], atol=1e-16)
    np.testing.assert_allclose(Lam, [[1.0, -1.0], [-1.0, 1.0]], atol=1e-15)


def test_estimate_moments_single_asset():
    Lam, r = estimate_moments(MarketData(np.array([[0.0], [2.0]])))
    assert r[0] == pytest.approx(1.0)
    assert Lam[0, 0] == pytest.approx(2.0)


def test_estimate_moments_symmetry_and_psd():
    data = synthetic_instance(seed=8, days=60, assets=12)
    Lam, _ = estimate_moments(data)
    assert np.abs(Lam - Lam.T).max() <= 1e-14
    assert np.linalg.eigvalsh(Lam)[0] >= -1e-10


def test_shift_window_reuses_tail():
    R = np.arange(10.0).reshape(5, 2)
    shifted = shift_window(MarketData(R), shift=2)
    assert shifted.days == 5
    np.testing.assert_array_equal(shifted.returns[:3], R[2:])
    np.testing.assert_array_equal(shifted.returns[3:], R[-2:])
    for bad in (0, 5, -1):
        with pytest.raises(InvalidParameterError):
            shift_window(MarketData(R), shift=bad)


def test_sample_simplex():
    x = sample_simplex(7, seed=123)
    assert x.shape == (7,)
    assert np.all(x >= 0)
    assert x.sum() == pytest.approx(1.0)
    np.testing.assert_array_equal(x, sample_simplex(7, seed=123))
    assert not np.array_equal(x, sample_simplex(7, seed=124))


def test_synthetic_instance_deterministic_and_sized():
    a = synthetic_instance(seed=3)
    b = synthetic_instance(seed=3)
    np.testing.assert_array_equal(a.returns, b.returns)
    assert a.days == 200 and a.assets == 53
    with pytest.raises(InvalidParameterError):
        synthetic_instance(seed=0, days=1)


def test_markowitz_problem_validation():
    eye = np.eye(2)
    ok = MarkowitzProblem(eye, np.zeros(2), 6.0, np.zeros(2))
    assert ok.assets == 2
    with pytest.raises(InvalidParameterError):
        MarkowitzProblem(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2),
                         6.0, np.zeros(2))
    with pytest.raises(InvalidParameterError):
        MarkowitzProblem(-eye, np.zeros(2), 6.0, np.zeros(2))
    with pytest.raises(InvalidParameterError):
        MarkowitzProblem(eye, np.zeros(2), 0.0, np.zeros(2))
    with pytest.raises(ShapeError):
        MarkowitzProblem(eye, np.zeros(3), 6.0, np.zeros(2))


def test_build_problem_wiring():
    mp = MarkowitzProblem(np.eye(2), np.zeros(2), 6.0, np.zeros(2))
    prob = build_problem(mp)
    assert prob.n == 3 and prob.m == 2 and prob.dim == 2
    x = np.array([0.3, -0.2])
    np.testing.assert_allclose(prob.B[0].eval(x), x)
    np.testing.assert_allclose(prob.B[1].eval(x), 6.0 * x)
    np.testing.assert_allclose(prob.lipschitz, [1.0, 6.0])
    # simplex resolvent ignores the stepsize
    np.testing.assert_allclose(prob.F[2].resolvent(0.37, np.ones(2)),
                               [0.5, 0.5])


def test_one_step_costs_three_resolvents_two_forwards():
    mp = MarkowitzProblem(np.eye(2), np.zeros(2), 6.0, np.zeros(2))
    prob = build_problem(mp)
    sc = chain_fb(3, 2, prob.lipschitz, scale=portfolio_chain_scale(2))
    st = SolverState(k=0, z=np.zeros((2, 2)), x=None, u=np.zeros((2, 2)),
                     v=np.zeros((2, 2)), l2=0.0, gamma=0.9, xi=0.9)
    nxt = step(prob, sc, st, ParamSchedule(), ZeroPolicy())
    assert nxt.resolvent_calls == 3
    assert nxt.forward_calls == 2


def test_portfolio_chain_scale_grows_with_dimension():
    assert portfolio_chain_scale(4) == pytest.approx(28.0)
    scales = [portfolio_chain_scale(p) for p in (5, 20, 53)]
    assert all(s > 0 for s in scales)
    assert scales == sorted(scales)


def solve_instance(seed=1, assets=5, policy=None, tol=1e-10):
    data = synthetic_instance(seed=seed, days=80, assets=assets)
    Lam, r = estimate_moments(data)
    mp = MarkowitzProblem(Lam, r, 6.0, sample_simplex(assets, seed=seed))
    prob = build_problem(mp)
    sc = chain_fb(3, 2, prob.lipschitz,
                  scale=portfolio_chain_scale(assets))
    res = solve(prob, sc, schedule=ParamSchedule(gamma=0.9, xi=0.9),
                policy=policy, stop=StopRule(tol=tol))
    return mp, res


def test_solution_feasible_and_matches_gradient_oracle():
    mp, res = solve_instance(seed=2)
    assert res.converged
    x = res.x
    assert np.all(x >= -1e-10)
    assert abs(x.sum() - 1.0) <= 1e-10
    x_star = markowitz_reference(mp.Lambda, mp.r, mp.delta, mp.x0)
    assert np.linalg.norm(x - x_star) <= 1e-6


def test_objective_never_worse_than_start():
    mp, res = solve_instance(seed=4)
    assert objective(mp, res.x) <= objective(mp, mp.x0) + 1e-9


def test_run_experiment_case1_small():
    data = synthetic_instance(seed=0, days=80, assets=5)
    rep = run_experiment(data, policy="zero", case=1, seeds=range(3))
    assert rep.case == 1
    assert rep.scheme == "chain_fb"
    assert rep.policy == "zero"
    assert rep.seeds == [0, 1, 2]
    assert all(rec.converged for rec in rep.records)
    assert all(rec.final_error < 1e-8 for rec in rep.records)
    assert all(it > 0 for it in rep.iterations)
    assert rep.mean_iters == pytest.approx(np.mean(rep.iterations))
    summary = rep.summary_dict()
    assert summary["case"] == 1 and summary["tol"] == 1e-8


def test_run_experiment_case2_rebalances():
    data = synthetic_instance(seed=0, days=80, assets=5)
    rep = run_experiment(data, policy="zero", case=2, seeds=[1])
    assert rep.case == 2
    assert rep.records[0].converged


def test_run_experiment_momentum_converges():
    data = synthetic_instance(seed=0, days=80, assets=5)
    rep = run_experiment(data, policy="momentum:beta=0.35,rho=0.05",
                         case=1, seeds=[0, 1])
    assert all(rec.converged for rec in rep.records)
    assert rep.policy.startswith("momentum")


def test_run_experiment_validates_arguments():
    data = synthetic_instance(seed=0, days=40, assets=4)
    with pytest.raises(InvalidParameterError):
        run_experiment(data, case=3, seeds=[0])
    with pytest.raises(InvalidParameterError):
        run_experiment(data, case=1, seeds=[])
