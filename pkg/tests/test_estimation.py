import numpy as np
import pytest

from tumatch import lp
from tumatch import shocks as sh
from tumatch.assignment import AggregateMatching, aggregate, solve_refined
from tumatch.estimation import (
    EstimationError,
    ObservedMatching,
    SmmOptions,
    _infeasible,
    build_smm_lp,
    moment_ranges,
    moments,
    nrmse,
    run_smm_rroa,
    seed_choice_sets,
    simulated_entropy,
    simulated_social_surplus,
    solve_smm_direct,
)
from tumatch.harness import ExperimentConfig, generate_estimation_truth
from tumatch.market import Population, SurplusBasis, TypeSpace, build_surplus, make_instance

from conftest import random_instance


def small_problem(seed, X=4, Y=3, K=2, n_women=30, n_men=25, shock_std=0.5):
    """Observed matching from the model at a known lambda, with its own shock panel."""
    rng = np.random.default_rng(seed)
    types = TypeSpace(X, Y)
    pop = Population(types, np.sort(rng.integers(0, X, n_women)), np.sort(rng.integers(0, Y, n_men)))
    basis = SurplusBasis(rng.standard_normal((X, Y, K)))
    lam = rng.standard_normal(K)
    inst = make_instance(pop, build_surplus(basis, lam), sh.IidNormal(shock_std), seed)
    pi, _, obj = solve_refined(inst)
    return inst, basis, lam, ObservedMatching(aggregate(pi, pop)), obj


# -- moments and nrmse ----------------------------------------------------------

def test_moments_by_hand():
    phi = np.arange(8, dtype=float).reshape(2, 2, 2) + np.array([0.0, 1.5])
    basis = SurplusBasis(phi)
    mu = np.array([[1.0, 0.0], [2.0, 0.5]])
    expect = [sum(mu[x, y] * phi[x, y, k] for x in range(2) for y in range(2)) for k in range(2)]
    assert np.allclose(moments(basis, mu), expect)
    assert not moments(basis, np.zeros((2, 2))).any()
    ones = SurplusBasis(np.ones((2, 2, 1)))
    assert moments(ones, AggregateMatching.from_matches(mu, [2, 3], [3, 2]))[0] == 3.5
    with pytest.raises(ValueError):
        moments(basis, np.zeros((3, 2)))


def test_nrmse_examples():
    assert nrmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert nrmse([3.0, 0.0], [3.0, 4.0]) == pytest.approx(0.8)
    assert nrmse([0.0, 0.0], [3.0, 4.0]) == 1.0
    with pytest.raises(ValueError):
        nrmse([1.0], [0.0])
    with pytest.raises(ValueError):
        nrmse([1.0], [1.0, 2.0])


# -- simulated entropy and surplus --------------------------------------------------

def test_entropy_zero_shocks(rng):
    inst = random_instance(rng, 8, 6, 2, 2)
    pop = inst.population
    panel = sh.ShockPanel(np.zeros((8, 3)), np.zeros((6, 3)))
    mu = aggregate(solve_refined(inst)[0], pop)
    assert simulated_entropy(mu, panel, pop) == 0.0


def test_entropy_everyone_single(rng):
    inst = random_instance(rng, 8, 6, 2, 3)
    mu = AggregateMatching(np.zeros((2, 3)), inst.population.n_x.astype(float), inst.population.m_y.astype(float))
    s = inst.shocks
    assert simulated_entropy(mu, s, inst.population) == pytest.approx(s.eps_single.sum() + s.eta_single.sum())


def test_entropy_two_women_toy():
    pop = Population(TypeSpace(1, 1), [0, 0], [0])
    eps = np.array([[0.3, -0.2], [0.1, 0.4]])  # columns: partner type 0, single
    eta = np.array([[0.25, -1.0]])
    panel = sh.ShockPanel(eps, eta)
    mu = AggregateMatching(np.array([[1.0]]), np.array([1.0]), np.array([0.0]))
    expect = max(eps[0, 0] + eps[1, 1], eps[1, 0] + eps[0, 1]) + eta[0, 0]
    assert simulated_entropy(mu, panel, pop) == pytest.approx(expect)


def test_entropy_unattainable():
    pop = Population(TypeSpace(1, 1), [0], [0])
    mu = AggregateMatching(np.array([[2.0]]), np.array([0.0]), np.array([0.0]))
    with pytest.raises(EstimationError):
        simulated_entropy(mu, sh.ShockPanel(np.zeros((1, 2)), np.zeros((1, 2))), pop)


def test_surplus_is_refined_objective(rng):
    for _ in range(5):
        X, Y, K = 3, 2, 2
        basis = SurplusBasis(rng.standard_normal((X, Y, K)))
        inst = random_instance(rng, 12, 10, X, Y)
        phi = build_surplus(basis, rng.standard_normal(K))
        inst = make_instance(inst.population, phi, inst.shock_model, inst.seed)
        ref = solve_refined(inst)[2]
        assert simulated_social_surplus(inst.shocks, inst.population, phi) == pytest.approx(ref, rel=1e-8)


def test_surplus_equals_max_of_entropy_plus_systematic():
    # with one couple the two matchings can be enumerated by hand
    pop = Population(TypeSpace(1, 1), [0], [0])
    panel = sh.ShockPanel(np.array([[0.2, 0.5]]), np.array([[-0.1, 0.3]]))
    for phi in (0.0, 1.0, 2.0):
        single = 0.5 + 0.3
        matched = phi + 0.2 - 0.1
        assert simulated_social_surplus(panel, pop, np.array([[phi]])) == pytest.approx(max(single, matched))


# -- the moment-matching LP -----------------------------------------------------------

def test_no_moment_rows_is_zero_surplus_assignment(rng):
    inst = random_instance(rng, 10, 9, 3, 2)
    prob = build_smm_lp(inst.shocks, inst.population, None, None)
    zero = make_instance(inst.population, np.zeros((3, 2)), inst.shock_model, inst.seed)
    assert lp.solve(prob).objective == pytest.approx(solve_refined(zero)[2], rel=1e-10)
    assert prob.n_rows == 10 + 9 + 6


def test_moment_rows_added():
    inst, basis, _, observed, _ = small_problem(0)
    prob = build_smm_lp(inst.shocks, inst.population, basis, observed)
    assert prob.n_rows == 30 + 25 + 4 * 3 + basis.k_count


@pytest.mark.parametrize("seed", range(5))
def test_self_consistency(seed):
    inst, basis, lam, observed, obj = small_problem(seed)
    res = solve_smm_direct(inst.shocks, inst.population, basis, observed)
    target = moments(basis, observed.mu)
    # the objective is the assignment optimum net of its systematic part
    assert res.objective == pytest.approx(obj - lam @ target, rel=1e-9, abs=1e-9)
    # lambda_hat is a dual optimum: it prices the observed moments exactly
    phi_hat = build_surplus(basis, res.lambda_hat)
    surplus = simulated_social_surplus(inst.shocks, inst.population, phi_hat)
    assert surplus - res.lambda_hat @ target == pytest.approx(res.objective, rel=1e-8, abs=1e-9)
    assert res.residual <= 1e-6


def test_lambda_recovered_with_fine_types():
    # many agents per cell and small shocks pin lambda down closely
    inst, basis, lam, observed, _ = small_problem(3, X=3, Y=3, K=2, n_women=300, n_men=300, shock_std=0.05)
    res = solve_smm_direct(inst.shocks, inst.population, basis, observed)
    assert nrmse(res.lambda_hat, lam) < 0.2


@pytest.mark.parametrize("seed", range(4))
def test_algorithm_matches_direct(seed):
    inst, basis, _, observed, _ = small_problem(seed, n_women=60, n_men=50)
    panel = sh.sample_shocks(sh.IidNormal(0.5), inst.population, 1000 + seed)
    a = run_smm_rroa(panel, inst.population, basis, observed)
    b = solve_smm_direct(panel, inst.population, basis, observed)
    assert a.objective == pytest.approx(b.objective, rel=1e-7)
    assert a.residual <= 1e-6 and b.residual <= 1e-6
    assert a.trace.status == "optimal"
    # the final duals leave no profitable outside option
    assert a.trace.records[-1].added == 0


def test_scale_equivariance():
    inst, basis, _, observed, _ = small_problem(2)
    a = solve_smm_direct(inst.shocks, inst.population, basis, observed)
    b = solve_smm_direct(inst.shocks, inst.population, SurplusBasis(2.0 * basis.phi), observed)
    assert b.objective == pytest.approx(a.objective, rel=1e-10)
    assert np.allclose(2.0 * b.lambda_hat, a.lambda_hat, rtol=1e-8, atol=1e-10)


def test_everyone_single():
    pop = Population.from_margins(TypeSpace(2, 2), [3, 2], [2, 3])
    panel = sh.sample_shocks(sh.IidNormal(0.1), pop, 0)
    basis = SurplusBasis(np.ones((2, 2, 1)))
    observed = ObservedMatching(AggregateMatching(np.zeros((2, 2)), np.array([3.0, 2.0]), np.array([2.0, 3.0])))
    res = run_smm_rroa(panel, pop, basis, observed)
    assert res.residual <= 1e-6
    assert res.fitted.mu.sum() == pytest.approx(0.0, abs=1e-9)
    # at lambda_hat nobody gains from matching
    assert simulated_social_surplus(panel, pop, build_surplus(basis, res.lambda_hat)) == pytest.approx(
        panel.eps_single.sum() + panel.eta_single.sum(), rel=1e-9)


def test_seed_choice_sets_carry_observed():
    inst, basis, _, observed, _ = small_problem(1)
    sets = seed_choice_sets(inst.population, observed)
    pop = inst.population
    for x in range(4):
        agents = sets.women[pop.woman_types == x]
        for y in range(3):
            # enough agents list y to absorb the observed mass
            assert agents[:, y].sum() >= np.ceil(observed.mu.mu[x, y] - 1e-9)
    assert sets.women.sum(1).max() <= 3


def test_margin_mismatch():
    inst, basis, _, observed, _ = small_problem(0)
    pop = inst.population
    other = Population(pop.types, pop.woman_types[1:], pop.man_types)
    panel = sh.sample_shocks(sh.IidNormal(0.5), other, 0)
    with pytest.raises(EstimationError):
        run_smm_rroa(panel, other, basis, observed)
    with pytest.raises(EstimationError):
        build_smm_lp(panel, other, basis, observed)


def test_moment_ranges_contain_attained():
    inst, basis, _, observed, _ = small_problem(4)
    ranges = moment_ranges(inst.shocks, inst.population, basis)
    target = moments(basis, observed.mu)
    assert np.all(ranges[:, 0] <= target + 1e-9) and np.all(target <= ranges[:, 1] + 1e-9)


def test_infeasible_diagnostic():
    inst, basis, _, observed, _ = small_problem(4)
    ranges = moment_ranges(inst.shocks, inst.population, basis)
    # ten times the observed matches cannot be produced by this population
    big = ObservedMatching(AggregateMatching(10 * observed.mu.mu, observed.mu.mu_x0, observed.mu.mu_0y))
    with pytest.raises(EstimationError) as err:
        _infeasible(inst.shocks, inst.population, basis, big, SmmOptions())
    assert "not attainable" in str(err.value)
    for k, t, lo, hi in err.value.diagnostics:
        assert not lo - 1e-7 <= t <= hi + 1e-7
        assert (lo, hi) == pytest.approx(tuple(ranges[k]))


def test_observed_population_and_csv(tmp_path):
    mu = AggregateMatching(np.array([[1.0, 0.0], [1.0, 2.0]]), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    path = tmp_path / "obs.csv"
    mu.to_csv(path)
    obs = ObservedMatching.from_csv(path)
    pop = obs.population(TypeSpace(2, 2))
    assert pop.n_x.tolist() == [2, 3] and pop.m_y.tolist() == [2, 3]
    assert obs.matched_mass == 4.0
    frac = ObservedMatching(AggregateMatching(np.array([[0.5]]), np.array([0.0]), np.array([0.0])))
    with pytest.raises(EstimationError):
        frac.population(TypeSpace(1, 1))
    with pytest.raises(ValueError):
        ObservedMatching(AggregateMatching(np.array([[1.0]]), np.array([-1.0]), np.array([0.0])))


def test_harness_truth_is_consistent():
    cfg = ExperimentConfig(x_count=4, y_count=3, women_per_scale=40, men_per_scale=30, k_count=2)
    basis, lam, observed = generate_estimation_truth(cfg, 5)
    assert basis.phi.shape == (4, 3, 2) and lam.shape == (2,)
    assert observed.n_x.sum() == 40 and observed.m_y.sum() == 30
    again = generate_estimation_truth(cfg, 5)
    assert np.array_equal(again[2].mu.mu, observed.mu.mu)
