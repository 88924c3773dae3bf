import numpy as np
import pytest

from tumatch import shocks as sh
from tumatch.market import Population, TypeSpace, make_instance

FAMILIES = ("normal", "gumbel", "additive", "correlated")


def _shape(count):
    # a factorisation with two attributes when possible, otherwise one
    for a in (2, 3):
        if count % a == 0 and count > a:
            return (a, count // a)
    return (count,)


def shock_model(family, rng, X, Y):
    if family == "normal":
        return sh.IidNormal(float(rng.uniform(0.1, 1.0)))
    if family == "gumbel":
        return sh.IidGumbel(float(rng.uniform(0.2, 1.0)), float(rng.normal()))
    if family == "additive":
        return sh.AdditiveAttributeNormal(tuple(rng.uniform(0.1, 1.0, 2)))
    if family == "correlated":
        def covs(n_types, n_opt):
            L = rng.normal(size=(n_types, n_opt, n_opt))
            return L @ np.swapaxes(L, 1, 2) / n_opt
        return sh.CorrelatedNormal(covs(X, Y + 1), covs(Y, X + 1))
    raise ValueError(family)


def random_instance(rng, n_women, n_men, X, Y, family="normal", surplus_std=1.0, seed=None):
    """Random market; attribute shapes are set so every family can be sampled."""
    xs, ys = _shape(X), _shape(Y)
    if family == "additive":
        # the additive family needs the same number of attributes on both sides
        xs, ys = (1, X), (1, Y)
    types = TypeSpace(X, Y, xs, ys)
    pop = Population(types, rng.integers(0, X, n_women), rng.integers(0, Y, n_men))
    phi = rng.normal(0.0, surplus_std, (X, Y))
    model = shock_model(family, rng, X, Y)
    return make_instance(pop, phi, model, int(rng.integers(2**31)) if seed is None else seed)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = []


@pytest.fixture
def report(capsys):
    """Record one pass/fail line per acceptance criterion; echoed live and in the summary."""
    def add(criterion, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
        ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
