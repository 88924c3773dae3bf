"""Type spaces, populations, surplus parametrisation and per-agent match values."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import shocks as sh


@dataclass(frozen=True)
class TypeSpace:
    x_count: int
    y_count: int
    x_shape: Optional[tuple[int, ...]] = None
    y_shape: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.x_count < 1 or self.y_count < 1:
            raise ValueError("type counts must be positive")
        for count, shape, side in ((self.x_count, self.x_shape, "x"), (self.y_count, self.y_shape, "y")):
            if shape is not None:
                shape = tuple(int(s) for s in shape)
                object.__setattr__(self, f"{side}_shape", shape)
                if int(np.prod(shape)) != count:
                    raise ValueError(f"{side} attribute_shape {shape} does not multiply to {count}")


@dataclass(frozen=True)
class Population:
    types: TypeSpace
    woman_types: np.ndarray
    man_types: np.ndarray

    def __post_init__(self):
        wt = np.asarray(self.woman_types, dtype=np.int64).ravel()
        mt = np.asarray(self.man_types, dtype=np.int64).ravel()
        if wt.size and (wt.min() < 0 or wt.max() >= self.types.x_count):
            raise ValueError("woman type index out of range")
        if mt.size and (mt.min() < 0 or mt.max() >= self.types.y_count):
            raise ValueError("man type index out of range")
        object.__setattr__(self, "woman_types", wt)
        object.__setattr__(self, "man_types", mt)

    @property
    def n_women(self) -> int:
        return self.woman_types.size

    @property
    def n_men(self) -> int:
        return self.man_types.size

    @property
    def n_x(self) -> np.ndarray:
        return np.bincount(self.woman_types, minlength=self.types.x_count)

    @property
    def m_y(self) -> np.ndarray:
        return np.bincount(self.man_types, minlength=self.types.y_count)

    @classmethod
    def from_margins(cls, types: TypeSpace, n_x, m_y) -> "Population":
        """Agents sorted by type, ``n_x[x]`` women of type x and ``m_y[y]`` men of type y."""
        n_x = np.asarray(n_x, dtype=np.int64)
        m_y = np.asarray(m_y, dtype=np.int64)
        return cls(types, np.repeat(np.arange(types.x_count), n_x), np.repeat(np.arange(types.y_count), m_y))


@dataclass(frozen=True)
class SurplusBasis:
    """Observable surplus vectors, ``phi[x, y, k]``."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 3:
            raise ValueError("basis must have shape (|X|, |Y|, K)")
        object.__setattr__(self, "phi", phi)
        flat = phi.reshape(-1, phi.shape[2])
        if phi.shape[2] and np.linalg.matrix_rank(flat) < phi.shape[2]:
            raise ValueError("basis vectors are not linearly independent")

    @property
    def k_count(self) -> int:
        return self.phi.shape[2]

    def scaled(self, c: float) -> "SurplusBasis":
        return SurplusBasis(c * self.phi)


def build_surplus(basis: SurplusBasis, lam) -> np.ndarray:
    """Systematic surplus matrix ``Phi = phi @ lambda``."""
    lam = np.asarray(lam, dtype=float).ravel()
    if lam.size != basis.k_count:
        raise ValueError(f"lambda has length {lam.size}, basis has K={basis.k_count}")
    return basis.phi @ lam


@dataclass(frozen=True)
class MatchValues:
    alpha: np.ndarray  # |I| x |Y|
    gamma: np.ndarray  # |X| x |J|
    eps0: np.ndarray
    eta0: np.ndarray


@dataclass(frozen=True)
class MarketInstance:
    """Everything a solver needs: population, realised surplus and shock draws."""

    population: Population
    phi: np.ndarray
    shocks: sh.ShockPanel
    basis: Optional[SurplusBasis] = None
    lam: Optional[np.ndarray] = None
    shock_model: Optional[sh.ShockModel] = field(default=None, compare=False)
    seed: Optional[int] = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        t = self.population.types
        if phi.shape != (t.x_count, t.y_count):
            raise ValueError(f"surplus matrix must be {t.x_count}x{t.y_count}, got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise ValueError("surplus matrix has non-finite entries")
        object.__setattr__(self, "phi", phi)
        p = self.population
        if self.shocks.eps.shape != (p.n_women, t.y_count + 1) or self.shocks.eta.shape != (p.n_men, t.x_count + 1):
            raise ValueError("shock panel dimensions do not match the population")

    @property
    def types(self) -> TypeSpace:
        return self.population.types

    @property
    def n_women(self) -> int:
        return self.population.n_women

    @property
    def n_men(self) -> int:
        return self.population.n_men

    def with_surplus(self, phi) -> "MarketInstance":
        return MarketInstance(self.population, phi, self.shocks, None, None, self.shock_model, self.seed)

    def with_shocks(self, panel: sh.ShockPanel) -> "MarketInstance":
        return MarketInstance(self.population, self.phi, panel, self.basis, self.lam, self.shock_model, self.seed)


def make_instance(population: Population, phi, shock_model: Optional[sh.ShockModel] = None,
                  seed: int = 0, panel: Optional[sh.ShockPanel] = None) -> MarketInstance:
    """Build an instance, sampling shocks from ``shock_model`` unless a panel is given."""
    if panel is None:
        if shock_model is None:
            t = population.types
            panel = sh.zero_panel(population.n_women, population.n_men, t.x_count, t.y_count)
        else:
            panel = sh.sample_shocks(shock_model, population, seed)
    return MarketInstance(population, phi, panel, shock_model=shock_model, seed=seed)


def match_values(instance: MarketInstance) -> MatchValues:
    """alpha_iy = Phi[x_i, y]/2 + eps_iy and gamma_xj = Phi[x, y_j]/2 + eta_xj."""
    p = instance.population
    half = 0.5 * instance.phi
    alpha = half[p.woman_types, :] + instance.shocks.eps_match
    gamma = half[:, p.man_types] + instance.shocks.eta_match.T
    return MatchValues(alpha, gamma, instance.shocks.eps_single.copy(), instance.shocks.eta_single.copy())


def woman_utility(instance: MarketInstance, T, i: int, y: int) -> float:
    """Utility of woman i matched with a man of type y when women pay transfer T."""
    if not 0 <= i < instance.n_women or not 0 <= y < instance.types.y_count:
        raise IndexError("woman or type index out of range")
    x = instance.population.woman_types[i]
    return float(instance.phi[x, y] / 2 - np.asarray(T)[x, y] + instance.shocks.eps[i, y])


def man_utility(instance: MarketInstance, T, j: int, x: int) -> float:
    """Utility of man j matched with a woman of type x when he receives transfer T."""
    if not 0 <= j < instance.n_men or not 0 <= x < instance.types.x_count:
        raise IndexError("man or type index out of range")
    y = instance.population.man_types[j]
    return float(instance.phi[x, y] / 2 + np.asarray(T)[x, y] + instance.shocks.eta[j, x])


def pair_value(instance: MarketInstance, i: int, j: int) -> float:
    """Joint value of a woman-man pair, Phi_xy + eps_iy + eta_xj."""
    p = instance.population
    x, y = p.woman_types[i], p.man_types[j]
    return float(instance.phi[x, y] + instance.shocks.eps[i, y] + instance.shocks.eta[j, x])


# -- instance JSON ---------------------------------------------------------------

def instance_to_dict(instance: MarketInstance) -> dict:
    t = instance.types
    if instance.basis is not None and instance.lam is not None:
        surplus = {"kind": "basis", "phi": instance.basis.phi.tolist(), "lambda": np.asarray(instance.lam).tolist()}
    else:
        surplus = {"kind": "matrix", "phi": instance.phi.tolist()}
    d = {
        "x_count": t.x_count,
        "y_count": t.y_count,
        "woman_types": instance.population.woman_types.tolist(),
        "man_types": instance.population.man_types.tolist(),
        "surplus": surplus,
        "shock_model": None if instance.shock_model is None else sh.model_to_dict(instance.shock_model),
        "seed": instance.seed,
    }
    if t.x_shape is not None:
        d["x_shape"] = list(t.x_shape)
    if t.y_shape is not None:
        d["y_shape"] = list(t.y_shape)
    return d


def instance_from_dict(d: dict) -> MarketInstance:
    types = TypeSpace(int(d["x_count"]), int(d["y_count"]),
                      tuple(d["x_shape"]) if d.get("x_shape") else None,
                      tuple(d["y_shape"]) if d.get("y_shape") else None)
    pop = Population(types, d["woman_types"], d["man_types"])
    surplus = d["surplus"]
    basis = lam = None
    if surplus["kind"] == "matrix":
        phi = np.asarray(surplus["phi"], dtype=float)
    elif surplus["kind"] == "basis":
        basis = SurplusBasis(np.asarray(surplus["phi"], dtype=float))
        lam = np.asarray(surplus["lambda"], dtype=float)
        phi = build_surplus(basis, lam)
    else:
        raise ValueError(f"unknown surplus kind {surplus['kind']!r}")
    model = sh.model_from_dict(d["shock_model"]) if d.get("shock_model") else None
    seed = int(d.get("seed") or 0)
    inst = make_instance(pop, phi, model, seed)
    return MarketInstance(inst.population, inst.phi, inst.shocks, basis, lam, model, seed)


def load_instance(path) -> MarketInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def save_instance(instance: MarketInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh)
