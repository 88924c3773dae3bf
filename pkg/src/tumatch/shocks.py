"""Idiosyncratic preference shocks: families, per-agent seeded sampling, centring.

Panels store the singlehood shock in the *last* column: ``eps[i, y]`` for
``y < |Y|`` and ``eps[i, |Y|]`` for staying single (men likewise over X).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

EULER_GAMMA = float(np.euler_gamma)
PSD_TOL = 1e-10

WOMEN, MEN = 0, 1


@dataclass(frozen=True)
class IidGumbel:
    scale: float = 1.0
    loc: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Gumbel scale must be positive")

    @property
    def mean(self) -> float:
        return self.loc + self.scale * EULER_GAMMA


@dataclass(frozen=True)
class IidNormal:
    std_dev: float = 1.0

    def __post_init__(self):
        if self.std_dev < 0:
            raise ValueError("std_dev must be nonnegative")


@dataclass(frozen=True)
class AdditiveAttributeNormal:
    """Shock on composite partner type = sum of independent per-attribute normals.

    For partner type ``y = (y_1, ..., y_A)`` (row-major flattened) the shock is
    ``sum_a z_{a, y_a}`` with ``z_{a, .} ~ N(0, std_devs[a]^2)`` drawn once per
    agent and attribute value.  The singlehood option has the same marginal law,
    ``N(0, sum_a std_devs[a]^2)``, independent of the rest.
    """

    std_devs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "std_devs", tuple(float(s) for s in self.std_devs))
        if any(s < 0 for s in self.std_devs):
            raise ValueError("std_devs must be nonnegative")


@dataclass(frozen=True)
class CorrelatedNormal:
    """Multivariate normal over the options ``(partner types..., single)``, one law per own type.

    ``women_cov`` has shape ``(|X|, |Y|+1, |Y|+1)``, ``men_cov`` ``(|Y|, |X|+1, |X|+1)``;
    optional means have the matching vector shapes.
    """

    women_cov: np.ndarray
    men_cov: np.ndarray
    women_mean: Optional[np.ndarray] = None
    men_mean: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("women_cov", "men_cov"):
            cov = np.asarray(getattr(self, name), dtype=float)
            if cov.ndim != 3 or cov.shape[1] != cov.shape[2]:
                raise ValueError(f"{name} must have shape (types, options, options)")
            if not np.allclose(cov, np.swapaxes(cov, 1, 2), atol=1e-12):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(cov).min() < -PSD_TOL:
                raise ValueError(f"{name} is not positive semi-definite")
            object.__setattr__(self, name, cov)
        for name, cov in (("women_mean", self.women_cov), ("men_mean", self.men_cov)):
            mean = getattr(self, name)
            if mean is not None:
                mean = np.asarray(mean, dtype=float)
                if mean.shape != cov.shape[:2]:
                    raise ValueError(f"{name} must have shape {cov.shape[:2]}")
                object.__setattr__(self, name, mean)


ShockModel = Union[IidGumbel, IidNormal, AdditiveAttributeNormal, CorrelatedNormal]


@dataclass(frozen=True)
class ShockPanel:
    eps: np.ndarray  # |I| x (|Y|+1)
    eta: np.ndarray  # |J| x (|X|+1)
    seed: Optional[int] = None
    model: Optional[ShockModel] = None

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        if eps.ndim != 2 or eta.ndim != 2:
            raise ValueError("shock panels must be 2-d")
        if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(eta))):
            raise ValueError("shock panel has non-finite entries")
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "eta", eta)

    @property
    def eps_match(self) -> np.ndarray:
        return self.eps[:, :-1]

    @property
    def eps_single(self) -> np.ndarray:
        return self.eps[:, -1]

    @property
    def eta_match(self) -> np.ndarray:
        return self.eta[:, :-1]

    @property
    def eta_single(self) -> np.ndarray:
        return self.eta[:, -1]

    def to_csv(self, path) -> None:
        """Audit dump, one row per (side, agent, option); singlehood is option -1."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["side", "i", "option", "value"])
            for side, mat in (("woman", self.eps), ("man", self.eta)):
                last = mat.shape[1] - 1
                for i, row in enumerate(mat):
                    for k, val in enumerate(row):
                        w.writerow([side, i, -1 if k == last else k, repr(float(val))])


def zero_panel(n_women: int, n_men: int, x_count: int, y_count: int) -> ShockPanel:
    return ShockPanel(np.zeros((n_women, y_count + 1)), np.zeros((n_men, x_count + 1)))


def agent_rng(seed: int, side: int, index: int) -> np.random.Generator:
    """Independent stream per agent: Philox keyed by (seed, side), counter block by agent index."""
    key = np.random.SeedSequence(int(seed), spawn_key=(side,)).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(index)]))


def _side_rngs(seed: int, side: int, count: int):
    key = np.random.SeedSequence(int(seed), spawn_key=(side,)).generate_state(2, np.uint64)
    for i in range(count):
        yield np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, i]))


def _sample_side(model: ShockModel, own_types: np.ndarray, n_options: int,
                 partner_shape: Optional[Sequence[int]], seed: int, side: int) -> np.ndarray:
    count = len(own_types)
    out = np.empty((count, n_options + 1))
    if isinstance(model, IidNormal):
        for i, g in enumerate(_side_rngs(seed, side, count)):
            out[i] = g.standard_normal(n_options + 1)
        out *= model.std_dev
    elif isinstance(model, IidGumbel):
        for i, g in enumerate(_side_rngs(seed, side, count)):
            out[i] = g.gumbel(model.loc, model.scale, n_options + 1)
    elif isinstance(model, AdditiveAttributeNormal):
        if partner_shape is None:
            raise ValueError("AdditiveAttributeNormal needs the partner side's attribute_shape")
        shape = tuple(partner_shape)
        if len(shape) != len(model.std_devs):
            raise ValueError("one std_dev per attribute required")
        if int(np.prod(shape)) != n_options:
            raise ValueError("attribute_shape does not match the partner type count")
        grids = np.indices(shape).reshape(len(shape), -1)  # attribute values per flattened type
        total_sd = float(np.sqrt(np.sum(np.square(model.std_devs))))
        for i, g in enumerate(_side_rngs(seed, side, count)):
            acc = np.zeros(n_options)
            for a, (card, sd) in enumerate(zip(shape, model.std_devs)):
                comp = g.standard_normal(card) * sd
                acc += comp[grids[a]]
            out[i, :n_options] = acc
            out[i, n_options] = g.standard_normal() * total_sd
    elif isinstance(model, CorrelatedNormal):
        cov = model.women_cov if side == WOMEN else model.men_cov
        mean = model.women_mean if side == WOMEN else model.men_mean
        if cov.shape[1] != n_options + 1:
            raise ValueError("covariance dimension does not match the number of options")
        if own_types.size and own_types.max() >= cov.shape[0]:
            raise ValueError("one covariance matrix per own type required")
        # symmetric PSD square root; tolerates singular covariances
        vals, vecs = np.linalg.eigh(cov)
        roots = vecs * np.sqrt(np.clip(vals, 0.0, None))[:, None, :]
        for i, g in enumerate(_side_rngs(seed, side, count)):
            out[i] = roots[own_types[i]] @ g.standard_normal(n_options + 1)
            if mean is not None:
                out[i] += mean[own_types[i]]
    else:
        raise TypeError(f"unsupported shock model {model!r}")
    return out


def sample_shocks(model: ShockModel, population, seed: int, men_model: Optional[ShockModel] = None) -> ShockPanel:
    """Draw eps (women) and eta (men) for ``population``; reproducible in ``(model, population, seed)``.

    ``men_model`` defaults to ``model``; attribute shapes come from the
    population's type space.
    """
    types = population.types
    men_model = model if men_model is None else men_model
    eps = _sample_side(model, population.woman_types, types.y_count, types.y_shape, seed, WOMEN)
    eta = _sample_side(men_model, population.man_types, types.x_count, types.x_shape, seed, MEN)
    return ShockPanel(eps, eta, seed=int(seed), model=model)


def gumbel_matched_moments(target_std: float) -> tuple[float, float]:
    """(location, scale) of the Gumbel law with mean 0 and standard deviation ``target_std``."""
    if not target_std > 0:
        raise ValueError("target_std must be positive")
    scale = target_std * np.sqrt(6.0) / np.pi
    return -scale * EULER_GAMMA, float(scale)


def _option_means(model: ShockModel, own_types: np.ndarray, n_options: int, side: int) -> np.ndarray:
    if isinstance(model, IidGumbel):
        return np.full((len(own_types), n_options + 1), model.mean)
    if isinstance(model, CorrelatedNormal):
        mean = model.women_mean if side == WOMEN else model.men_mean
        if mean is None:
            return np.zeros((len(own_types), n_options + 1))
        return mean[own_types]
    return np.zeros((len(own_types), n_options + 1))


def center_shocks(panel: ShockPanel, model: ShockModel, population) -> ShockPanel:
    """Shift match options so that E[eps_iy - eps_i0] = 0 (singlehood column untouched)."""
    types = population.types
    out = []
    for mat, own, n_opt, side in (
        (panel.eps, population.woman_types, types.y_count, WOMEN),
        (panel.eta, population.man_types, types.x_count, MEN),
    ):
        means = _option_means(model, own, n_opt, side)
        shift = means[:, :-1] - means[:, -1:]
        fixed = mat.copy()
        fixed[:, :-1] -= shift
        out.append(fixed)
    return ShockPanel(out[0], out[1], seed=panel.seed, model=panel.model)


# -- serialisation -------------------------------------------------------------

def model_to_dict(model: ShockModel) -> dict:
    if isinstance(model, IidNormal):
        return {"family": "iid_normal", "std_dev": model.std_dev}
    if isinstance(model, IidGumbel):
        return {"family": "iid_gumbel", "scale": model.scale, "loc": model.loc}
    if isinstance(model, AdditiveAttributeNormal):
        return {"family": "additive_attribute_normal", "std_devs": list(model.std_devs)}
    if isinstance(model, CorrelatedNormal):
        d = {"family": "correlated_normal", "women_cov": model.women_cov.tolist(), "men_cov": model.men_cov.tolist()}
        if model.women_mean is not None:
            d["women_mean"] = model.women_mean.tolist()
        if model.men_mean is not None:
            d["men_mean"] = model.men_mean.tolist()
        return d
    raise TypeError(f"unsupported shock model {model!r}")


def model_from_dict(d: dict) -> ShockModel:
    family = d.get("family")
    if family == "iid_normal":
        return IidNormal(float(d["std_dev"]))
    if family == "iid_gumbel":
        if "matched_std" in d:
            loc, scale = gumbel_matched_moments(float(d["matched_std"]))
            return IidGumbel(scale, loc)
        return IidGumbel(float(d.get("scale", 1.0)), float(d.get("loc", 0.0)))
    if family == "additive_attribute_normal":
        return AdditiveAttributeNormal(tuple(d["std_devs"]))
    if family == "correlated_normal":
        return CorrelatedNormal(
            np.asarray(d["women_cov"]), np.asarray(d["men_cov"]),
            None if d.get("women_mean") is None else np.asarray(d["women_mean"]),
            None if d.get("men_mean") is None else np.asarray(d["men_mean"]),
        )
    raise ValueError(f"unknown shock family {family!r}")
