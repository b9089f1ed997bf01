"""Deterministic battery of small random instances shared by several tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from wassos.apps import PortfolioModel, gen_sphere_samples
from wassos.model import (DroModel, PiecewiseLoss, Samples, ball_support,
                          interval_support)
from wassos.poly import Poly, from_terms, monomial_basis


def random_poly(rng, m: int, deg: int, density: float = 0.7) -> Poly:
    basis = monomial_basis(m, deg)
    items = []
    for e in basis:
        if sum(e) == deg or rng.random() < density:
            items.append((e, float(np.round(rng.normal(), 3))))
    return from_terms(m, items)


@dataclass
class Instance:
    name: str
    model: DroModel
    kinds: List[str]
    r: int


def random_dro(seed: int) -> Instance:
    rng = np.random.default_rng(seed)
    m = 1 + seed % 2
    K = 1 + int(rng.integers(2))
    J = 1 + int(rng.integers(2))
    N = 2 + int(rng.integers(4))
    deg = int(rng.integers(1, 5 if m == 1 else 4))
    pieces = tuple(tuple(random_poly(rng, m, int(rng.integers(1, deg + 1))) for _ in range(J))
                   for _ in range(K))
    if m == 1:
        support = interval_support(-1.0, 1.0)
        pts = rng.uniform(-1, 1, size=(N, 1))
    else:
        support = ball_support(2, 1.0)
        z = rng.normal(size=(N, 2))
        pts = z / np.linalg.norm(z, axis=1, keepdims=True) * np.sqrt(rng.uniform(0, 1, (N, 1)))
    eps = float(rng.choice([0.05, 0.2, 0.5]))
    model = DroModel(support, PiecewiseLoss(pieces), Samples(pts), eps, name=f"rand{seed}")
    kinds = ["ad"] + (["adtilde"] if J == 1 else [])
    return Instance(f"rand{seed}", model, kinds, 2)


def random_portfolio(seed: int) -> PortfolioModel:
    rng = np.random.default_rng(1000 + seed)
    m = 2
    costs = tuple(random_poly(rng, m, 3) for _ in range(m))
    return PortfolioModel(costs=costs, gamma=float(rng.uniform(0, 5)), eta=float(rng.uniform(0.2, 1)),
                          R=1.0, samples=gen_sphere_samples(m, 3, seed), radius=float(rng.choice([0.1, 0.5])))


DRO_SEEDS = list(range(20))
PD_SEEDS = list(range(6))
