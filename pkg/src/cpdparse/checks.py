"""Self-checks: factored vs dense inference, energy gradients, finite differences."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bench import make_instance
from .core import Hyperparams, LabelSet, NULL
from .cpd import DEFAULT_DENSE_BUDGET, RELATIONS, check_budget
from .mean_field import NegEnergyField, _array, energy, energy_gradient, factored_update, trajectory
from .model import Parser
from .synthetic import random_labeled
from .training import GradCheck, gradient_check

ORACLE_TOL = 1e-8
ENERGY_TOL = 1e-6
FD_TOL = 1e-4
REL_FLOOR = 1e-12


def max_relative_deviation(a, b, floor: float = REL_FLOOR) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def corrupted_update(scores, q):
    """Factored update that silently drops NULL mass from the pooling step."""
    q = np.array(_array(q))
    q[..., 0] = 0.0
    return NegEnergyField(factored_update(scores, q).negF)


def oracle_deviation(n: int, num_labels: int, rank: int, iters: int, seed=0, update=None,
                     budget: int = DEFAULT_DENSE_BUDGET, scale: float = 1.0) -> float:
    """Largest relative gap between factored and dense posteriors over a whole trajectory."""
    check_budget(n + 1, num_labels, budget)
    inst = make_instance(n, num_labels, rank, seed, budget=budget, scale=scale)
    cpd, _ = trajectory(inst.cpd, iters, update)
    dense, _ = trajectory(inst.dense, iters)
    return max(max_relative_deviation(a.q, b.q) for a, b in zip(cpd, dense))


def energy_gradient_deviation(n: int, num_labels: int, rank: int, seed=0, step: float = 1e-5,
                              scale: float = 1.0) -> float:
    """Analytic dE/dy against central differences of E at a random point."""
    inst = make_instance(n, num_labels, rank, seed, with_dense=False, scale=scale)
    rng = np.random.default_rng(seed + 1)
    y = rng.random((n + 1, n + 1, num_labels))
    analytic = energy_gradient(inst.cpd, y)
    numeric = np.empty_like(y)
    for idx in np.ndindex(*y.shape):
        orig = y[idx]
        y[idx] = orig + step
        up = energy(inst.cpd, y)
        y[idx] = orig - step
        down = energy(inst.cpd, y)
        y[idx] = orig
        numeric[idx] = (up - down) / (2 * step)
    return max_relative_deviation(analytic, numeric, floor=1e-6)


def tiny_parser(n: int, num_labels: int, rank: int, seed=0, relations=RELATIONS):
    """A randomly initialised small parser and one random sentence it can score."""
    rng = np.random.default_rng(seed)
    sentence = random_labeled(rng, n, num_labels, sid=f"fd{seed}")
    labels = LabelSet((NULL, *(f"L{k}" for k in range(1, num_labels))))
    hp = Hyperparams.desk(rank=rank, hidden_dim=6, embed_dim=5, mlp_dim=6, label_embed_dim=10,
                          seed=int(rng.integers(0, 2**31)), init_scale=0.5)
    return Parser.create([sentence], hp, relations, labels=labels), sentence


def fd_check(n: int, num_labels: int, rank: int, iters: int = 2, seed=0, coords: int = 20) -> GradCheck:
    parser, sentence = tiny_parser(n, num_labels, rank, seed)
    return gradient_check(parser, sentence, coords_per_group=coords, iters=iters, seed=seed)


@dataclass
class CheckReport:
    oracle: float
    energy: float
    fd: GradCheck
    tolerances: dict = field(default_factory=lambda: {"oracle": ORACLE_TOL, "energy": ENERGY_TOL,
                                                      "fd": FD_TOL})

    @property
    def results(self) -> dict:
        return {"oracle": self.oracle, "energy": self.energy, "fd": self.fd.max_error}

    @property
    def passed(self) -> bool:
        return all(v < self.tolerances[k] for k, v in self.results.items())

    def lines(self) -> list:
        out = []
        for k, v in self.results.items():
            status = "pass" if v < self.tolerances[k] else "FAIL"
            out.append(f"check={k} max_deviation={v:.3e} tol={self.tolerances[k]:.0e} status={status}")
        for group, err in sorted(self.fd.worst.items()):
            out.append(f"check=fd group={group} coords={self.fd.checked[group]} max_rel_error={err:.3e}")
        out.append(f"status={'pass' if self.passed else 'FAIL'}")
        return out


def run_checks(n: int = 4, num_labels: int = 3, rank: int = 4, iters: int = 3, seed=0, coords: int = 20,
               budget: int = DEFAULT_DENSE_BUDGET, corrupt: bool = False) -> CheckReport:
    update = corrupted_update if corrupt else None
    return CheckReport(
        oracle_deviation(n, num_labels, rank, iters, seed, update=update, budget=budget),
        energy_gradient_deviation(n, num_labels, rank, seed),
        fd_check(n, num_labels, rank, iters=min(iters, 2), seed=seed, coords=coords),
    )
