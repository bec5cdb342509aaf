"""Projection-based training: alternate a pluggable policy-improvement
step with a dissipativity-enforcing step, so every recorded iteration
carries a storage certificate for the closed loop."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .certify import VerifyOpts, storage_lmi_residual, verify
from .errors import DissipicError, Infeasible, ProjectionInfeasible
from .interconnect import close_loop
from .iqc import IqcSpec, combine_multipliers
from .simulate import Environment, rollout
from .synthesize import (
    SynthesisProblem,
    construct_theta_hat,
    reconstruct_theta,
    theta_hat_project,
    theta_project,
)
from .systems import RinnController, StorageCertificate

__all__ = [
    "TrainCfg",
    "TrainState",
    "IterationRecord",
    "PolicyImprover",
    "IdentityImprover",
    "GaussianPerturbImprover",
    "EsImprover",
    "es_step",
    "check_dissipative",
    "train",
    "history_to_csv",
]


@dataclass(frozen=True)
class TrainCfg:
    iterations: int = 10
    population: int = 8
    sigma: float = 0.02
    lr: float = 1e-3
    num_rollouts: int = 4
    seed: int = 0
    backoff: float = 1.05
    lti: bool = False  # restrict projections to LTI controllers

    def __post_init__(self):
        if self.population % 2:
            raise ValueError("population must be even (antithetic pairs)")


@dataclass
class IterationRecord:
    iteration: int
    mean_reward: float
    was_projected: bool
    projection_distance: float
    cert_residual: float
    projection_failed: bool = False


@dataclass
class TrainState:
    theta: RinnController
    P: np.ndarray
    Lambda: np.ndarray
    iteration: int
    history: list[IterationRecord] = field(default_factory=list)
    projection_failures: int = 0
    # per-iteration certified controllers, for post-hoc safety checks
    thetas: list = field(default_factory=list)

    def certificate(self) -> StorageCertificate:
        return StorageCertificate(self.P, self.Lambda)


class PolicyImprover:
    """Interface for the learning step; constraints are the trainer's job."""

    def step(self, theta: RinnController, rollout_oracle, rng) -> RinnController:
        raise NotImplementedError


class IdentityImprover(PolicyImprover):
    def step(self, theta, rollout_oracle, rng):
        return theta


class GaussianPerturbImprover(PolicyImprover):
    """Random-walk baseline used to exercise the certification path."""

    def __init__(self, sigma: float):
        self.sigma = sigma

    def step(self, theta, rollout_oracle, rng):
        vec = theta.flatten()
        return theta.unflatten(vec + self.sigma * rng.standard_normal(vec.size))


def es_step(theta: RinnController, rollout_oracle, population: int,
            sigma: float, lr: float, rng) -> RinnController:
    """Antithetic evolution-strategies update over all controller blocks:

        theta' = theta + lr / (population * sigma) * sum_i r_i eps_i

    with eps_(i + population/2) = -eps_i. Equal rewards therefore cancel
    exactly and leave theta unchanged.
    """
    if population % 2:
        raise ValueError("population must be even (antithetic pairs)")
    vec = theta.flatten()
    half = population // 2
    eps = rng.standard_normal((half, vec.size))
    r_plus = np.array([rollout_oracle(theta.unflatten(vec + sigma * e)) for e in eps])
    r_minus = np.array([rollout_oracle(theta.unflatten(vec - sigma * e)) for e in eps])
    # paired form of sum_i r_i eps_i over the mirrored population: equal
    # rewards cancel exactly rather than to roundoff
    grad = (r_plus - r_minus) @ eps
    return theta.unflatten(vec + lr / (population * sigma) * grad)


class EsImprover(PolicyImprover):
    def __init__(self, population: int, sigma: float, lr: float):
        if population % 2:
            raise ValueError("population must be even (antithetic pairs)")
        self.population = population
        self.sigma = sigma
        self.lr = lr

    def step(self, theta, rollout_oracle, rng):
        return es_step(theta, rollout_oracle, self.population, self.sigma, self.lr, rng)


def check_dissipative(plant, theta: RinnController, prob: SynthesisProblem):
    """Feasibility check of the new controller: returns a fresh certificate
    (P, Lambda) or raises Infeasible.

    The plant multiplier scaling stays fixed at 1 (it is absorbed into
    M_dp), keeping the certificate consistent with the projection programs.
    """
    cl = close_loop(plant, theta)
    iqc = IqcSpec.qc(prob.M_dp, plant.n_v) if plant.n_v + plant.n_w else None
    cert = verify(cl, iqc, n_ctrl=theta.n_phi, X=prob.X,
                  opts=VerifyOpts(free_lambda=False))
    return cert.P, cert.Lambda


def _mean_reward(env: Environment, theta: RinnController, seeds) -> float:
    return float(np.mean([rollout(env, theta, seed=s).total_reward() for s in seeds]))


def _cert_residual(prob, theta, P, Lam) -> float:
    cl = close_loop(prob.plant, theta)
    cm = combine_multipliers(prob.M_dp, Lam, theta.n_phi, n_vp=prob.plant.n_v)
    return storage_lmi_residual(cl, cm.matrix(), prob.X, P)


def train(prob: SynthesisProblem, improver: PolicyImprover, env: Environment,
          cfg: TrainCfg, theta0: RinnController, P0=None, Lambda0=None) -> TrainState:
    """Run the certified training loop from an already-certified theta0.

    Every recorded iteration holds a certificate for the stored controller.
    When the feasibility check fails, the controller is pulled back through
    the two projections; if even the projection fails, the last certified
    controller is retained and the failure is recorded.
    """
    plant = prob.plant
    rng = np.random.default_rng(cfg.seed)
    if P0 is None or Lambda0 is None:
        try:
            P, Lam = check_dissipative(plant, theta0, prob)
        except Infeasible as exc:
            raise ProjectionInfeasible("initial controller is not certifiable") from exc
    else:
        P, Lam = np.asarray(P0, dtype=float), np.asarray(Lambda0, dtype=float)
    theta = theta0
    state = TrainState(theta, P, Lam, 0)

    for it in range(1, cfg.iterations + 1):
        rollout_seeds = rng.integers(0, 2**31 - 1, size=cfg.num_rollouts)

        def oracle(candidate):
            return _mean_reward(env, candidate, rollout_seeds)

        theta_prime = improver.step(theta, oracle, rng)
        was_projected = False
        failed = False
        distance = 0.0
        try:
            P_new, Lam_new = check_dissipative(plant, theta_prime, prob)
            theta, P, Lam = theta_prime, P_new, Lam_new
        except Infeasible:
            try:
                hat_seed = construct_theta_hat(theta_prime, P, Lam, plant)
                res = theta_hat_project(hat_seed, prob, beta=cfg.backoff, lti=cfg.lti)
                _, P_new, Lam_new = reconstruct_theta(res.theta_hat, plant)
                theta_new = theta_project(theta_prime, P_new, Lam_new, prob, lti=cfg.lti)
                distance = theta_new.frobenius_distance(theta_prime)
                try:
                    # the projected controller is feasible by construction;
                    # a fresh solve re-centers the certificate
                    P_new, Lam_new = check_dissipative(plant, theta_new, prob)
                except Infeasible:
                    pass
                theta, P, Lam = theta_new, P_new, Lam_new
                was_projected = True
            except DissipicError:
                failed = True  # keep the last certified theta
                state.projection_failures += 1
                try:
                    # refresh (P, Lambda) for the retained controller; this
                    # also repairs a degenerate carried-in certificate
                    P, Lam = check_dissipative(plant, theta, prob)
                except Infeasible:
                    pass
        mean_reward = _mean_reward(env, theta, rollout_seeds)
        state.theta, state.P, state.Lambda = theta, P, Lam
        state.iteration = it
        state.thetas.append(theta)
        state.history.append(IterationRecord(
            it, mean_reward, was_projected, distance,
            _cert_residual(prob, theta, P, Lam), failed))
    return state


def history_to_csv(history, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean_reward", "was_projected",
                         "projection_distance", "cert_residual"])
        for rec in history:
            writer.writerow([rec.iteration, f"{rec.mean_reward:.9g}",
                             int(rec.was_projected),
                             f"{rec.projection_distance:.9g}",
                             f"{rec.cert_residual:.6e}"])
