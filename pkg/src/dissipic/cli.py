"""Command-line front end: verify, synthesize, train, simulate.

One JSON config file describes a run; outputs are JSON (controllers,
certificates) and CSV (trajectories, training history, frequency-response
data), every file stamped with the tool version, config hash, and seed.

Exit codes: 0 success, 1 error, 2 infeasible, 3 projection failure during
training (last certified artifacts are still saved).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .certify import verify
from .errors import DissipicError, Infeasible
from .interconnect import close_loop
from .iqc import IqcSpec, norm_bound_multiplier, sector_multiplier
from .simulate import (
    Environment,
    FlexrodCfg,
    PendulumCfg,
    bode_bound_check,
    flexrod_env,
    flexrod_matrices,
    freq_response,
    pendulum_env,
    random_l2_bursts,
    rollout,
)
from .synthesize import SynthesisProblem, init_lti, reconstruct_theta, theta_hat_project
from .systems import RinnController, SupplyRate, UncertainLtiPlant, UncertainLtiSystem
from .trainer import EsImprover, TrainCfg, history_to_csv, train

OK, ERROR, INFEASIBLE, PROJECTION_FAILED = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# Config resolution
# ---------------------------------------------------------------------------

class ConfigError(DissipicError):
    pass


def _config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _meta(cfg_hash: str, seed) -> dict:
    return {"tool": "dissipic", "version": __version__,
            "config_sha256": cfg_hash, "seed": seed}


def _meta_lines(cfg_hash: str, seed) -> list[str]:
    return [f"dissipic {__version__} config_sha256={cfg_hash} seed={seed}"]


def _resolve_environment(cfg: dict) -> tuple[Environment | None, UncertainLtiPlant | None]:
    if "environment" in cfg:
        spec = cfg["environment"]
        name = spec.get("name")
        overrides = spec.get("cfg", {})
        if name == "pendulum":
            env = pendulum_env(PendulumCfg(**overrides))
            return env, env.design_plant
        if name == "flexrod":
            env, plant = flexrod_env(FlexrodCfg(**overrides))
            return env, plant
        raise ConfigError(f"unknown environment {name!r}")
    if "plant" in cfg:
        return None, UncertainLtiPlant.from_json_dict(cfg["plant"])
    return None, None


def _resolve_system(cfg: dict) -> UncertainLtiSystem | None:
    if "system" in cfg:
        return UncertainLtiSystem.from_json_dict(cfg["system"])
    return None


def _resolve_controller(cfg: dict, base: Path) -> RinnController | None:
    spec = cfg.get("controller")
    if spec is None:
        return None
    if "path" in spec:
        doc = json.loads((base / spec["path"]).read_text())
        return RinnController.from_json_dict(doc)
    if "dims" in spec:
        return RinnController.from_json_dict(spec)
    raise ConfigError("controller section needs a 'path' or inline 'dims' blocks")


def _resolve_iqc(cfg: dict, env: Environment | None) -> IqcSpec | None:
    spec = cfg.get("iqc")
    if spec is None:
        if env is not None and env.design_multiplier is not None:
            n_v = env.design_plant.n_v
            return IqcSpec.qc(env.design_multiplier, n_v)
        return None
    kind = spec.get("kind", "qc")
    if kind == "norm_bound":
        M = norm_bound_multiplier(spec["gain"], spec.get("scale", 1.0),
                                  spec.get("n_v", 1), spec.get("n_w", 1))
        return IqcSpec.qc(M, spec.get("n_v", 1))
    if kind == "sector":
        lam = np.ones(spec.get("n", 1)) * spec.get("weight", 1.0)
        return IqcSpec.qc(sector_multiplier(lam), spec.get("n", 1))
    return IqcSpec.from_json_dict(spec)


def _resolve_supply(cfg: dict, n_d: int, n_e: int) -> SupplyRate:
    spec = cfg.get("supply", {"kind": "stability"})
    kind = spec.get("kind", "stability")
    if kind == "stability":
        return SupplyRate.stability(n_d, n_e)
    if kind == "l2_gain":
        return SupplyRate.l2_gain(spec["gamma_sq"], n_d, n_e,
                                  scale=spec.get("scale", 1.0))
    if kind == "passivity":
        if n_d != n_e:
            raise ConfigError("passivity requires matching d and e widths")
        return SupplyRate.passivity(n_d)
    if kind == "custom":
        return SupplyRate.from_json_dict(spec)
    raise ConfigError(f"unknown supply kind {kind!r}")


def _build_problem(cfg: dict, plant: UncertainLtiPlant, iqc: IqcSpec | None,
                   X: SupplyRate, args) -> SynthesisProblem:
    syn = dict(cfg.get("synthesis", {}))
    if args.t_rs is not None:
        syn["t_rs"] = args.t_rs
    M_dp = iqc.M if iqc is not None else np.zeros((plant.n_v + plant.n_w,) * 2)
    return SynthesisProblem(
        plant, M_dp, X,
        n_phi=int(syn.get("n_phi", 16)),
        t_rs=float(syn.get("t_rs", 1.0)),
        free_m_ww=bool(syn.get("free_m_ww", False)),
        free_x_dd=bool(syn.get("free_x_dd", False)),
    )


def _write_json(path: Path, doc: dict, meta: dict):
    doc = dict(doc)
    doc["meta"] = meta
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _write_csv(path: Path, names, rows, header_lines):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in np.atleast_2d(rows):
            if np.size(row):
                writer.writerow([f"{v:.12g}" for v in row])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_verify(cfg, args, out: Path, cfg_hash: str) -> int:
    env, plant = _resolve_environment(cfg)
    system = _resolve_system(cfg)
    controller = _resolve_controller(cfg, args.config.parent)
    iqc = _resolve_iqc(cfg, env)
    n_ctrl = 0
    if system is None:
        if plant is None:
            raise ConfigError("verify needs a system, a plant, or an environment")
        if controller is not None:
            system = close_loop(plant, controller)
            n_ctrl = controller.n_phi
        else:
            from .systems import plant_to_system

            system = plant_to_system(plant)
    X = _resolve_supply(cfg, system.n_d, system.n_e)
    meta = _meta(cfg_hash, args.seed)
    try:
        cert = verify(system, iqc, n_ctrl=n_ctrl, X=X)
    except Infeasible as exc:
        _write_json(out / "certificate.json",
                    {"feasible": False, "status": str(exc.status)}, meta)
        print("infeasible")
        return INFEASIBLE
    doc = cert.to_json_dict()
    doc["feasible"] = True
    _write_json(out / "certificate.json", doc, meta)
    print(f"feasible (residual {cert.feasibility_residual:.3e})")
    return OK


def cmd_synthesize(cfg, args, out: Path, cfg_hash: str) -> int:
    env, plant = _resolve_environment(cfg)
    if plant is None:
        raise ConfigError("synthesize needs a plant or an environment")
    iqc = _resolve_iqc(cfg, env)
    X = _resolve_supply(cfg, plant.n_d, plant.n_e)
    prob = _build_problem(cfg, plant, iqc, X, args)
    beta = args.backoff if args.backoff is not None \
        else float(cfg.get("synthesis", {}).get("backoff", 1.05))
    meta = _meta(cfg_hash, args.seed)
    try:
        if args.lti or cfg.get("synthesis", {}).get("lti", False):
            k, P, Lam = init_lti(prob, beta=beta)
        else:
            res = theta_hat_project(prob.zero_theta_hat_seed(), prob, beta=beta)
            k, P, Lam = reconstruct_theta(res.theta_hat, prob.plant)
            _write_json(out / "theta_hat.json", res.theta_hat.to_json_dict(), meta)
    except Infeasible as exc:
        _write_json(out / "controller.json",
                    {"feasible": False, "status": str(exc.status)}, meta)
        print("infeasible")
        return INFEASIBLE
    cl = close_loop(prob.plant, k)
    cert = verify(cl, IqcSpec.qc(prob.M_dp, plant.n_v) if plant.n_v else None,
                  n_ctrl=k.n_phi, X=prob.X)
    _write_json(out / "controller.json", k.to_json_dict(), meta)
    _write_json(out / "certificate.json", cert.to_json_dict(), meta)
    print(f"synthesized controller (certificate residual {cert.feasibility_residual:.3e})")
    return OK


def cmd_train(cfg, args, out: Path, cfg_hash: str) -> int:
    env, plant = _resolve_environment(cfg)
    if env is None:
        raise ConfigError("train needs an environment")
    iqc = _resolve_iqc(cfg, env)
    X = _resolve_supply(cfg, plant.n_d, plant.n_e)
    prob = _build_problem(cfg, plant, iqc, X, args)
    tr = dict(cfg.get("training", {}))
    seed = args.seed if args.seed is not None else int(tr.get("seed", 0))
    beta = args.backoff if args.backoff is not None else float(tr.get("backoff", 1.05))
    tcfg = TrainCfg(
        iterations=int(tr.get("iterations", 10)),
        population=int(tr.get("population", 8)),
        sigma=float(tr.get("sigma", 0.02)),
        lr=float(tr.get("lr", 1e-3)),
        num_rollouts=int(tr.get("num_rollouts", 4)),
        seed=seed, backoff=beta, lti=bool(args.lti or tr.get("lti", False)))
    meta = _meta(cfg_hash, seed)
    header = _meta_lines(cfg_hash, seed)
    try:
        k0 = _resolve_controller(cfg, args.config.parent)
        if k0 is None:
            k0, P0, Lam0 = init_lti(prob, beta=beta)
        else:
            P0 = Lam0 = None
        improver_name = tr.get("improver", "es")
        if improver_name == "identity":
            from .trainer import IdentityImprover

            improver = IdentityImprover()
        else:
            improver = EsImprover(tcfg.population, tcfg.sigma, tcfg.lr)
        state = train(prob, improver, env, tcfg, k0, P0, Lam0)
    except Infeasible as exc:
        _write_json(out / "controller.json",
                    {"feasible": False, "status": str(exc.status)}, meta)
        print("infeasible")
        return INFEASIBLE
    history_to_csv(state.history, out / "history.csv", header_lines=header)
    _write_json(out / "controller.json", state.theta.to_json_dict(), meta)
    cert = state.certificate()
    doc = cert.to_json_dict()
    doc["feasibility_residual"] = state.history[-1].cert_residual if state.history else float("nan")
    _write_json(out / "certificate.json", doc, meta)
    if state.projection_failures:
        print(f"completed with {state.projection_failures} projection failures; "
              "last certified controller saved")
        return PROJECTION_FAILED
    print(f"trained {state.iteration} iterations, "
          f"{sum(r.was_projected for r in state.history)} projections")
    return OK


def cmd_simulate(cfg, args, out: Path, cfg_hash: str) -> int:
    env, plant = _resolve_environment(cfg)
    if env is None:
        raise ConfigError("simulate needs an environment")
    controller = _resolve_controller(cfg, args.config.parent)
    sim = dict(cfg.get("simulation", {}))
    seed = args.seed if args.seed is not None else int(sim.get("seed", 0))
    count = int(sim.get("num_rollouts", 1))
    horizon = sim.get("horizon")
    if horizon is not None:
        env.horizon = int(horizon)
    header = _meta_lines(cfg_hash, seed)
    rng = np.random.default_rng(seed)
    d_count = int(sim.get("disturbance_count", 0))
    for i in range(count):
        d_sig = None
        if d_count and env.n_d:
            d_sig = random_l2_bursts(rng, 1, env.horizon, env.n_d, env.dt)[0]
        if env.horizon == 0:
            names = ["t"] + [f"x{j}" for j in range(env.n_x)] + \
                    [f"u{j}" for j in range(env.n_u)] + \
                    [f"y{j}" for j in range(env.n_y)] + \
                    [f"d{j}" for j in range(env.n_d)] + \
                    [f"e{j}" for j in range(env.n_e)] + ["reward"]
            _write_csv(out / f"trajectory_{i:03d}.csv", names, np.zeros((0, len(names))), header)
            continue
        traj = rollout(env, controller, seed=int(rng.integers(0, 2**31 - 1)),
                       d_signal=d_sig)
        names, data = traj.columns()
        _write_csv(out / f"trajectory_{i:03d}.csv", names, data, header)
    if "bode" in sim and env.name == "flexrod":
        bode = sim["bode"]
        grid = np.logspace(np.log10(bode.get("w_min", 1e-2)),
                           np.log10(bode.get("w_max", 1e2)),
                           int(bode.get("points", 100)))
        gain = float(bode.get("gain", 0.1))
        A_f, B_f, C_f = flexrod_matrices(FlexrodCfg(**cfg.get("environment", {}).get("cfg", {})))
        flexible = (A_f, B_f, C_f, np.zeros((1, 1)))
        rigid = (plant.A_p, plant.B_pu, plant.C_py, np.zeros((1, 1)))
        rows = []
        for w in grid:
            gr = freq_response(rigid, w)[0, 0]
            gf = freq_response(flexible, w)[0, 0]
            rows.append([w, abs(gr), abs(gf), abs(gf - gr), gain / w])
        _write_csv(out / "bode.csv", ["w", "mag_rigid", "mag_flexible",
                                      "deviation", "bound"], np.array(rows), header)
        ok = bode_bound_check(rigid, flexible, gain, grid)
        print(f"bode bound {'holds' if ok else 'violated'} on the grid")
    print(f"wrote {count} trajectories to {out}")
    return OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dissipic",
        description="Certified synthesis and analysis of RINN controllers")
    parser.add_argument("--version", action="version", version=f"dissipic {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("verify", cmd_verify), ("synthesize", cmd_synthesize),
                     ("train", cmd_train), ("simulate", cmd_simulate)):
        p = sub.add_parser(name)
        p.add_argument("config", type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--lti", action="store_true")
        p.add_argument("--t-rs", dest="t_rs", type=float, default=None)
        p.add_argument("--backoff", type=float, default=None)
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text()
        cfg = json.loads(text)
    except FileNotFoundError:
        print(f"error: config file {args.config} not found", file=sys.stderr)
        return ERROR
    except json.JSONDecodeError as exc:
        print(f"error: malformed config at line {exc.lineno}, column {exc.colno}: "
              f"{exc.msg}", file=sys.stderr)
        return ERROR
    out = args.out if args.out is not None else args.config.parent
    out.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(cfg, args, out, _config_hash(text))
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ERROR
    except DissipicError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":
    sys.exit(main())
