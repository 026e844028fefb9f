"""Command-line front end.

Each subcommand reads a JSON config (``schema: 1``; unknown keys are errors),
writes its outputs into ``--out`` and leaves a ``config.json`` sidecar holding
the fully resolved config, which can be fed back through ``--config``.

Exit codes: 0 success, 2 malformed config, 3 numerical failure,
4 pathological-sample abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .bootstrap import DEFAULT_B, WeightLaw, draw_bootstrap_sample
from .diagnostics import population_matrices, smb_threshold_met
from .errors import ExperimentAborted, InvalidModelError, MbootError, PathologicalSampleError
from .experiments import DEFAULT_LEVELS, ExperimentConfig, run_bias_sweep, run_coverage, run_ecdf_pair, write_sidecar
from .generators import TrueModelSpec
from .models import GLM_LINKS, BernoulliGLM, CanonicalGLM, Dataset, GaussianLinear, Model, Quantile
from .optimizer import fit_mle

EXIT_CONFIG, EXIT_NUMERIC, EXIT_PATHOLOGICAL = 2, 3, 4
LawName = Literal["rademacher_shifted", "gaussian", "exponential"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeneratorCfg(_Strict):
    kind: Literal["polynomial_gaussian", "polynomial_laplace_hetero", "sin_bias_laplace", "logistic_bias"]
    n: int = Field(50, ge=1)
    p: int = Field(1, ge=1)
    beta: float = 0.0


class FamilyCfg(_Strict):
    kind: Literal["gaussian_linear", "bernoulli_glm", "glm_canonical", "quantile"]
    link: Optional[Literal["normal", "exponential", "poisson", "binomial"]] = None
    tau: Optional[float] = None

    def build(self):
        if self.kind == "gaussian_linear":
            return GaussianLinear()
        if self.kind == "bernoulli_glm":
            return BernoulliGLM()
        if self.kind == "glm_canonical":
            if self.link is None:
                raise InvalidModelError("glm_canonical needs a link")
            return CanonicalGLM(GLM_LINKS[self.link])
        if self.tau is None:
            raise InvalidModelError("quantile family needs tau")
        return Quantile(self.tau)


class _Base(_Strict):
    schema_: Literal[1] = Field(alias="schema")
    seed: Optional[int] = Field(None, ge=0)


class CoverageCfg(_Base):
    generator: GeneratorCfg
    law: LawName = "rademacher_shifted"
    levels: list[float] = Field(default_factory=lambda: list(DEFAULT_LEVELS))
    outer_reps: int = Field(2000, ge=1)
    inner_B: int = Field(2000, ge=1)
    smoothing: Optional[float] = None


class EcdfCfg(CoverageCfg):
    n_boot_curves: int = Field(50, ge=0)


class SweepCfg(CoverageCfg):
    betas: list[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0, 1.25])


class FitCfg(_Base):
    dataset: str
    family: FamilyCfg


class BootstrapCfg(FitCfg):
    law: LawName = "rademacher_shifted"
    B: int = Field(DEFAULT_B, ge=1)
    unit_weights: bool = False


class SmbCfg(_Base):
    generator: GeneratorCfg


SCHEMAS = {
    "fit": FitCfg,
    "bootstrap": BootstrapCfg,
    "coverage": CoverageCfg,
    "ecdf": EcdfCfg,
    "sweep": SweepCfg,
    "smb": SmbCfg,
}


class ConfigError(Exception):
    pass


def _fail(kind: str, message: str, code: int) -> int:
    line = json.dumps({"error": kind, "message": " ".join(str(message).split())})
    print(line, file=sys.stderr)
    return code


def load_config(command: str, path, args) -> BaseModel:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        cfg = SCHEMAS[command].model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    updates = {"seed": _resolve_seed(args.seed, cfg.seed)}
    if args.reps is not None and "outer_reps" in type(cfg).model_fields:
        updates["outer_reps"] = args.reps
    if args.boot is not None:
        key = "inner_B" if "inner_B" in type(cfg).model_fields else "B" if "B" in type(cfg).model_fields else None
        if key:
            updates[key] = args.boot
    cfg = cfg.model_copy(update=updates)
    if isinstance(cfg, FitCfg):
        ds = Path(cfg.dataset)
        if not ds.is_absolute():
            ds = Path(path).resolve().parent / ds
        if not ds.exists():
            raise ConfigError(f"dataset {ds} does not exist")
        cfg = cfg.model_copy(update={"dataset": str(ds)})
    return cfg


def _resolve_seed(flag, configured) -> int:
    if flag is not None:
        return flag
    if configured is not None:
        return configured
    env = os.environ.get("MBOOT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"MBOOT_SEED={env!r} is not an integer") from None
    return 0


def _experiment(cfg: CoverageCfg) -> ExperimentConfig:
    g = cfg.generator
    try:
        spec = TrueModelSpec(g.kind, g.n, g.p, g.beta)
        return ExperimentConfig(spec, cfg.law, tuple(cfg.levels), cfg.outer_reps, cfg.inner_B, cfg.seed, cfg.smoothing)
    except (InvalidModelError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _run(command: str, cfg, out: Path, threads: int | None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    sidecar = cfg.model_dump(by_alias=True)
    if command == "fit":
        model = Model(cfg.family.build(), Dataset.from_csv(cfg.dataset))
        fit = fit_mle(model)
        _dump(out / "fit.json", {
            "theta_hat": fit.theta_hat.tolist(),
            "loglik_at_max": fit.loglik_at_max,
            "iterations": fit.iterations,
            "grad_norm": fit.grad_norm,
            "converged": fit.converged,
        })
    elif command == "bootstrap":
        model = Model(cfg.family.build(), Dataset.from_csv(cfg.dataset))
        fit = fit_mle(model)
        sample = draw_bootstrap_sample(model, fit.theta_hat, cfg.law, cfg.B, cfg.seed, unit_weights=cfg.unit_weights)
        sample.write(out / "bootstrap.csv", out / "bootstrap.json")
    elif command == "smb":
        g = cfg.generator
        try:
            spec = TrueModelSpec(g.kind, g.n, g.p, g.beta)
        except InvalidModelError as exc:
            raise ConfigError(str(exc)) from None
        diag = population_matrices(spec)
        diag.to_json(out / "diagnostics.json", below_inv_sqrt_n=smb_threshold_met(diag.smb, spec.n))
        print(f"smb {diag.smb!r}")
    else:
        exp = _experiment(cfg)
        if command == "coverage":
            report = run_coverage(exp, threads)
            report.to_csv(out / "coverage.csv")
            _dump(out / "run.json", report.summary())
        elif command == "ecdf":
            run_ecdf_pair(exp, cfg.n_boot_curves, threads).to_csv(out / "ecdf.csv")
        else:
            try:
                report = run_bias_sweep(exp, cfg.betas, threads)
            except (InvalidModelError, ValueError) as exc:
                raise ConfigError(str(exc)) from None
            report.to_csv(out / "sweep.csv")
    write_sidecar(out / "config.json", sidecar)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mboot", description="Multiplier-bootstrap likelihood confidence sets.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "fit the quasi-MLE of a dataset CSV",
        "bootstrap": "draw a bootstrap sample of sqrt(2 LR) for a dataset CSV",
        "coverage": "Monte Carlo coverage of bootstrap confidence sets",
        "ecdf": "ECDFs of the real and bootstrap LR statistics",
        "sweep": "bootstrap-minus-real quantile gap across bias amplitudes",
        "smb": "exact modelling-bias diagnostics of a generator",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--seed", type=int, default=None, help="root seed; falls back to config, then MBOOT_SEED")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        p.add_argument("--reps", type=int, default=None, help="override outer replications")
        p.add_argument("--boot", type=int, default=None, help="override bootstrap draws")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg = load_config(args.command, args.config, args)
        _run(args.command, cfg, Path(args.out), args.threads)
    except (ConfigError, InvalidModelError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except (PathologicalSampleError, ExperimentAborted) as exc:
        return _fail("pathological_sample", exc, EXIT_PATHOLOGICAL)
    except MbootError as exc:
        return _fail(type(exc).__name__, exc, EXIT_NUMERIC)
    return 0


if __name__ == "__main__":
    sys.exit(main())
