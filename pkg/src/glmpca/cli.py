"""Command-line interface.

Exit codes: 0 for a converged fit, 2 when the iteration cap was reached
without convergence (outputs are still written), 1 for configuration or
data errors.  All error text goes to stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, dataclass

from . import io as gio
from .exceptions import ConfigError, GlmPcaError
from .families import KINDS, make_family
from .model import build_model, check_data_matrix, resolve_offset
from .optimizer import FitConfig, fit


@dataclass
class RunConfig:
    """Resolved run parameters; echoed verbatim into meta.json."""

    input_path: str
    input_format: str
    family: str
    dispersion: float | None
    link: str
    dims: int
    obs_covariates: str | None
    feat_covariates: str | None
    offset: str
    intercept: bool
    penalty: float
    max_iters: int
    tol: float
    damping: bool
    full_scoring_coef: bool
    trace_every: int
    seed: int
    output_dir: str


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; 2 is reserved for
    # non-convergence, so turn parse failures into ConfigError instead
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glmpca",
                     description="Exponential-family PCA for matrix data")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fit", help="fit a factorization and write results")
    p.add_argument("--input", required=True, help="data matrix path")
    p.add_argument("--format", choices=["matrixmarket", "csv"], default=None,
                   help="input format (default: inferred from extension)")
    p.add_argument("--family", required=True, choices=list(KINDS))
    p.add_argument("--dispersion", type=float, default=None,
                   help="negative binomial shape (required for that family)")
    p.add_argument("--link", default="canonical",
                   choices=["canonical", "identity", "log", "logit"])
    p.add_argument("--dims", required=True, type=int,
                   help="number of latent dimensions")
    p.add_argument("--obs-covariates", default=None,
                   help="CSV of observation covariates (N rows)")
    p.add_argument("--feat-covariates", default=None,
                   help="CSV of feature covariates (J rows)")
    p.add_argument("--offset", default="none",
                   help="'none', 'auto', or 'file:PATH' (one value per "
                        "observation)")
    p.add_argument("--no-intercept", dest="intercept", action="store_false",
                   help="drop the default all-ones observation covariate")
    p.add_argument("--penalty", type=float, default=1e-4,
                   help="ridge penalty on the latent columns")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--damping", choices=["on", "off"], default="on")
    p.add_argument("--full-scoring-coef", action="store_true",
                   help="update coefficient blocks by full Fisher scoring")
    p.add_argument("--trace-every", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default=".")
    return parser


def _load_offset(policy: str, n_obs: int):
    if policy in ("none", "auto"):
        return policy
    if policy.startswith("file:"):
        loaded = gio.read_matrix(policy[len("file:"):], "csv")
        vec = loaded.values.reshape(-1)
        if vec.size != n_obs:
            raise ConfigError(
                f"offset file has {vec.size} values, expected {n_obs}")
        return vec
    raise ConfigError(
        f"--offset must be 'none', 'auto', or 'file:PATH', got {policy!r}")


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.family == "negative_binomial" and args.dispersion is None:
            raise ConfigError(
                "--dispersion is required for --family negative_binomial")
        if args.family != "negative_binomial" and args.dispersion is not None:
            raise ConfigError(
                "--dispersion is only valid for --family negative_binomial")

        fmt = args.format
        loaded = gio.read_matrix(args.input, fmt)
        if fmt is None:
            suffix = args.input.lower()
            fmt = "matrixmarket" if suffix.endswith((".mtx", ".mm")) else "csv"
        family = make_family(args.family, args.dispersion, args.link)
        data = check_data_matrix(loaded.values, family)

        obs_cov = feat_cov = None
        if args.obs_covariates:
            obs_cov = gio.read_matrix(args.obs_covariates, "csv").values
        if args.feat_covariates:
            feat_cov = gio.read_matrix(args.feat_covariates, "csv").values
        offset = _load_offset(args.offset, data.shape[1])
        # validate early so offset problems report before the fit starts
        resolve_offset(offset, data, family)

        run_config = RunConfig(
            input_path=args.input, input_format=fmt, family=args.family,
            dispersion=args.dispersion, link=family.link, dims=args.dims,
            obs_covariates=args.obs_covariates,
            feat_covariates=args.feat_covariates, offset=args.offset,
            intercept=args.intercept, penalty=args.penalty,
            max_iters=args.max_iters, tol=args.tol,
            damping=args.damping == "on",
            full_scoring_coef=args.full_scoring_coef,
            trace_every=args.trace_every, seed=args.seed,
            output_dir=args.output_dir)

        state = build_model(
            data, n_latent=args.dims, family=family,
            obs_covariates=obs_cov, feat_covariates=feat_cov,
            intercept=args.intercept, offset=offset,
            penalty_u=args.penalty, penalty_v=args.penalty, seed=args.seed)
        config = FitConfig(
            max_iters=args.max_iters, tol=args.tol,
            damping=run_config.damping,
            full_scoring_coef=args.full_scoring_coef,
            trace_every=args.trace_every)
        result = fit(state, config)
        gio.write_result(result, args.output_dir,
                         row_names=loaded.row_names,
                         col_names=loaded.col_names,
                         config=asdict(run_config))
    except GlmPcaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if not result.converged:
        print(f"did not converge within {args.max_iters} iterations "
              "(outputs written)", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    raise SystemExit(run_cli())


if __name__ == "__main__":
    main()
