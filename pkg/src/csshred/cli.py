"""Command-line entry point.

Every subcommand accepts ``--config <path>`` plus one flag per
:class:`~csshred.config.RunConfig` field (``--hidden-size 64``); flags win
over the file. Failures print a one-line JSON record to stderr and exit
nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .bpdn import SolverConfig, recover_window
from .config import RunConfig, load_config
from .errors import CSShredError
from .field import read_field, write_field
from .pipeline import compare, load_field, reevaluate, run_pipeline
from .subsample import apply_plan, make_plan

EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_IO = 4
EXIT_INTERNAL = 1


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    group = p.add_argument_group("run configuration")
    for f in fields(RunConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar="VALUE",
                           default=argparse.SUPPRESS, help=f"(default: {f.default})")


def _config_from(args, prefix: str = "") -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    overrides = {k: v for k, v in vars(args).items() if k in names}
    path = getattr(args, prefix + "config", None)
    if path:
        return load_config(path, **overrides).validate()
    return RunConfig.from_mapping(overrides).validate()


def _cmd_generate(args) -> int:
    cfg = _config_from(args)
    fld = load_field(cfg)
    write_field(args.out, fld)
    print(f"wrote {fld.dims} field to {args.out}")
    return 0


def _cmd_subsample(args) -> int:
    cfg = _config_from(args)
    fld = read_field(args.input) if args.input else load_field(cfg)
    plan = make_plan(fld.dims, cfg.n_cols_sub, cfg.n_snap_sub, cfg.seed)
    write_field(args.out, apply_plan(fld, plan))
    Path(str(args.out) + ".plan").write_text(plan.to_text())
    print(f"wrote subsampled field to {args.out} ({len(plan.y_sub)} columns in {len(plan.t_sub)} snapshots)")
    return 0


def _cmd_train(args) -> int:
    cfg = _config_from(args)
    res = run_pipeline(cfg, out_root=args.out_root, run_dir=args.run_dir)
    print(f"run directory: {res.run_dir}")
    print(res.report.summary(), end="")
    return 0


def _cmd_evaluate(args) -> int:
    report = reevaluate(args.run_dir)
    if args.write:
        (Path(args.run_dir) / "metrics_reevaluated.tsv").write_text(report.to_record())
    print(report.summary(), end="")
    return 0


def _cmd_compare(args) -> int:
    cfg_a = _config_from(args)
    if args.config_b:
        cfg_b = load_config(args.config_b).validate()
    else:
        cfg_b = cfg_a.replace(model=args.model_b).validate()
    table, res_a, res_b = compare(cfg_a, cfg_b, out_root=args.out_root)
    if args.table:
        Path(args.table).write_text(table)
    print(table, end="")
    print(f"runs: {res_a.run_dir} {res_b.run_dir}")
    return 0


def _read_window(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Whitespace-separated values; ``nan`` entries mark missing samples."""
    vals = np.array(Path(path).read_text().split(), dtype=np.float64)
    missing = np.isnan(vals)
    if missing.any():
        return np.where(missing, 0.0, vals), missing
    return vals, None


def _cmd_recover(args) -> int:
    y, missing = _read_window(args.window)
    rule = "mask" if missing is not None else args.availability
    cfg = SolverConfig(lam=args.solver_lambda, lam_scale=args.solver_lambda_scale,
                       max_iters=args.solver_max_iters, tol=args.solver_tol,
                       step_rule=args.solver_step_rule, acceleration=args.solver_acceleration,
                       availability=rule)
    res = recover_window(y, cfg, availability=missing)
    text = "\n".join(repr(float(v)) for v in res.y_star) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"# iterations={res.iterations} objective={res.objective:.6g} "
          f"converged={res.converged} lam={res.lam:.6g}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csshred", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic field in the binary field format")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("subsample", help="apply a seeded subsampling plan to a field")
    _add_config_flags(p)
    p.add_argument("--input", help="field file (default: the configured dataset)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_subsample)

    p = sub.add_parser("train", help="run the full pipeline and write a run directory")
    _add_config_flags(p)
    p.add_argument("--out-root", default="runs")
    p.add_argument("--run-dir", help="explicit run directory instead of a timestamped one")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="recompute metrics of a finished run")
    p.add_argument("run_dir")
    p.add_argument("--write", action="store_true", help="also write metrics_reevaluated.tsv")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare", help="train two configurations on identical corrupted data")
    _add_config_flags(p)
    p.add_argument("--config-b", help="second configuration file")
    p.add_argument("--model-b", default="shred", help="model for the second run when --config-b is absent")
    p.add_argument("--out-root", default="runs")
    p.add_argument("--table", help="also write the comparison table here")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("recover", help="BPDN recovery of a single window")
    p.add_argument("window", help="text file of samples; nan marks a missing sample")
    p.add_argument("--out")
    p.add_argument("--availability", default="sentinel", choices=("sentinel", "strict"))
    p.add_argument("--solver-lambda", type=float, default=None)
    p.add_argument("--solver-lambda-scale", type=float, default=0.01)
    p.add_argument("--solver-max-iters", type=int, default=2000)
    p.add_argument("--solver-tol", type=float, default=1e-8)
    p.add_argument("--solver-step-rule", default="barzilai-borwein", choices=("barzilai-borwein", "fixed"))
    p.add_argument("--solver-acceleration", action="store_true")
    p.set_defaults(func=_cmd_recover)
    return parser


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CSShredError as exc:
        return _fail(exc, EXIT_DOMAIN)
    except OSError as exc:
        return _fail(exc, EXIT_IO)
    except ValueError as exc:
        return _fail(exc, EXIT_USAGE)
    except Exception as exc:  # noqa: BLE001 - last-resort structured report
        return _fail(exc, EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
