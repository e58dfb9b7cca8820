"""Command-line front end: ``gqte fit | report | select-df | simulate``.

Exit codes: 0 success, 2 usage or parse error, 3 infeasible model,
4 numeric failure.  Every failure prints one line ``error: <kind>: <message>``
on standard error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .archive import DrawArchive, read_archive, write_archive
from .basis import BASIS_FAMILIES, LinkFunction, PercentGrid, SmootherBasis
from .densities import FAMILIES
from .errors import GqteError, InputError
from .functionals import estimate, parse_functional
from .induced import ModelSpec, TwoSampleData
from .mcmc import PriorSpec, SamplerConfig, diagnostics, ols_init, run_mh
from .selection import fit_case_density, select_df
from .simulation import ESTIMATORS, SCENARIOS, GqteEstimator, ScenarioSpec, run_study

__all__ = ["main", "read_sample"]


class UsageError(InputError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_sample(path) -> np.ndarray:
    """Headerless one-column file of positive reals; blank trailing lines are ignored."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    values = []
    for i, line in enumerate(lines, start=1):
        field = line.strip().rstrip(",")
        try:
            v = float(field)
        except ValueError:
            raise InputError(f"{path}: not a number: {line.strip()!r}", line=i) from None
        if not math.isfinite(v) or v <= 0:
            raise InputError(f"{path}: value must be positive and finite, got {line.strip()!r}",
                             line=i)
        values.append(v)
    if not values:
        raise InputError(f"{path}: no observations")
    return np.array(values)


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _df_arg(text):
    if text == "auto":
        return text
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a non-negative integer or 'auto'") from None
    if v < 0:
        raise argparse.ArgumentTypeError("df must be non-negative")
    return v


def _load_data(args) -> TwoSampleData:
    y1, y2 = read_sample(args.y1), read_sample(args.y2)
    if args.power_transform is not None:
        y1, y2 = y1 ** args.power_transform, y2 ** args.power_transform
    return TwoSampleData(y1, y2)


def _fit_options(args) -> dict:
    return {"J": args.gsm_components} if args.family == "gsm" else {}


def _add_model_args(p, with_df=True):
    p.add_argument("--y1", required=True, help="case sample file")
    p.add_argument("--y2", required=True, help="control sample file")
    p.add_argument("--family", choices=sorted(FAMILIES), default="lognormal")
    p.add_argument("--gsm-components", type=int, default=40)
    p.add_argument("--link", choices=("log", "identity"), default="log")
    p.add_argument("--basis", default="natural-cubic-spline",
                   help=f"one of {', '.join(BASIS_FAMILIES)} (or a short alias)")
    if with_df:
        p.add_argument("--df", type=_df_arg, default="auto")
    p.add_argument("--df-max", type=int, default=10)
    p.add_argument("--power-transform", type=_positive_float, default=None,
                   help="apply y -> y**E to both samples on ingest")


def _build_parser() -> _Parser:
    parser = _Parser(prog="gqte", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="run the sampler and write a draw archive")
    _add_model_args(fit)
    fit.add_argument("--iters", type=int, default=20000)
    fit.add_argument("--burnin", type=int, default=5000)
    fit.add_argument("--thin", type=int, default=1)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--proposal-df", type=_positive_float, default=3.0)
    fit.add_argument("--prior-scale", type=_positive_float, default=100.0,
                     help="prior variance of each coefficient")
    fit.add_argument("--out", required=True, help="archive path")

    rep = sub.add_parser("report", help="evaluate a functional from an archive")
    rep.add_argument("archive")
    rep.add_argument("--functional", default="qte",
                     help="qte, ate, moment:r, variance, sd, tailweight or ir:p")
    rep.add_argument("--grid-size", type=int, default=99)
    rep.add_argument("--grid-lo", type=float, default=0.01)
    rep.add_argument("--grid-hi", type=float, default=0.99)
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    rep.add_argument("--out", default=None)

    sel = sub.add_parser("select-df", help="score df = 1..df-max by L1 discrepancy")
    _add_model_args(sel, with_df=False)
    sel.add_argument("--out", default=None)

    sim = sub.add_parser("simulate", help="Monte Carlo study for one scenario")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--replicates", type=int, default=20)
    sim.add_argument("--estimators", default="baseline,gqte-lognormal",
                     help=f"comma list from {', '.join(ESTIMATORS)}")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--n1", type=int, default=100)
    sim.add_argument("--n2", type=int, default=1000)
    sim.add_argument("--iters", type=int, default=None, help="chain length for gqte estimators")
    sim.add_argument("--burnin", type=int, default=None)
    sim.add_argument("--out", default=None)
    return parser


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_fit(args) -> int:
    data = _load_data(args)
    link = LinkFunction(args.link)
    basis_family = SmootherBasis(args.basis, 0).family
    opts = _fit_options(args)
    chosen = scores = None
    if args.df == "auto":
        sel = select_df(data, args.family, link, basis_family, args.df_max, **opts)
        df, f1, chosen, scores = sel.chosen, sel.f1, sel.chosen, sel.scores
    else:
        df, f1 = args.df, fit_case_density(args.family, data.y1, **opts)
    basis = SmootherBasis.for_sample(basis_family, df, min(data.n1, data.n2))
    spec = ModelSpec(f1, link, basis)
    config = SamplerConfig(iterations=args.iters, burnin=args.burnin, thin=args.thin,
                           seed=args.seed, proposal_df=args.proposal_df)
    prior = PriorSpec(ols_init(data, link, basis).beta, args.prior_scale)
    draws = run_mh(spec, data, prior, config)
    archive = DrawArchive.from_run(
        draws, spec, data, prior=prior, power=args.power_transform,
        chosen_df=chosen, df_scores=scores)
    write_archive(archive, args.out)
    summary = diagnostics(draws) if draws.M >= 10 else {"draws": draws.M,
                                                          "acceptance": draws.acceptance}
    summary["df"] = df
    summary["archive"] = str(args.out)
    sys.stdout.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_report(args) -> int:
    archive = read_archive(args.archive)
    grid = PercentGrid.equispaced(args.grid_size, args.grid_lo, args.grid_hi)
    functional = parse_functional(args.functional, grid)
    est = estimate(functional, archive.beta, archive.data(), archive.spec(), power=archive.power)
    rows = est.rows()
    if args.format == "json":
        text = json.dumps({"functional": functional.label(), "rows": rows},
                          sort_keys=True, indent=1) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        text = buf.getvalue()
    _emit(text, args.out)
    return 0


def cmd_select_df(args) -> int:
    data = _load_data(args)
    basis_family = SmootherBasis(args.basis, 0).family
    sel = select_df(data, args.family, LinkFunction(args.link), basis_family, args.df_max,
                    **_fit_options(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["df", "score", "chosen"])
    for df, score in sorted(sel.scores.items()):
        w.writerow([df, repr(score), int(df == sel.chosen)])
    _emit(buf.getvalue(), args.out)
    return 0


def cmd_simulate(args) -> int:
    if args.scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {args.scenario!r}; expected one of {', '.join(SCENARIOS)}")
    names = [n.strip() for n in args.estimators.split(",") if n.strip()]
    registry = dict(ESTIMATORS)
    overrides = {k: v for k, v in (("iterations", args.iters), ("burnin", args.burnin))
                 if v is not None}
    if overrides:
        registry = {k: (dataclasses.replace(v, **overrides) if isinstance(v, GqteEstimator) else v)
                    for k, v in registry.items()}
    scenario = ScenarioSpec(args.scenario, n1=args.n1, n2=args.n2)
    report = run_study(scenario, names, args.replicates, seed=args.seed, registry=registry)
    _emit(report.to_csv(), args.out)
    return 0


_COMMANDS = {"fit": cmd_fit, "report": cmd_report, "select-df": cmd_select_df,
             "simulate": cmd_simulate}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        with np.errstate(over="ignore", under="ignore"):
            return _COMMANDS[args.command](args)
    except GqteError as exc:
        msg, code, kind = str(exc), exc.exit_code, exc.kind
    except np.linalg.LinAlgError as exc:
        msg, code, kind = str(exc), 4, "numeric"
    except FloatingPointError as exc:
        msg, code, kind = str(exc), 4, "numeric"
    except OSError as exc:
        msg, code, kind = f"{exc.filename}: {exc.strerror}", 2, "input"
    sys.stderr.write(f"error: {kind}: {' '.join(msg.split())}\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
