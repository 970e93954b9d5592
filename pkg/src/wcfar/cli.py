"""Command line client tying the pipeline together.

Subcommands: threshold, fit, empirical, predict, simulate, curve, diagnose.
Data goes to stdout or --out; messages go to stderr.  Exit codes: 0 on
success, 1 on user errors (bad arguments, unreadable or malformed files,
inconsistent configuration), 2 on numerical failures.  All commands are
deterministic for a fixed --seed (default from $WCFAR_SEED, else 0).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from . import __version__
from .errors import NumericError
from .estimators import (
    EstimateWithCI,
    EstimatorConfig,
    diagnose,
    estimate_pfa_worst_case,
)
from .inference import fit
from .metrics import DcfParams, eer_threshold, min_dcf_threshold
from .model import (
    DEFAULT_SCORES_PER_PAIR,
    Hyperparameters,
    predict_pfa_closed_form,
    predict_pfa_sampling,
)
from .score_data import load_corpus, load_labeled_scores, pack_corpus
from .synthetic import SyntheticSpec, ToyAsvSpec, generate_model_corpus, generate_toy_asv_corpus

SEED_ENV_VAR = "WCFAR_SEED"


class _Parser(argparse.ArgumentParser):
    """argparse parser that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _fmt(x: float) -> str:
    """Serialise a float with enough digits to round-trip exactly."""
    return format(float(x), ".17g")


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV_VAR, "0"))


def _write_text(text: str, out_path: str | None):
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w") as fh:
            fh.write(text)


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _parse_int_list(text: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"expected a comma-separated integer list, got {text!r}") from None
    if not values:
        raise ValueError("empty population-size list")
    return values


def _parse_dcf(text: str) -> DcfParams:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"expected p_target,c_miss,c_fa, got {text!r}")
    return DcfParams(p_target=float(parts[0]), c_miss=float(parts[1]), c_fa=float(parts[2]))


def _load_theta(path: str) -> Hyperparameters:
    with open(path) as fh:
        return Hyperparameters.from_json(json.load(fh))


def _resolve_tau(args) -> float:
    if getattr(args, "tau", None) is not None:
        return args.tau
    if getattr(args, "threshold", None) is not None:
        with open(args.threshold) as fh:
            obj = json.load(fh)
        if "tau" not in obj:
            raise ValueError(f"threshold file {args.threshold} has no 'tau' key")
        return float(obj["tau"])
    raise ValueError("one of --tau or --threshold is required")


def _estimate_csv(rows: list[tuple[int, EstimateWithCI]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "estimate", "ci_low", "ci_high"])
    for n, est in rows:
        writer.writerow([n, _fmt(est.value), _fmt(est.ci_low), _fmt(est.ci_high)])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def cmd_threshold(args) -> int:
    labeled = load_labeled_scores(args.labels)
    if args.eer:
        spec, metric = eer_threshold(labeled)
    else:
        spec, metric = min_dcf_threshold(labeled, args.dcf)
    payload = {
        "tau": spec.tau,
        "metric_value": metric,
        "provenance": spec.provenance,
        "degenerate": spec.degenerate,
    }
    if spec.dcf_params is not None:
        payload["dcf_params"] = {
            "p_target": spec.dcf_params.p_target,
            "c_miss": spec.dcf_params.c_miss,
            "c_fa": spec.dcf_params.c_fa,
        }
    _write_text(_json_dump(payload), args.out)
    return 0


def cmd_fit(args) -> int:
    corpus = load_corpus(args.corpus, format=args.format)
    init = _load_theta(args.init) if args.init else None
    report = fit(corpus, init=init, tol=args.tol, max_iter=args.max_iter)
    theta = report.hyperparameters
    for item in args.override or []:
        key, _, value = item.partition("=")
        if not _:
            raise ValueError(f"override must look like name=value, got {item!r}")
        theta = theta.replace(**{key.strip(): float(value)})
    payload = theta.to_json()
    payload["converged"] = report.converged
    payload["iterations"] = report.iterations
    _write_text(_json_dump(payload), args.out)
    if args.trace:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "elbo"])
        for i, value in enumerate(report.elbo_trace, start=1):
            writer.writerow([i, _fmt(value)])
        _write_text(buf.getvalue(), args.trace)
    if not report.converged:
        print(f"warning: EM stopped at max_iter={args.max_iter} before converging", file=sys.stderr)
    return 0


def cmd_empirical(args) -> int:
    corpus = load_corpus(args.corpus, format=args.format)
    tau = _resolve_tau(args)
    rows = []
    for n in _parse_int_list(args.n):
        cfg = EstimatorConfig(
            seed=args.seed, n_impostors=n, t_outer=args.t_outer, selection=args.selection
        )
        rows.append((n, estimate_pfa_worst_case(corpus, tau, cfg)))
    _write_text(_estimate_csv(rows), args.out)
    return 0


def cmd_predict(args) -> int:
    theta = _load_theta(args.theta)
    tau = _resolve_tau(args)
    predictor = predict_pfa_sampling if args.method == "sampling" else predict_pfa_closed_form
    rows = []
    for n in _parse_int_list(args.n):
        cfg = EstimatorConfig(seed=args.seed, n_impostors=n, t_outer=args.t_outer)
        rows.append((n, predictor(theta, tau, cfg, scores_per_pair=args.scores_per_pair)))
    _write_text(_estimate_csv(rows), args.out)
    return 0


def cmd_simulate(args) -> int:
    with open(args.spec) as fh:
        spec_obj = json.load(fh)
    kind = spec_obj.pop("kind", "model")
    if kind == "model":
        spec = SyntheticSpec(theta=Hyperparameters.from_json(spec_obj.pop("theta")), **spec_obj)
        corpus = generate_model_corpus(spec)
        labeled = None
    elif kind == "toy_asv":
        spec = ToyAsvSpec(**spec_obj)
        corpus, labeled = generate_toy_asv_corpus(spec)
    else:
        raise ValueError(f"unknown simulation kind {kind!r}; expected 'model' or 'toy_asv'")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["target_id", "impostor_id", "score"])
    for tgt in corpus.targets:
        for grp in tgt.impostors:
            for s in grp.scores:
                writer.writerow([tgt.target_id, grp.impostor_id, _fmt(s)])
    _write_text(buf.getvalue(), args.out)

    if args.labeled_out:
        if labeled is None:
            raise ValueError("--labeled-out is only available for kind 'toy_asv'")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label", "score"])
        for s in labeled.target_scores:
            writer.writerow(["target", _fmt(s)])
        for s in labeled.nontarget_scores:
            writer.writerow(["nontarget", _fmt(s)])
        _write_text(buf.getvalue(), args.labeled_out)
    return 0


def cmd_curve(args) -> int:
    corpus = load_corpus(args.corpus, format=args.format)
    packed = pack_corpus(corpus)
    theta = _load_theta(args.theta)
    taus = []
    for item in args.tau:
        label, _, value = item.partition("=")
        if not _:
            raise ValueError(f"--tau must look like label=value, got {item!r}")
        taus.append((label.strip(), float(value)))
    n_list = _parse_int_list(args.n)
    if sorted(n_list) != n_list:
        raise ValueError("population sizes must be ascending")
    capacity = int(packed.pairs_per_target.min())
    predictor = predict_pfa_sampling if args.method == "sampling" else predict_pfa_closed_form

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "tau_label", "tau", "source", "estimate", "ci_low", "ci_high"])
    for label, tau in taus:
        for n in n_list:
            if n <= capacity:
                cfg = EstimatorConfig(seed=args.seed, n_impostors=n, t_outer=args.t_outer)
                est = estimate_pfa_worst_case(packed, tau, cfg)
                writer.writerow(
                    [n, label, _fmt(tau), "empirical", _fmt(est.value), _fmt(est.ci_low), _fmt(est.ci_high)]
                )
            cfg = EstimatorConfig(seed=args.seed, n_impostors=n, t_outer=args.t_outer)
            est = predictor(theta, tau, cfg, scores_per_pair=args.scores_per_pair)
            writer.writerow(
                [n, label, _fmt(tau), "model", _fmt(est.value), _fmt(est.ci_low), _fmt(est.ci_high)]
            )
    _write_text(buf.getvalue(), args.out)
    return 0


def cmd_diagnose(args) -> int:
    corpus = load_corpus(args.corpus, format=args.format)
    tau = _resolve_tau(args)
    cfg = EstimatorConfig(seed=args.seed, n_impostors=args.n_impostors, t_outer=args.t_outer)
    report = diagnose(corpus, tau, cfg)
    _write_text(_json_dump(report.to_json()), args.out)
    return 0


# ---------------------------------------------------------------- wiring


def _add_common_io(sub, corpus=True):
    if corpus:
        sub.add_argument("--corpus", required=True, help="trial corpus file")
        sub.add_argument("--format", choices=["csv", "jsonl"], default=None,
                         help="corpus format (default: inferred from suffix)")
    sub.add_argument("--out", default=None, help="output path (default: stdout)")


def _add_tau_options(sub):
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--tau", type=float, default=None, help="operating threshold")
    group.add_argument("--threshold", default=None,
                       help="JSON file with a 'tau' key, as written by `threshold`")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wcfar", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("threshold", parents=[], help="calibrate an operating threshold",
                        description="Pick tau from labelled scores by EER or minimum detection cost.")
    p.add_argument("--labels", required=True, help="CSV with header label,score")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--eer", action="store_true", help="equal error rate threshold")
    mode.add_argument("--dcf", type=_parse_dcf, default=None, metavar="P,CMISS,CFA",
                      help="minimum detection cost parameters")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_threshold)

    p = subs.add_parser("fit", help="fit model hyper-parameters to a corpus",
                        description="Variational EM fit; writes hyper-parameter JSON.")
    _add_common_io(p)
    p.add_argument("--init", default=None, help="starting hyper-parameter JSON")
    p.add_argument("--override", action="append", metavar="NAME=VALUE",
                   help="post-fit hyper-parameter edit (repeatable)")
    p.add_argument("--tol", type=float, default=1e-7, help="relative ELBO tolerance")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--trace", default=None, help="write ELBO trace CSV here")
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("empirical", help="closest-of-N false alarm rates from a corpus",
                        description="Worst-case Monte-Carlo estimates; CSV N,estimate,ci_low,ci_high.")
    _add_common_io(p)
    _add_tau_options(p)
    p.add_argument("--n", required=True, help="comma-separated population sizes, e.g. 1,2,4")
    p.add_argument("--t-outer", type=int, default=1000, help="outer Monte-Carlo iterations")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--selection", choices=["closest_by_mean", "random"], default="closest_by_mean")
    p.set_defaults(func=cmd_empirical)

    p = subs.add_parser("predict", help="model-based closest-of-N false alarm rates",
                        description="Model predictions for arbitrary N; CSV N,estimate,ci_low,ci_high.")
    p.add_argument("--theta", required=True, help="hyper-parameter JSON")
    _add_tau_options(p)
    p.add_argument("--n", required=True, help="comma-separated population sizes")
    p.add_argument("--t-outer", type=int, default=1000)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--scores-per-pair", type=int, default=DEFAULT_SCORES_PER_PAIR,
                   help="scores per candidate set for the sampling method")
    p.add_argument("--method", choices=["closed", "sampling"], default="closed")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = subs.add_parser("simulate", help="generate a synthetic corpus",
                        description="Spec JSON in, corpus CSV out; toy mode can emit labelled scores.")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--out", default=None)
    p.add_argument("--labeled-out", default=None, help="labelled score CSV (toy_asv only)")
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("curve", help="empirical and model estimates across N",
                        description="Rows N,tau_label,tau,source,estimate,ci_low,ci_high; "
                                    "empirical rows stop at the corpus impostor capacity.")
    _add_common_io(p)
    p.add_argument("--theta", required=True, help="hyper-parameter JSON")
    p.add_argument("--tau", action="append", required=True, metavar="LABEL=VALUE",
                   help="labelled threshold (repeatable)")
    p.add_argument("--n", required=True, help="ascending comma-separated population sizes")
    p.add_argument("--t-outer", type=int, default=1000)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--scores-per-pair", type=int, default=DEFAULT_SCORES_PER_PAIR)
    p.add_argument("--method", choices=["closed", "sampling"], default="closed")
    p.set_defaults(func=cmd_curve)

    p = subs.add_parser("diagnose", help="model-assumption mismatch report",
                        description="Skewness and closest-vs-random spread summary as JSON.")
    _add_common_io(p)
    _add_tau_options(p)
    p.add_argument("--n-impostors", type=int, default=1000)
    p.add_argument("--t-outer", type=int, default=1000)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0, usage problems exit 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
