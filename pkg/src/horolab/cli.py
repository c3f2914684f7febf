"""Command-line front end: ``horolab <subcommand> [options]``.

Exit status: 0 on success, 2 when the computation ran but a check failed,
1 on usage or resource errors.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from datetime import datetime, timezone
from fractions import Fraction

from .errors import HorolabError, ResourceLimitError
from .horoproduct import build_dl_window, build_product, random_split_instance, union_product_check
from .isoperimetry import (
    anchored_constant_exact,
    folner_table_csv,
    iso_ratio,
    run_cut_experiment,
    tetraeder_ratio_closed_form,
    tetraeder_subset,
)
from .leveled_tree import DEFAULT_VERTEX_CAP, BitSource, TreeParams, level_counts, sample_window_tree
from .statistics import (
    DEFAULT_COUNT_CAP,
    all_closed_probability,
    folner_trial_counts,
    growth_condition_check,
    martingale_track,
    run_folner_experiment,
    usable,
)

EXIT_OK, EXIT_ERROR, EXIT_CHECK_FAILED = 0, 1, 2
EXPLICIT_TETRAEDER_LIMIT = 200_000


class UsageError(HorolabError):
    pass


def parse_params(text: str) -> TreeParams:
    try:
        return TreeParams.parse(text)
    except HorolabError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def parse_range(text: str) -> range:
    """``lo..hi`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return range(int(lo), int(hi) + 1)
        v = int(text)
        return range(v, v + 1)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo..hi' or an integer, got {text!r}") from None


def _config(args) -> dict:
    skip = {"func", "out", "format", "trial_table"}
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        if isinstance(v, TreeParams):
            v = v.as_text()
        elif isinstance(v, range):
            v = f"{v.start}..{v.stop - 1}"
        cfg[k] = v
    return cfg


def _emit(args, payload: dict, csv_text: str | None = None) -> None:
    """Write an artifact embedding the config; CSV gets a ``# config:`` line."""
    cfg = _config(args)
    if args.format == "csv" and csv_text is not None:
        text = f"# config: {json.dumps(cfg, sort_keys=True)}\n" + csv_text
    else:
        doc = {"config": cfg, "generated_at": datetime.now(timezone.utc).isoformat(), **payload}
        text = json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _frac(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}" if f.denominator != 1 else str(f.numerator)


# subcommands ---------------------------------------------------------------


def cmd_sample_tree(args) -> int:
    tree = sample_window_tree(args.params, args.root_level, args.height,
                              BitSource(args.seed, args.tag, args.stream), args.cap)
    counts = level_counts(tree)
    csv_text = "level,count\n" + "".join(f"{l},{c}\n" for l, c in zip(counts.levels(), counts.counts))
    _emit(args, {"tree": tree.to_dict()}, csv_text)
    return EXIT_OK


def cmd_build_window(args) -> int:
    h = args.h
    left = sample_window_tree(args.left, -h, 2 * h, BitSource(args.seed, 0), args.cap)
    right = sample_window_tree(args.right, -h, 2 * h, BitSource(args.seed, 1), args.cap)
    graph = build_product(left, right, args.cap)
    _emit(args, {"graph": graph.to_dict()}, graph.to_csv())
    return EXIT_OK


def cmd_folner(args) -> int:
    series = run_folner_experiment(args.left, args.right, args.h, args.trials, args.seed,
                                   jobs=args.jobs, allow_extinction=args.allow_extinction,
                                   cap=args.count_cap)
    payload = series.to_dict()
    payload["strictly_decreasing"] = series.strictly_decreasing()
    payload["scaled_spread"] = series.scaled_spread()
    _emit(args, payload, series.to_csv())
    if args.trial_table:
        entries = (
            (h, lc, rc)
            for h in args.h
            for _, lc, rc in folner_trial_counts(args.left, args.right, h, args.trials, args.seed, args.count_cap)
            if usable(lc) and usable(rc)
        )
        with open(args.trial_table, "w", encoding="utf-8") as fh:
            fh.write(f"# config: {json.dumps(_config(args), sort_keys=True)}\n")
            fh.write(folner_table_csv(entries))
    if args.check and not series.exploratory:
        if not (series.strictly_decreasing() and series.scaled_spread() <= 4):
            return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_martingale(args) -> int:
    track = martingale_track(args.params, args.height, args.trials, args.seed,
                             condition=args.condition, cap=args.count_cap)
    rows = track.rows()
    cols = ["level", "mean_increment", "se_increment", "mean_y", "within_3se"]
    csv_text = ",".join(cols) + "\n" + "".join(",".join(str(r[c]) for c in cols) + "\n" for r in rows)
    sup = track.sup_inverse
    payload = {
        "z": track.z,
        "trials": track.trials,
        "discarded": track.discarded,
        "levels": rows,
        "sup_inverse_q99": float(sorted(sup)[int(0.99 * (len(sup) - 1))]),
    }
    _emit(args, payload, csv_text)
    return EXIT_OK if track.increments_ok() else EXIT_CHECK_FAILED


def cmd_tetraeder(args) -> int:
    beta, N = args.beta, args.N
    expected = Fraction(2, N + 1)
    h = N // 2 + 2
    size = (2 * h + 1) * beta ** (2 * h)
    if size <= EXPLICIT_TETRAEDER_LIMIT and not args.closed_form:
        host = build_dl_window(beta, beta, h)
        n = -(N // 2)
        sel = tetraeder_subset(host, (1,) * (n + h), (1,) * (h - n - N), N)
        report = iso_ratio(host, sel, "inner")
        ratio, method = report.ratio, "explicit"
    else:
        ratio, method = tetraeder_ratio_closed_form(beta, N), "closed-form"
    print(f"ratio {_frac(ratio)} ({method}; expected {_frac(expected)})")
    return EXIT_OK if ratio == expected else EXIT_CHECK_FAILED


def cmd_anchored(args) -> int:
    h = args.h if args.h is not None else args.n_max
    host = build_dl_window(args.alpha_left, args.alpha_right, h, args.cap)
    res = anchored_constant_exact(host, n_max=args.n_max)
    print(f"anchored ratio {_frac(res.ratio)} over {res.enumerated} connected sets; "
          f"witness size {len(res.witness)}")
    if args.out:
        _emit(args, res.to_dict())
    return EXIT_OK


def cmd_cutcheck(args) -> int:
    exp = run_cut_experiment(args.left, args.right, args.h, args.clusters, args.subsets, args.seed)
    report = exp.to_dict()
    _emit(args, report)
    return EXIT_OK if exp.ok else EXIT_CHECK_FAILED


def cmd_lemma11(args) -> int:
    rng = random.Random(args.seed)
    results = [union_product_check(*random_split_instance(rng, args.seed, i)) for i in range(args.instances)]
    ok = all(r.ok and r.components_disjoint == 2 and r.components_bridged == 1 for r in results)
    _emit(args, {"instances": [r.to_dict() for r in results], "ok": ok})
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_growthcheck(args) -> int:
    report = growth_condition_check(args.left, args.right, args.tol)
    print(report)
    return EXIT_OK if report.satisfied else EXIT_CHECK_FAILED


def cmd_allclosed(args) -> int:
    rep = all_closed_probability(args.left, args.right, args.N)
    print(f"M_left={rep.m_left} M_right={rep.m_right} probability={_frac(rep.probability)}")
    if args.out:
        _emit(args, rep.to_dict())
    return EXIT_OK


# parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="horolab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, seed=True, output=True):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        if seed:
            sp.add_argument("--seed", type=int, default=0, help="master seed (HOROLAB_SEED overrides)")
        if output:
            sp.add_argument("--out", help="artifact path (default: stdout)")
            sp.add_argument("--format", choices=["csv", "json"], default="csv")
        sp.add_argument("--jobs", type=int, default=1, help="worker budget")
        return sp

    sp = add("sample-tree", cmd_sample_tree, "sample one percolated window tree")
    sp.add_argument("--params", type=parse_params, required=True, help="alpha_min,alpha_max,p")
    sp.add_argument("--root-level", type=int, default=0)
    sp.add_argument("--height", type=int, required=True)
    sp.add_argument("--tag", type=int, default=0)
    sp.add_argument("--stream", type=int, default=0)
    sp.add_argument("--cap", type=int, default=DEFAULT_VERTEX_CAP)

    sp = add("build-window", cmd_build_window, "build an explicit product window")
    sp.add_argument("--left", type=parse_params, required=True)
    sp.add_argument("--right", type=parse_params, required=True)
    sp.add_argument("--h", type=int, required=True)
    sp.add_argument("--cap", type=int, default=DEFAULT_VERTEX_CAP)

    sp = add("folner", cmd_folner, "Følner ratio decay experiment")
    sp.add_argument("--left", type=parse_params, required=True)
    sp.add_argument("--right", type=parse_params, required=True)
    sp.add_argument("--h", type=parse_range, required=True, help="lo..hi")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--allow-extinction", action="store_true")
    sp.add_argument("--check", action="store_true", help="exit 2 unless medians decay like 1/h")
    sp.add_argument("--trial-table", help="also write one row per trial (h, top counts, volume, ratio)")
    sp.add_argument("--count-cap", type=int, default=DEFAULT_COUNT_CAP)

    sp = add("martingale", cmd_martingale, "normalised level-count martingale diagnostics")
    sp.add_argument("--params", type=parse_params, required=True)
    sp.add_argument("--height", type=int, required=True)
    sp.add_argument("--trials", type=int, default=10_000)
    sp.add_argument("--condition", action="store_true", help="discard extinct trials")
    sp.add_argument("--count-cap", type=int, default=DEFAULT_COUNT_CAP)

    sp = add("tetraeder", cmd_tetraeder, "exact tetraeder ratio in a regular region", seed=False, output=False)
    sp.add_argument("--beta", type=int, required=True)
    sp.add_argument("--N", type=int, required=True)
    sp.add_argument("--closed-form", action="store_true")

    sp = add("anchored", cmd_anchored, "exhaustive anchored isoperimetric ratio", seed=False)
    sp.add_argument("--alpha-left", type=int, required=True)
    sp.add_argument("--alpha-right", type=int, required=True)
    sp.add_argument("--n-max", type=int, required=True)
    sp.add_argument("--h", type=int, default=None, help="window half-height (default n-max)")
    sp.add_argument("--cap", type=int, default=DEFAULT_VERTEX_CAP)

    sp = add("cutcheck", cmd_cutcheck, "edge-removal lower-bound comparison")
    sp.add_argument("--left", type=parse_params, default=TreeParams(1, 1, 1.0))
    sp.add_argument("--right", type=parse_params, default=TreeParams(2, 3, 0.5))
    sp.add_argument("--h", type=int, default=3)
    sp.add_argument("--clusters", type=int, default=100)
    sp.add_argument("--subsets", type=int, default=100)

    sp = add("lemma11", cmd_lemma11, "disjoint-union / bridge component check")
    sp.add_argument("--instances", type=int, default=20)

    sp = add("growthcheck", cmd_growthcheck, "equal-growth condition", seed=False, output=False)
    sp.add_argument("--left", type=parse_params, required=True)
    sp.add_argument("--right", type=parse_params, required=True)
    sp.add_argument("--tol", type=float, default=1e-12)

    sp = add("allclosed", cmd_allclosed, "probability that all percolative edges are closed", seed=False)
    sp.add_argument("--left", type=parse_params, required=True)
    sp.add_argument("--right", type=parse_params, required=True)
    sp.add_argument("--N", type=int, required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    env_seed = os.environ.get("HOROLAB_SEED")
    if env_seed is not None and hasattr(args, "seed"):
        try:
            args.seed = int(env_seed)
        except ValueError:
            print(f"error: HOROLAB_SEED={env_seed!r} is not an integer", file=sys.stderr)
            return EXIT_ERROR
    try:
        return args.func(args)
    except ResourceLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except HorolabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
