"""Command-line entry points.

    banditalloc run <config.json>        execute the experiment grid
    banditalloc validate <config.json>   enumerate config problems
    banditalloc plot <report_dir>        regenerate SVG charts
    banditalloc audit <report_dir>       re-check a finished report's trace
    banditalloc synth <spec.json> <out>  write a synthetic dataset CSV
    banditalloc preset <name> [-o file]  dump a built-in config

The BANDITALLOC_WORKERS environment variable overrides the config's worker
count for `run`.
"""

from __future__ import annotations

import argparse
import json
import sys

from .data import SyntheticSpec, generate_synthetic, write_csv
from .presets import PRESETS
from .runner import ConfigError, audit_report, load_config, run_experiment, validate_config


def _cmd_run(args) -> int:
    try:
        raw = load_config(args.config)
    except ConfigError as exc:
        print("config errors:", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return 2
    def progress(done, total, result):
        if args.verbose:
            print(f"[{done}/{total}] {result.policy} {result.regime} "
                  f"{result.kernel_type} seed={result.seed} "
                  f"final_regret={result.cum_regret[-1]:.3f}")
    try:
        bundle = run_experiment(raw, progress=progress)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    print(f"report written to {bundle.output_dir}")
    for policy, regime, kernel_type, n, mean_r, std_r, _ in bundle.summary:
        print(f"  {policy:8s} {regime:9s} {kernel_type}: "
              f"final regret {mean_r} +/- {std_r} over {n} seeds")
    return 0


def _cmd_validate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    errors = validate_config(raw)
    if errors:
        for e in errors:
            print(e)
        return 1
    print("valid")
    return 0


def _cmd_plot(args) -> int:
    from .plots import render_plots

    for path in render_plots(args.report_dir):
        print(path)
    return 0


def _cmd_audit(args) -> int:
    messages = audit_report(args.report_dir)
    if messages:
        for m in messages:
            print(m)
        return 1
    print("clean")
    return 0


def _cmd_synth(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec = SyntheticSpec(**json.load(fh))
    dataset = generate_synthetic(spec)
    write_csv(dataset, args.out)
    print(f"wrote {dataset.n} rows to {args.out}")
    return 0


def _cmd_preset(args) -> int:
    config = PRESETS[args.name]()
    text = json.dumps(config, indent=2, sort_keys=True) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(args.output)
    else:
        print(text, end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="banditalloc", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("-v", "--verbose", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)

    p_plot = sub.add_parser("plot", help="render SVG charts from a report")
    p_plot.add_argument("report_dir")
    p_plot.set_defaults(func=_cmd_plot)

    p_audit = sub.add_parser("audit", help="re-check a report's allocation trace")
    p_audit.add_argument("report_dir")
    p_audit.set_defaults(func=_cmd_audit)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    p_synth.add_argument("spec")
    p_synth.add_argument("out")
    p_synth.set_defaults(func=_cmd_synth)

    p_preset = sub.add_parser("preset", help="print or write a built-in config")
    p_preset.add_argument("name", choices=sorted(PRESETS))
    p_preset.add_argument("-o", "--output")
    p_preset.set_defaults(func=_cmd_preset)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
