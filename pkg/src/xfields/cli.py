"""Command-line entry point: ``xfields <experiment> --config FILE``."""

import argparse
import logging
import sys

from .config import EXPERIMENTS, config_from_dict, load_config
from .errors import XFieldsError
from .experiments import EXIT_ERROR, run_experiment, write_record

log = logging.getLogger("xfields")


def build_parser():
    p = argparse.ArgumentParser(prog="xfields", description="Numerical experiments for "
                                "magnetic Stark Hamiltonians in the plane.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="TOML configuration file (defaults used if omitted)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="override the config thread count")
    p.add_argument("--no-plots", action="store_true", help="skip SVG figures")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config, args.experiment)
        else:
            cfg = config_from_dict({}, args.experiment)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if args.out is not None:
            overrides["output_dir"] = args.out
        if overrides:
            data = cfg.as_dict()
            data.update(overrides)
            cfg = config_from_dict(data)
        record = run_experiment(cfg)
        paths = write_record(record, cfg.output_dir,
                             plots=cfg.scan["plots"] and not args.no_plots)
    except XFieldsError as exc:
        print(f"xfields: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"xfields: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{record.experiment}: {len(record.rows)} rows -> {paths['csv']}")
    for k, v in sorted(record.verdicts.items()):
        print(f"  {k}: {v}")
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
