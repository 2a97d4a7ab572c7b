"""Command-line interface: run, presets, sweep, validate.

Exit codes: 0 success, 2 configuration error, 3 numerical certificate
failure, 4 run produced only partial results.
"""

import argparse
import json
import os
import sys

from .scenario import CertificateError, ConfigError, get_preset, \
    preset_catalog, resolve_config, run_scenario, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFICATE = 3
EXIT_PARTIAL = 4


def _load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return resolve_config(raw)


def _resolve_source(args):
    """Config from --preset or --config (preset wins if both are given)."""
    if getattr(args, "preset", None):
        config = get_preset(args.preset).config
        base_dir = "."
    elif getattr(args, "config", None):
        config = _load_config(args.config)
        base_dir = os.path.dirname(os.path.abspath(args.config))
    else:
        raise ConfigError("provide --config or --preset")
    return config, base_dir


def cmd_run(args):
    config, base_dir = _resolve_source(args)
    out_dir = args.out or "."
    result = run_scenario(config, out_dir, base_dir)
    bad = [k for k, status in result["statuses"].items() if status != "ok"]
    for key, path in result["outputs"].items():
        print(f"{key}: {path}")
    if bad:
        print(f"partial results; propagation status: "
              f"{result['statuses']}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_presets(_args):
    for preset in preset_catalog():
        print(f"{preset.name:22s} {preset.description}")
    return EXIT_OK


def cmd_sweep(args):
    config, base_dir = _resolve_source(args)
    out_dir = args.out or "."
    result = run_sweep(config, out_dir, base_dir)
    print(f"summary: {result['summary']}")
    failed = [row for row in result["rows"] if row[2] == "nan"]
    if failed:
        print(f"{len(failed)} of {len(result['rows'])} sweep points failed",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_validate(args):
    config, _ = _resolve_source(args)
    print(json.dumps(config.data, indent=2))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="excitondyn",
        description="excitation transfer dynamics in chromophore networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p):
        p.add_argument("--config", help="path to a scenario JSON config")
        p.add_argument("--preset", help="name of a built-in preset")

    p_run = sub.add_parser("run", help="run one scenario")
    add_source(p_run)
    p_run.add_argument("--out", help="output directory (default: cwd)")
    p_run.set_defaults(func=cmd_run)

    p_presets = sub.add_parser("presets", help="list built-in presets")
    p_presets.set_defaults(func=cmd_presets)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    add_source(p_sweep)
    p_sweep.add_argument("--out", help="output directory (default: cwd)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate",
                           help="validate a config and echo the resolved form")
    add_source(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CertificateError as exc:
        print(f"certificate failure: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE


if __name__ == "__main__":
    sys.exit(main())
