"""Command-line entry point: experiment dispatch, config handling, output files.

Every subcommand is a thin adapter around a harness experiment: it builds the
experiment's config dataclass from defaults, an optional key=value config file
and --set overrides, runs it, writes the CSVs plus a key=value summary, and
prints the summary to stdout.  No numerical logic lives here.
"""

import argparse
import dataclasses
import os
import sys

from . import harness

__all__ = ["dispatch", "main"]


def _bounded_default():
    return harness.ConvergenceConfig.bounded()


def _discrete_pricing_default():
    return harness.PricingConfig(monitoring="dates")


@dataclasses.dataclass
class _SdeComplexityConfig:
    """mlmc-complexity with model=sde-fixed / sde-scaled routes here."""


EXPERIMENTS = {
    "stability-scan": (harness.StabilityScanConfig, harness.stability_scan),
    "eigencheck": (harness.EigencheckConfig, harness.eigencheck),
    "converge-unbounded": (harness.ConvergenceConfig, harness.converge_unbounded),
    "converge-bounded": (_bounded_default, harness.converge_bounded),
    "fourier-accuracy": (harness.FourierAccuracyConfig,
                         harness.fourier_mode_accuracy),
    "regularity": (harness.RegularityConfig, harness.regularity_diagnostic),
    "price-tranches": (harness.PricingConfig, harness.price_tranches),
    "price-discrete": (_discrete_pricing_default, harness.price_tranches),
    "particle-compare": (harness.ParticleCompareConfig, harness.particle_compare),
    "mlmc-complexity": (harness.ComplexityConfig, None),  # dispatched on model
    "sde-scaling": (harness.SdeScalingConfig, harness.sde_cost_scaling),
}


class ConfigError(ValueError):
    pass


def _coerce(raw, current):
    """Parse a string override to the type of the field's current value."""
    if isinstance(current, bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = [p for p in raw.split(",") if p]
        if current and all(isinstance(x, int) for x in current):
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    if current is None:
        low = raw.lower()
        if low in ("none", "null"):
            return None
        try:
            return float(raw)
        except ValueError:
            return raw
    return raw


def _apply_override(cfg, key, raw):
    """Set a (possibly dotted) field on a config dataclass tree."""
    obj = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if not dataclasses.is_dataclass(obj) or \
                part not in {f.name for f in dataclasses.fields(obj)}:
            raise ConfigError(f"unknown config key {key!r}")
        obj = getattr(obj, part)
    leaf = parts[-1]
    if not dataclasses.is_dataclass(obj) or \
            leaf not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(obj, leaf, _coerce(raw, getattr(obj, leaf)))


def _parse_config_file(path):
    pairs = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = text.partition("=")
            pairs.append((key.strip(), value.strip()))
    return pairs


def _build_config(factory, args):
    cfg = factory()
    overrides = []
    if args.config:
        overrides.extend(_parse_config_file(args.config))
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        overrides.append((key.strip(), value.strip()))
    for key, value in overrides:
        _apply_override(cfg, key, value)
    if args.seed is not None:
        _apply_override(cfg, "seed", str(args.seed))
    return cfg


def _write_report(report, outdir, name):
    os.makedirs(outdir, exist_ok=True)
    files = []

    def emit(tag, payload):
        path = os.path.join(outdir, tag)
        header, rows = payload
        harness.write_csv(path, header, rows)
        files.append(path)

    emit(f"{name}.csv", report.csv())
    if hasattr(report, "level_csv"):
        emit(f"{name}_levels.csv", report.level_csv())
    if hasattr(report, "rates"):
        emit(f"{name}_rates.csv", report.rates.csv())
    summary_path = os.path.join(outdir, f"{name}_summary.txt")
    text = harness.write_summary(summary_path, report.summary())
    files.append(summary_path)
    return files, text


def _run_mlmc_complexity(cfg):
    if cfg.model == "spde":
        return harness.mlmc_complexity(cfg)
    if cfg.model in ("sde-fixed", "sde-scaled"):
        mode = "fixed" if cfg.model == "sde-fixed" else "scaled"
        sde_cfg = dataclasses.replace(cfg.sde, seed=cfg.seed, mode=mode)
        return harness.sde_cost_scaling(sde_cfg)
    raise ConfigError(f"unknown complexity model {cfg.model!r}; "
                      "expected spde, sde-fixed or sde-scaled")


def _parser():
    parser = argparse.ArgumentParser(
        prog="spdemc",
        description="Stochastic finite differences and multilevel Monte Carlo "
                    "for basket loss models")
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="experiment seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker hint; results are thread-count independent")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
    return parser


def dispatch(argv):
    """Run one experiment; returns the process exit status."""
    parser = _parser()
    args = parser.parse_args(argv)
    if not args.experiment:
        parser.print_help()
        return 2
    factory, runner = EXPERIMENTS[args.experiment]
    try:
        cfg = _build_config(factory, args)
        if args.experiment == "mlmc-complexity":
            report = _run_mlmc_complexity(cfg)
        else:
            report = runner(cfg)
        _, text = _write_report(report, args.out,
                                args.experiment.replace("-", "_"))
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    return 0


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
