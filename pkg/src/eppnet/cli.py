"""``eppnet synth | run | report`` command-line entry point.

Exit codes: 0 success, 1 invalid config or missing stage inputs, 2 any
other failure while running.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline, synth
from .errors import ConfigError, EppNetError, StageDependencyMissing

log = logging.getLogger("eppnet")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _mod_list(text: str) -> list:
    mods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in mods if m not in pipeline.MODALITY_ORDER]
    if bad or not mods:
        raise argparse.ArgumentTypeError(
            f"modalities must be a comma list drawn from {','.join(pipeline.MODALITY_ORDER)}")
    return mods


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="eppnet", description="Pose + parsing action recognition pipeline.")
    ap.add_argument("-q", "--quiet", action="store_true", help="only print errors")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic dataset with manifest and config")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--samples-per-class", type=int, default=16)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--mode", choices=(synth.MOTION, synth.COMPLEMENTARY), default=synth.MOTION)

    r = sub.add_parser("run", help="run pipeline stages from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--stage", default="all", choices=pipeline.STAGES + ("all",))
    r.add_argument("--workspace", help="override the workspace directory")
    r.add_argument("--seed", type=_u64, help="override the master seed")
    r.add_argument("--modalities", type=_mod_list, help="e.g. J,B,P")
    r.add_argument("--weights", help="2,2,1,1,2 (aligned with modalities) or J=2,P=2")

    p = sub.add_parser("report", help="rebuild report.txt from evaluation scores")
    p.add_argument("--workspace", required=True)
    p.add_argument("--config", help="read fusion settings from this config instead of the workspace echo")
    p.add_argument("--modalities", type=_mod_list)
    p.add_argument("--weights")
    return ap


def _run(args) -> int:
    overrides = {"workspace": args.workspace, "seed": args.seed, "modalities": args.modalities}
    if args.weights:
        mods = args.modalities or list(pipeline.MODALITY_ORDER)
        overrides["weights"] = pipeline.parse_weights(args.weights, mods)
    cfg = pipeline.PipelineConfig.load(args.config, overrides)
    status = pipeline.run(cfg, args.stage)
    for st, what in status.items():
        log.info("%-8s %s", st, what)
    return 0


def _report(args) -> int:
    workspace, weights, mode = args.workspace, None, None
    if args.config:
        cfg = pipeline.PipelineConfig.load(args.config, {"workspace": None})
        weights, mode = cfg.weights, cfg["fusion"]
    if args.weights:
        weights = {**(weights or {}),
                   **pipeline.parse_weights(args.weights, args.modalities or list(pipeline.MODALITY_ORDER))}
    files = pipeline.report(workspace, args.modalities, weights, mode)
    log.info("wrote %s", ", ".join(files))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="eppnet: %(message)s", stream=sys.stderr)
    try:
        if args.command == "synth":
            try:
                m = synth.synthesize(args.out, args.classes, args.samples_per_class, args.seed, args.mode)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            log.info("wrote %d samples to %s", len(m["entries"]), args.out)
            return 0
        if args.command == "run":
            return _run(args)
        return _report(args)
    except (ConfigError, StageDependencyMissing) as exc:
        log.error("error: %s", exc)
        return 1
    except (EppNetError, OSError, ValueError) as exc:
        log.error("failed: %s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
