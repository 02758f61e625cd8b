"""Command-line interface: synth / simulate / verify / plot."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .invariant import DegenerateSystemError, NoRpiFoundError


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="experiment config JSON")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument(
        "--arch",
        choices=["cg", "cgh", "ch", "all"],
        default="all",
        help="restrict to one architecture",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rotorbound",
        description=(
            "Certified trajectory-tracking error bounds for autonomous "
            "helicopters: invariant-set synthesis, closed-loop simulation, "
            "bound verification and plotting."
        ),
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="compute RPI sets for the configured controllers")
    _add_common(p)

    p = sub.add_parser("simulate", help="run closed-loop simulations")
    _add_common(p)
    p.add_argument("--fidelity", choices=["a", "b"], default=None)
    p.add_argument("--seed", type=int, default=None, help="override the wind seed")
    p.add_argument("--planar", action="store_true", help="certify in the horizontal plane")

    p = sub.add_parser("verify", help="check traces against certified sets")
    _add_common(p)
    p.add_argument("--fidelity", choices=["a", "b"], default=None)

    p = sub.add_parser("plot", help="emit SVG figures and plot data")
    _add_common(p)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = harness.load_config(args.config if args.config else {})
    if getattr(args, "planar", False):
        cfg.bounds["planar"] = True
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    archs = None if args.arch == "all" else [args.arch]
    out = args.out

    if args.command == "synth":
        try:
            results = harness.cmd_synth(cfg, archs=archs, out_dir=out)
        except DegenerateSystemError as e:
            print(f"synthesis failed: {e}", file=sys.stderr)
            return harness.EXIT_SYNTH_INFEASIBLE
        except NoRpiFoundError as e:
            print(f"synthesis infeasible: {e}", file=sys.stderr)
            for tau2, res in sorted(e.residuals.items()):
                print(f"  tau2 = {tau2:.6g}: phase-1 residual {res:.3e}", file=sys.stderr)
            return harness.EXIT_SYNTH_INFEASIBLE
        for arch, r in results.items():
            print(
                f"{arch}: objective {r.objective:.4f}, tau1 {r.tau1:.4g}, "
                f"tau2 {r.tau2:.4g}, residual {r.residual:.3e}"
            )
        return harness.EXIT_PASS

    if args.command == "simulate":
        fids = [args.fidelity] if args.fidelity else None
        paths = harness.cmd_simulate(
            cfg, archs=archs, fidelities=fids, out_dir=out, seed=args.seed
        )
        for p in paths:
            print(p)
        return harness.EXIT_PASS

    if args.command == "verify":
        fids = [args.fidelity] if args.fidelity else None
        reports, code = harness.cmd_verify(cfg, archs=archs, fidelities=fids, out_dir=out)
        for r in reports:
            print(
                f"{r.run}: {r.status} (max eTPe {r.max_membership:.4g}, "
                f"assumptions {'ok' if r.assumptions_ok else 'violated'})"
            )
        return code

    if args.command == "plot":
        for p in harness.cmd_plot(cfg, out_dir=out):
            print(p)
        return harness.EXIT_PASS

    return 1


if __name__ == "__main__":
    sys.exit(main())
