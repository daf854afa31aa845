"""Command-line front end: ``qflab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import __version__, flatsurf, halfpipe, mesh, pipeline, svg
from .errors import QFLabError

_ENDS = {"+": (1,), "-": (-1,), "both": (1, -1), "+,-": (1, -1), "-,+": (1, -1)}


def _ends(text: str) -> tuple[int, ...]:
    try:
        return _ENDS[text.replace(" ", "")]
    except KeyError:
        raise argparse.ArgumentTypeError("ends must be '+', '-' or 'both'") from None


def _checks(text: str) -> tuple[str, ...]:
    if text == "all":
        return pipeline.GROUPS
    groups = tuple(g.strip() for g in text.split(",") if g.strip())
    unknown = set(groups) - set(pipeline.GROUPS)
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown check groups {sorted(unknown)}; choose from {', '.join(pipeline.GROUPS)}")
    return groups


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--surface", type=Path, help="surface file (default: the built-in 3-square L)")
    p.add_argument("--h-target", type=float, default=0.05, help="mesh size target (default 0.05)")
    p.add_argument("--s0", type=float, default=8e-3, help="largest s of the geometric grid")
    p.add_argument("--s-ratio", type=float, default=0.5, help="ratio of the s grid")
    p.add_argument("--s-count", type=int, default=4, help="number of grid points")
    p.add_argument("--ends", type=_ends, default=(1, -1), help="'+', '-' or 'both'")
    p.add_argument("--out", type=Path, help="output file (directory for 'run')")
    p.add_argument("--seed", type=int, default=0, help="seed for randomised checks")
    p.add_argument("--checks", type=_checks, default=pipeline.GROUPS, help="comma-separated check groups or 'all'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qflab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        return p

    add("realize", "flat surface of the weighted multicurves")
    add("uniformize", "hyperbolic conformal factor on the mesh")
    add("minsurf", "minimal-surface conformal factor u_s").add_argument("--s", type=float, required=True)
    add("schwarzian", "per-face Schwarzian at infinity").add_argument("--s", type=float, required=True)
    hp = add("halfpipe", "half-pipe limit of a jet, or half-pipe Schwarzians of the surface")
    hp.add_argument("--jet", type=Path, help="jet file; without it the surface's half-pipe Schwarzians are checked")
    fl = add("flow", "Teichmueller flow or the critical point on the disk")
    group = fl.add_mutually_exclusive_group(required=True)
    group.add_argument("--s", type=float, help="flow time")
    group.add_argument("--critical", type=float, metavar="T", help="critical point of ext(sqrt(T) F) + ext(G / sqrt(T))")
    add("verify", "run the named invariant checks")
    ex = add("export", "SVG rendering")
    ex.add_argument("--kind", required=True, help="surface, foliation or schwarzian-field")
    ex.add_argument("--s", type=float, default=0.1, help="path parameter for schwarzian-field")
    add("run", "full pipeline; writes the report bundle to --out")
    return parser


def _config(args, out=None) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(
        surface=args.surface,
        h_target=args.h_target,
        s0=args.s0,
        s_ratio=args.s_ratio,
        s_count=args.s_count,
        ends=args.ends,
        out=out if out is not None else (args.out or Path("qflab-out")),
        seed=args.seed,
        checks=args.checks,
    ).validate()


def _emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8", newline="\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except QFLabError as exc:
        stage = exc.stage or args.command
        print(f"qflab: [{stage}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "run":
        bundle = pipeline.run_pipeline(_config(args))
        sys.stdout.write(pipeline.format_table(bundle.rows))
        return bundle.exit_code
    if cmd == "verify":
        rows = pipeline.verify_suite(_config(args, Path(".")))
        _emit(args, pipeline.format_table(rows))
        return pipeline.exit_code(rows)
    if cmd == "halfpipe" and args.jet is not None:
        jet = halfpipe.parse_jet(args.jet.read_text(encoding="utf-8"))
        rep = halfpipe.rescale_report(jet)
        lines = [halfpipe.format_element(rep.element).rstrip("\n")]
        lines += [f"# conjugation_error[t={t:g}] = {e:.6e}" for t, e in rep.errors.items()]
        lines.append(f"# discarded = {' '.join(sorted(rep.discarded))}")
        _emit(args, "\n".join(lines) + "\n")
        return 0 if rep.passed else 1

    ctx = pipeline.Context(_config(args, Path(".")))
    if cmd == "realize":
        _emit(args, flatsurf.format_flat_surface(ctx.flat))
    elif cmd == "flow":
        if args.critical is not None:
            p = flatsurf.critical_point_on_disk(ctx.flat, args.critical)
            _emit(args, f"s_closed = {p.s!r}\ns_numeric = {p.numeric_s!r}\n")
        else:
            _emit(args, flatsurf.format_flat_surface(flatsurf.teich_flow(ctx.flat, args.s)))
    elif cmd == "uniformize":
        hyp = ctx.hyp
        print(f"# newton iterations {hyp.info.iterations}, residual {hyp.info.residual:.3e}, "
              f"area {mesh.hyperbolic_area(ctx.mesh, hyp):.12f}", file=sys.stderr)
        _emit(args, mesh.format_metric(hyp))
    elif cmd == "minsurf":
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            d = ctx.path.immersion(args.s)
        for w in caught:
            print(f"# warning: {w.message}", file=sys.stderr)
        lo, hi = d.lam_range
        print(f"# s {args.s:g}: residual {d.gauss_residual:.3e}, principal curvatures [{lo:.6g}, {hi:.6g}], "
              f"almost-Fuchsian {str(d.almost_fuchsian).lower()}", file=sys.stderr)
        _emit(args, mesh.format_metric(d.u))
    elif cmd == "schwarzian":
        lines = ["# face end re im"]
        for end in args.ends:
            sigma = ctx.path.sigma(args.s, end)
            tag = "+" if end > 0 else "-"
            lines += [f"{i} {tag} {z.real:.17g} {z.imag:.17g}" for i, z in enumerate(sigma)]
        _emit(args, "\n".join(lines) + "\n")
    elif cmd == "halfpipe":
        hp = ctx.hp_schwarzian
        _emit(
            args,
            f"sigma_hp_plus_l1_error = {hp.error_plus:.6e}\n"
            f"sigma_hp_minus_l1_error = {hp.error_minus:.6e}\n"
            f"antisymmetry_l1 = {hp.antisymmetry:.6e}\n"
            f"core_intersections_match = {str(hp.cores_match).lower()}\n"
            f"verdict = {'consistent' if hp.consistent else 'inconsistent'}\n",
        )
        return 0 if hp.consistent else 1
    elif cmd == "export":
        if args.kind == "schwarzian-field":
            text = svg.export_svg(ctx.flat, args.kind, mesh=ctx.mesh, sigma=ctx.path.sigma(args.s, 1), title=f"sigma+ at s={args.s:g}")
        else:
            text = svg.export_svg(ctx.flat, args.kind)
        _emit(args, text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
