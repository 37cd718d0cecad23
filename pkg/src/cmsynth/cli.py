"""Command line entry point.

Subcommands: ``synth``, ``modes``, ``sweep``, ``pattern``, ``rotate`` and
``translate``.  Every output embeds the tool version, scene hash, basis
convention and padding policy; tables are byte-identical across runs with the
same inputs.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from cmsynth import __version__
from cmsynth.basis import CONVENTION, BasisSpec
from cmsynth.io import (ConfigError, FormatError, atomic_write, load_scene_config, load_tmatrix,
                        pattern_table, save_operator, save_tmatrix, trace_table)
from cmsynth.modes import (BAND_LEVEL, TRACK_THRESHOLD, characteristic_farfield, resonance_report,
                           scene_modes, sweep)
from cmsynth.rotation import EulerAngles, default_rotation_cache, rotate_tmatrix, rotation_matrix
from cmsynth.synthesis import SingularSystemError, assemble, schur_solve, synthesize_background
from cmsynth.translation import KernelCache, general_translation

CACHE_ENV = "CMSYNTH_CACHE_DIR"


def _kernels():
    return KernelCache(directory=os.environ.get(CACHE_ENV) or None)


def _say(args, level, msg):
    if args.verbose >= level:
        print(msg, file=sys.stderr)


def _cache_report(args, kernels):
    rc = default_rotation_cache
    _say(args, 1, f"z-kernel cache: {kernels.stats()}")
    _say(args, 1, f"rotation cache: entries={len(rc)} hits={rc.hits} builds={rc.misses}")


def _meta(args, scene, **extra):
    meta = {
        "tool": f"cmsynth {__version__}",
        "command": args.command,
        "convention": CONVENTION,
        "scene_hash": scene.hash(),
        "padding_policy": scene.padding_policy(),
        "global_lmax": scene.global_basis.lmax,
        "config": Path(args.config).name,
    }
    meta.update(extra)
    return meta


def _config(args):
    cfg = load_scene_config(args.config)
    if args.n_modes is None:
        args.n_modes = cfg.n_modes
    return cfg


def _output(args, cfg, key):
    out = args.output or cfg.outputs.get(key)
    if not out:
        raise ConfigError(f"no output path: pass -o or set outputs.{key} in the configuration")
    return out


def cmd_synth(args):
    cfg = _config(args)
    scene = cfg.scene(args.frequency_hz, args.padding)
    kernels = _kernels()
    system = assemble(scene, cache=kernels, threads=args.threads)
    art = synthesize_background(scene, system=system)
    total = schur_solve(system, art)
    extra = {"scene_hash": scene.hash(), "padding_policy": scene.padding_policy()}
    save_tmatrix(total, _output(args, cfg, "tmatrix"), **extra)
    if args.background_out:
        save_tmatrix(art.tmatrix, args.background_out, **extra)
    _cache_report(args, kernels)
    return 0


def cmd_modes(args):
    cfg = _config(args)
    scene = cfg.scene(args.frequency_hz, args.padding)
    f = args.frequency_hz or cfg.frequency or cfg.sweep[0]
    kernels = _kernels()
    ms = scene_modes(scene, f, args.n_modes, kernels=kernels)
    rows = [(f, tid, t) for tid, t in zip(ms.track_ids.tolist(), ms.eigenvalues.tolist())]
    meta = _meta(args, scene, frequency_hz=repr(float(f)), n_modes=len(ms),
                 background="none (T_b = 0)" if not scene.background() else "synthesized")
    atomic_write(_output(args, cfg, "modes_csv"), trace_table(rows, meta))
    _cache_report(args, kernels)
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    if cfg.sweep is None and args.start_hz is None:
        raise ConfigError(f"{args.config}: no sweep given in the configuration or on the command line")
    start, stop, points = cfg.sweep or (None, None, None)
    start = args.start_hz if args.start_hz is not None else start
    stop = args.stop_hz if args.stop_hz is not None else stop
    points = args.points if args.points is not None else points
    scene = cfg.scene(start, args.padding)
    kernels = _kernels()
    res = sweep(scene, start, stop, points, n_modes=args.n_modes, threads=args.threads, kernels=kernels)
    meta = _meta(args, scene, sweep_hz=f"{start!r}..{stop!r} x {points}",
                 tracking=f"greedy |f^H f| threshold {TRACK_THRESHOLD}",
                 n_modes=args.n_modes if args.n_modes is not None else "all",
                 failures=len(res.failures))
    meta.pop("global_lmax")
    atomic_write(_output(args, cfg, "traces_csv"), trace_table(res.rows(), meta))
    if args.report:
        lines = ["track_id,resonance_hz,peak_abs_t,band_low_hz,band_high_hz,open_low,open_high,note"]
        if res.sets:
            for r in resonance_report(res):
                lo, hi = (repr(r.band[0]), repr(r.band[1])) if r.band else ("", "")
                lines.append(f"{r.track_id},{r.resonance!r},{r.peak!r},{lo},{hi},"
                             f"{int(r.open_low)},{int(r.open_high)},{r.note}")
        head = f"# band level: {BAND_LEVEL!r}\n"
        atomic_write(args.report, (head + "\n".join(lines) + "\n").encode())
    for f, msg in res.failures:
        print(f"error at {f!r} Hz: {msg}", file=sys.stderr)
    _cache_report(args, kernels)
    return 1 if res.failures else 0


def cmd_pattern(args):
    cfg = _config(args)
    scene = cfg.scene(args.frequency_hz, args.padding)
    f = args.frequency_hz or cfg.frequency or cfg.sweep[0]
    kernels = _kernels()
    ms = scene_modes(scene, f, None, kernels=kernels)
    theta = np.radians(np.linspace(0.0, 180.0, args.n_theta))
    phi = np.radians(np.arange(args.n_phi) * 360.0 / args.n_phi)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    pat = characteristic_farfield(ms, args.mode, tt.ravel(), pp.ravel(), exclude_background=args.exclude_background)
    meta = _meta(args, scene, frequency_hz=repr(float(f)), mode=args.mode,
                 t=repr(complex(ms.eigenvalues[args.mode])),
                 exclude_background=args.exclude_background)
    atomic_write(_output(args, cfg, "pattern_csv"), pattern_table(pat, meta))
    _cache_report(args, kernels)
    return 0


def cmd_rotate(args):
    tm = load_tmatrix(args.input)
    angles = EulerAngles.from_degrees(*args.euler_deg)
    out = rotate_tmatrix(tm, rotation_matrix(tm.basis, angles))
    out.meta.pop("path", None)
    save_tmatrix(out, args.output, rotated_by_euler_deg=[float(v) for v in args.euler_deg])
    return 0


def cmd_translate(args):
    basis = BasisSpec(args.lmax)
    basis_in = BasisSpec(args.lmax_in) if args.lmax_in else basis
    kernels = _kernels()
    op = general_translation(basis, np.array(args.kd), args.kind, basis_in=basis_in, cache=kernels)
    save_operator(op, args.output)
    _cache_report(args, kernels)
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="print cache statistics")
    common.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    common.add_argument("--padding", type=int, default=None, help="extra global degrees over the truncation rule")

    p = argparse.ArgumentParser(prog="cmsynth", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cmsynth {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def scene_cmd(name, help_):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("config", help="YAML scene file")
        s.add_argument("-o", "--output", help="output path")
        s.add_argument("--n-modes", type=int, default=None, help="keep the leading modes only")
        return s

    s = scene_cmd("synth", "write the synthesized total T-matrix")
    s.add_argument("--frequency-hz", type=float, help="override the config frequency")
    s.add_argument("--background-out", help="also write the background T-matrix")
    s.set_defaults(func=cmd_synth)

    s = scene_cmd("modes", "characteristic modes at one frequency (CSV)")
    s.add_argument("--frequency-hz", type=float, help="override the config frequency")
    s.set_defaults(func=cmd_modes)

    s = scene_cmd("sweep", "tracked eigentraces over a frequency grid (CSV)")
    s.add_argument("--start-hz", type=float, help="override sweep.start_hz")
    s.add_argument("--stop-hz", type=float, help="override sweep.stop_hz")
    s.add_argument("--points", type=int, help="override sweep.points")
    s.add_argument("--report", help="per-track resonance and 3 dB band (CSV)")
    s.set_defaults(func=cmd_sweep)

    s = scene_cmd("pattern", "far-field pattern of one mode (CSV)")
    s.add_argument("--frequency-hz", type=float, help="override the config frequency")
    s.add_argument("--mode", type=int, default=0, help="mode index (default 0)")
    s.add_argument("--n-theta", type=int, default=37, help="polar samples (default 37)")
    s.add_argument("--n-phi", type=int, default=72, help="azimuth samples (default 72)")
    s.add_argument("--exclude-background", action="store_true",
                   help="radiation of the key structures only")
    s.set_defaults(func=cmd_pattern)

    s = sub.add_parser("rotate", parents=[common], help="rotate a T-matrix file")
    s.add_argument("input", help="T-matrix file")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--euler-deg", type=float, nargs=3, required=True, metavar=("ALPHA", "BETA", "GAMMA"))
    s.set_defaults(func=cmd_rotate)

    s = sub.add_parser("translate", parents=[common], help="write a translation operator")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--lmax", type=int, required=True, help="output degree")
    s.add_argument("--lmax-in", type=int, help="input degree (default: --lmax)")
    s.add_argument("--kd", type=float, nargs=3, required=True, metavar=("X", "Y", "Z"),
                   help="displacement times wavenumber")
    s.add_argument("--kind", choices=("outgoing-regular", "regular-regular"), default="outgoing-regular")
    s.set_defaults(func=cmd_translate)
    return p


def run_cli(argv=None):
    """Run one subcommand and return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    if args.padding is not None and args.padding < 0:
        print("error: --padding must be non-negative", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SingularSystemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli())
