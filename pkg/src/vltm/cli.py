"""Command-line pipeline.

    vltm simulate  --config run.json          scene JSON -> NLIR
    vltm direct    --config run.json          NLIR -> direct.npy, direct.pgm
    vltm column    --config run.json --focus 6,3,8 [--gate higher]
    vltm mask      --config run.json          direct.npy -> mask.npy, mask.txt
    vltm indirect-all --config run.json       mask.npy -> indirect.npy
    vltm ltm       --config run.json [--masked]
    vltm bands     --config run.json --intervals 0:0.3,0.3:0.8,0.8:inf
    vltm info      FILE

Exit codes: 0 success, 2 configuration error, 3 malformed input file.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import engine, export, nlir
from .config import ConfigError, RunConfig, load_config, parse_interval_text
from .phasor import WaveParams
from .presets import desk_grid
from .scene import SceneError, load_scene
from .simulate import simulate_impulse_response

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--impulse", help="NLIR file (overrides the config)")
    p.add_argument("--output-dir", help="artifact directory (overrides the config)")
    p.add_argument("--wavelength", type=float, help="virtual wavelength in meters")
    p.add_argument("--n-jobs", type=int, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vltm", description="Virtual light transport matrix probing for NLOS scenes.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="render a scene JSON into an NLIR impulse response")
    _common(p)
    p.add_argument("--scene", help="scene JSON (overrides the config)")

    p = sub.add_parser("direct", help="direct image (LTM diagonal)")
    _common(p)

    p = sub.add_parser("column", help="one LTM column focused at a voxel")
    _common(p)
    p.add_argument("--focus", required=True, help="source voxel as vx,vy,vz")
    p.add_argument("--gate", choices=["two-bounce", "higher"], help="gate kind")

    p = sub.add_parser("mask", help="occupancy mask from the direct image")
    _common(p)
    p.add_argument("--epsilon", type=float, help="absolute threshold")

    p = sub.add_parser("indirect-all", help="in-focus indirect image over occupied voxels")
    _common(p)

    p = sub.add_parser("ltm", help="assemble the transport matrix")
    _common(p)
    p.add_argument("--masked", action="store_true", help="restrict to occupied voxels")

    p = sub.add_parser("bands", help="split a matrix by source-target distance")
    _common(p)
    p.add_argument("--intervals", help="lo:hi,lo:hi,... in meters (inf allowed)")
    p.add_argument("--matrix", help="NLTM input (default: ltm_masked.nltm, else ltm.nltm)")

    p = sub.add_parser("info", help="describe an NLIR, NLTM or .npy file")
    p.add_argument("file")
    return parser


# --- helpers --------------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = cfg.with_overrides(impulse=getattr(args, "impulse", None),
                             output_dir=getattr(args, "output_dir", None),
                             wavelength=getattr(args, "wavelength", None),
                             n_jobs=getattr(args, "n_jobs", None),
                             scene=getattr(args, "scene", None))
    if cfg.wavelength is not None and not cfg.wavelength > 0:
        raise ConfigError("'wavelength' must be > 0")
    return cfg


def _require_file(path, key):
    if path is None:
        raise ConfigError(f"missing {key!r}: set it in the config or on the command line")
    if not os.path.isfile(path):
        raise ConfigError(f"{key!r} file not found: {path}")
    return path


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def _load_impulse(cfg):
    return nlir.read_nlir(_require_file(cfg.impulse, "impulse"))


def _grid(cfg):
    return cfg.grid or desk_grid()


def _params(cfg, h) -> WaveParams:
    wavelength = cfg.wavelength or engine.default_wavelength(h.topology)
    return WaveParams(wavelength, cfg.gate_sigma)


def _load_volume(cfg, name, grid, dtype):
    path = _require_file(os.path.join(cfg.output_dir, name), name)
    arr = np.load(path, allow_pickle=False)
    if arr.shape != (grid.size,) or arr.dtype != dtype:
        raise nlir.FormatError(f"{path}: expected {dtype} array of length {grid.size}, "
                               f"got {arr.dtype} {arr.shape}")
    return arr


def _save_volume(cfg, stem, values, grid):
    np.save(_out(cfg, stem + ".npy"), values, allow_pickle=False)
    export.export_image(values, grid, _out(cfg, stem + ".pgm"), cfg.projection_axis)


def _parse_focus(text, grid):
    try:
        ijk = [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"'focus' must be vx,vy,vz integers, got {text!r}") from None
    if len(ijk) != 3:
        raise ConfigError(f"'focus' must have three components, got {text!r}")
    try:
        return grid.index(*ijk)
    except IndexError as exc:
        raise ConfigError(f"'focus' {exc}") from None


def _check_grid(grid, h):
    if np.any(h.topology.signed_distance(grid.centers) <= 0):
        raise ConfigError("'grid' must lie in front of the relay wall")


# --- commands -------------------------------------------------------------

def cmd_simulate(args, cfg):
    scene = load_scene(_require_file(cfg.scene, "scene"))
    if cfg.impulse is None:
        raise ConfigError("missing 'impulse': output NLIR path")
    h = simulate_impulse_response(scene)
    out_dir = os.path.dirname(cfg.impulse)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    nlir.write_nlir(h, cfg.impulse)
    print(f"wrote {cfg.impulse}: K_p={h.shape[0]}, K_i={h.shape[1]}, bins={h.shape[2]}, "
          f"truncated={h.n_truncated}")


def cmd_direct(args, cfg):
    h = _load_impulse(cfg)
    grid = _grid(cfg)
    _check_grid(grid, h)
    img = engine.compute_direct(h, grid, _params(cfg, h), n_jobs=cfg.n_jobs)
    _save_volume(cfg, "direct", img.values, grid)
    v = img.argmax()
    print(f"direct image: max={float(img.values.max())!r} at voxel {grid.unravel(v)}")


def cmd_column(args, cfg):
    h = _load_impulse(cfg)
    grid = _grid(cfg)
    _check_grid(grid, h)
    source = _parse_focus(args.focus, grid)
    gate = args.gate or cfg.gate
    if gate == "none":
        raise ConfigError("'gate' for column must be two-bounce or higher")
    col = engine.compute_column(h, grid, _params(cfg, h), source, gate)
    ix, iy, iz = grid.unravel(source)
    _save_volume(cfg, f"column_{ix}_{iy}_{iz}_{gate}", col, grid)
    print(f"column {grid.unravel(source)} ({gate}): max at voxel {grid.unravel(int(np.argmax(col)))}")


def cmd_mask(args, cfg):
    grid = _grid(cfg)
    values = _load_volume(cfg, "direct.npy", grid, np.float64)
    eps = args.epsilon if args.epsilon is not None else cfg.epsilon
    if eps is not None and eps < 0:
        raise ConfigError("'epsilon' must be >= 0")
    mask = engine.occupancy_from_direct(engine.DirectImage(grid, values), eps, cfg.relative_epsilon)
    np.save(_out(cfg, "mask.npy"), mask.bits, allow_pickle=False)
    export.export_image(mask.bits.astype(float), grid, _out(cfg, "mask.pgm"), cfg.projection_axis)
    with open(_out(cfg, "mask.txt"), "w") as fh:
        fh.write(f"epsilon {mask.epsilon!r}\n")
        fh.write(f"occupied {len(mask.occupied)}\n")
        for v in mask.occupied:
            fh.write(f"{v} {' '.join(map(str, grid.unravel(v)))}\n")
    print(f"mask: {len(mask.occupied)} occupied voxels (epsilon={mask.epsilon!r})")


def _load_mask(cfg, grid):
    bits = _load_volume(cfg, "mask.npy", grid, np.bool_)
    return engine.OccupancyMask(grid, bits, float("nan"))


def cmd_indirect_all(args, cfg):
    h = _load_impulse(cfg)
    grid = _grid(cfg)
    _check_grid(grid, h)
    mask = _load_mask(cfg, grid)
    gate = cfg.gate if cfg.gate != "none" else "two-bounce"
    values = engine.accumulate_in_focus_indirect(h, grid, _params(cfg, h), mask, gate, cfg.n_jobs)
    _save_volume(cfg, "indirect", values, grid)
    print(f"in-focus indirect: {len(mask.occupied)} occupied voxels, max={float(values.max())!r}")


def cmd_ltm(args, cfg):
    h = _load_impulse(cfg)
    grid = _grid(cfg)
    _check_grid(grid, h)
    if not (isinstance(cfg.sources, str)) and max(cfg.sources) >= grid.size:
        raise ConfigError(f"'sources' index {max(cfg.sources)} outside grid of {grid.size}")
    mask = _load_mask(cfg, grid) if args.masked else None
    t = engine.assemble_ltm(h, grid, _params(cfg, h), cfg.sources, cfg.gate, mask, cfg.n_jobs)
    name = "ltm_masked.csv" if args.masked else "ltm.csv"
    export.export_matrix(t, _out(cfg, name))
    print(f"ltm ({t.kind}): {len(t.sources)} columns, energy={t.total_energy()!r}")


def cmd_bands(args, cfg):
    if args.intervals:
        intervals = parse_interval_text(args.intervals)
    elif cfg.bands:
        intervals = cfg.bands
    else:
        raise ConfigError("missing 'intervals': pass --intervals or set 'bands' in the config")
    path = args.matrix
    if path is None:
        masked = os.path.join(cfg.output_dir, "ltm_masked.nltm")
        path = masked if os.path.isfile(masked) else os.path.join(cfg.output_dir, "ltm.nltm")
    t = export.read_matrix(_require_file(path, "matrix"))
    for k, band in enumerate(engine.band_decompose(t, intervals)):
        export.export_matrix(band, _out(cfg, f"band_{k}.csv"))
        lo, hi = intervals[k]
        print(f"band {k} [{lo}, {hi}): energy={band.total_energy()!r}")


def cmd_info(args):
    path = args.file
    if not os.path.isfile(path):
        raise ConfigError(f"file not found: {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] == export.MATRIX_MAGIC:
        t = export.decode_matrix(blob, path)
        print(f"NLTM matrix: kind={t.kind}, grid={t.grid.counts}, pitch={t.grid.pitch!r}, "
              f"columns={len(t.sources)}, nonzero={sum(1 for _ in t.entries())}")
        return
    if blob[:6] == b"\x93NUMPY":
        arr = np.load(path, allow_pickle=False)
        print(f"array: dtype={arr.dtype}, shape={arr.shape}")
        return
    h = nlir.decode_nlir(blob, path)
    axis = h.time_axis
    print(f"NLIR v{nlir.VERSION}: {len(blob)} bytes")
    print(f"K_p={h.shape[0]}, K_i={h.shape[1]}, bins={h.shape[2]}")
    print(f"bin_width={axis.bin_width!r} s, origin={axis.origin!r} s")
    print(f"wall_normal={h.topology.wall_normal.tolist()}")
    print(f"sum={float(h.data.sum())!r}, nonzero_bins={int(np.count_nonzero(h.data))}")


_COMMANDS = {
    "simulate": cmd_simulate, "direct": cmd_direct, "column": cmd_column, "mask": cmd_mask,
    "indirect-all": cmd_indirect_all, "ltm": cmd_ltm, "bands": cmd_bands,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "info":
            cmd_info(args)
        else:
            _COMMANDS[args.command](args, _config(args))
    except (ConfigError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except nlir.FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
