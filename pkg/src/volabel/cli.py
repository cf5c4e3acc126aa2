"""Command-line pipeline: convert, decode, eval, stats, resample, tile,
stitch, fragreport.

Every subcommand prints a one-line deterministic summary to stdout and
writes artifacts only to user-given paths. Defaults follow the pipeline
conventions: 8.0 nm target resolution, 512x512 tiles, 26-connectivity.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as vio
from .decode import DecodeParams, ProbabilityVolume, decode_instances
from .instances import build_instance_report
from .lpa import Connectivity, LpaConfig, per_class_instances, run_lpa
from .metrics import DEFAULT_CLASS_NAMES, format_report_table, per_class_report
from .scale import ResampleSpec, TileIndex, fragmentation_report, resample, stitch, tile
from .volume import LabeledVolume

INTERP_CHOICES = ("nearest", "trilinear")


def _theta(value: str) -> float:
    x = float(value)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {value}")
    return x


def _fraction(value: str) -> float:
    x = float(value)
    if not 0.0 < x <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {value}")
    return x


def _connectivity(value: str) -> Connectivity:
    try:
        return Connectivity(int(value))
    except ValueError:
        raise argparse.ArgumentTypeError(f"connectivity must be 6, 18 or 26, got {value}")


def _tile_spec(value: str) -> tuple[int, ...]:
    try:
        parts = tuple(int(p) for p in value.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"tile must look like 512x512 or 4x64x64, got {value!r}")
    if len(parts) not in (2, 3) or any(p <= 0 for p in parts):
        raise argparse.ArgumentTypeError(f"tile must be 2 or 3 positive sizes, got {value!r}")
    return parts


def _resolution(value: str) -> tuple[float, float, float]:
    parts = [float(p) for p in value.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3 or any(p <= 0 for p in parts):
        raise argparse.ArgumentTypeError(f"resolution must be R or RZ,RY,RX positive, got {value!r}")
    return tuple(parts)


def _overlap_for(tile_size: tuple[int, int, int], overlap: int) -> tuple[int, int, int]:
    # scalar overlap never applies to a degenerate (tz=1) axis
    oz = 0 if tile_size[0] == 1 else overlap
    return (oz, overlap, overlap)


def _normalized_tile(parts: tuple[int, ...]) -> tuple[int, int, int]:
    return (1,) + parts if len(parts) == 2 else parts


def _write_class_map(path, instance_class: dict[int, int]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id,class\n")
        for i in sorted(instance_class):
            fh.write(f"{i},{instance_class[i]}\n")


def _read_class_map(path) -> dict[int, int]:
    out: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "id,class":
            raise ValueError(f"bad class map header {header.strip()!r} in {path}")
        for line in fh:
            if line.strip():
                i, c = line.strip().split(",")
                out[int(i)] = int(c)
    return out


def cmd_convert(args) -> int:
    vol = vio.read_vlv(args.input)
    if not isinstance(vol, LabeledVolume):
        raise ValueError("convert expects a label volume, got probabilities")
    if args.per_class:
        instances, id_to_class = per_class_instances(vol, args.connectivity)
        vio.write_vlv(instances, args.output)
        if args.class_map:
            _write_class_map(args.class_map, id_to_class)
        print(f"convert: wrote {args.output} K={len(id_to_class)} per_class=yes "
              f"connectivity={int(args.connectivity)}")
    else:
        cfg = LpaConfig(connectivity=args.connectivity,
                        schedule={"sync": "synchronous", "sweeps": "raster_sweeps"}[args.schedule])
        res = run_lpa(vol, cfg)
        vio.write_vlv(res.instances, args.output)
        print(f"convert: wrote {args.output} K={res.num_instances} "
              f"iterations={res.iterations_used} schedule={args.schedule} "
              f"connectivity={int(args.connectivity)}")
    return 0


def cmd_decode(args) -> int:
    vol = vio.read_vlv(args.input)
    if not isinstance(vol, ProbabilityVolume):
        raise ValueError("decode expects a probability volume (f32 VLV)")
    params = DecodeParams(threshold=args.theta, marker_fraction=args.marker_fraction,
                          connectivity=args.connectivity, min_instance_size=args.min_size)
    instances = decode_instances(vol, params)
    vio.write_vlv(instances, args.output)
    k = int(instances.data.max())
    print(f"decode: wrote {args.output} instances={k} theta={args.theta} "
          f"marker_fraction={args.marker_fraction} min_size={args.min_size}")
    return 0


def cmd_eval(args) -> int:
    pred = vio.read_vlv(args.pred)
    gt = vio.read_vlv(args.gt)
    if not isinstance(pred, LabeledVolume) or not isinstance(gt, LabeledVolume):
        raise ValueError("eval expects label volumes")
    if args.classes:
        classes = [int(c) for c in args.classes.split(",")]
    else:
        present = np.union1d(np.unique(pred.data), np.unique(gt.data))
        classes = [int(c) for c in present if c > 0] or [1]
    scheme = {"macro": "macro_unweighted", "voxel": "voxel_weighted"}[args.avg]
    report = per_class_report(pred, gt, classes, scheme)
    print(format_report_table(report, DEFAULT_CLASS_NAMES))
    if args.csv:
        vio.export_csv(report, args.csv)
    print(f"eval: classes={','.join(str(c) for c in classes)} avg={args.avg} "
          f"dice={report.average.dice!r} iou={report.average.iou!r}")
    return 0


def cmd_stats(args) -> int:
    vol = vio.read_vlv(args.input)
    if not isinstance(vol, LabeledVolume) or vol.role != "instance":
        raise ValueError("stats expects an instance volume")
    classes = _read_class_map(args.class_map) if args.class_map else None
    report = build_instance_report(vol, classes)
    if args.csv:
        vio.export_csv(report, args.csv)
    bands = {b: sum(1 for v in report.size_class.values() if v == b)
             for b in ("small", "medium", "large")}
    print(f"stats: instances={report.total_instances} small={bands['small']} "
          f"medium={bands['medium']} large={bands['large']}")
    return 0


def cmd_resample(args) -> int:
    vol = vio.read_vlv(args.input)
    interp = args.interp
    if interp is None:
        interp = "nearest" if isinstance(vol, LabeledVolume) else "trilinear"
    spec = ResampleSpec(source_res_nm=vol.voxel_size_nm, target_res_nm=args.target_res,
                        interp=interp)
    out = resample(vol, spec)
    vio.write_vlv(out, args.output)
    print(f"resample: wrote {args.output} dims={'x'.join(str(d) for d in out.data.shape)} "
          f"target_res={args.target_res[0]},{args.target_res[1]},{args.target_res[2]} "
          f"interp={interp}")
    return 0


def cmd_tile(args) -> int:
    vol = vio.read_vlv(args.input)
    tile_size = _normalized_tile(args.tile)
    overlap = _overlap_for(tile_size, args.overlap)
    tiles, index = tile(vol, tile_size, overlap)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, t in enumerate(tiles):
        name = f"tile_{i:05d}.vlv"
        vio.write_vlv(t, out_dir / name)
        names.append(name)
    meta = index.to_dict()
    meta["tiles"] = names
    with open(out_dir / "index.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"tile: wrote {len(tiles)} tiles to {out_dir} "
          f"tile_size={'x'.join(str(t) for t in tile_size)} "
          f"overlap={'x'.join(str(o) for o in overlap)}")
    return 0


def cmd_stitch(args) -> int:
    index_path = Path(args.index)
    with open(index_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    index = TileIndex.from_dict(meta)
    tiles = [vio.read_vlv(index_path.parent / name) for name in meta["tiles"]]
    out = stitch(tiles, index)
    vio.write_vlv(out, args.output)
    print(f"stitch: wrote {args.output} dims={'x'.join(str(d) for d in out.data.shape)} "
          f"tiles={len(tiles)}")
    return 0


def cmd_fragreport(args) -> int:
    vol = vio.read_vlv(args.input)
    if not isinstance(vol, LabeledVolume):
        raise ValueError("fragreport expects a label volume")
    tile_size = _normalized_tile(args.tile)
    overlap = _overlap_for(tile_size, args.overlap)
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    report = fragmentation_report(vol, tile_size, overlap, args.connectivity,
                                  threads=threads)
    if args.csv:
        vio.export_csv(report, args.csv)
    print(f"fragreport: K={report.instances_global} "
          f"K_tiled={report.instances_after_tiling} "
          f"split_instances={report.split_instances} "
          f"tile_size={'x'.join(str(t) for t in tile_size)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volabel",
        description="Connectivity-aware instance labeling and evaluation for 3D volumes.")
    parser.add_argument("--threads", type=int, default=0, metavar="N",
                        help="worker threads, 0 = auto (results never depend on this)")
    parser.add_argument("--seed", type=int, default=0, metavar="U64",
                        help="seed for randomized operations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="semantic labels to instance labels")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--connectivity", type=_connectivity, default=Connectivity.C26)
    p.add_argument("--schedule", choices=("sync", "sweeps"), default="sweeps")
    p.add_argument("--per-class", action="store_true",
                   help="label components independently per semantic class")
    p.add_argument("--class-map", default=None,
                   help="with --per-class: write id,class CSV here")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("decode", help="probability volume to instance labels")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--theta", type=_theta, default=0.5)
    p.add_argument("--marker-fraction", type=_fraction, default=0.5)
    p.add_argument("--min-size", type=int, default=1)
    p.add_argument("--connectivity", type=_connectivity, default=Connectivity.C26)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="per-class Dice/IoU report")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--classes", default=None, help="comma-separated class ids")
    p.add_argument("--avg", choices=("macro", "voxel"), default="macro")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="instance size census")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--csv", default=None)
    p.add_argument("--class-map", default=None, help="id,class CSV from convert --per-class")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("resample", help="align to a target resolution")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--target-res", type=_resolution, default=(8.0, 8.0, 8.0),
                   metavar="NM", help="target nm/voxel, scalar or RZ,RY,RX (default 8.0)")
    p.add_argument("--interp", choices=INTERP_CHOICES, default=None,
                   help="default: nearest for labels, trilinear for probabilities")
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("tile", help="cut a volume into overlapping tiles")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tile", type=_tile_spec, default=(512, 512),
                   help="tile size YxX or ZxYxX (default 512x512)")
    p.add_argument("--overlap", type=int, default=0)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("stitch", help="reassemble tiles into one volume")
    p.add_argument("--index", required=True, help="index.json written by tile")
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("fragreport", help="instance fragmentation under tiling")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tile", type=_tile_spec, default=(512, 512))
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--connectivity", type=_connectivity, default=Connectivity.C26)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_fragreport)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # uniform nonzero exit with a diagnostic
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
