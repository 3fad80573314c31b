"""``selconv`` command-line tool.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 asset or
parse error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import verify
from .builders.cubemap import build_cubemap, nodes_to_strip, strip_to_nodes
from .builders.grid import build_grid, build_panorama, masked_grid_parts
from .builders.superpixel import build_superpixel_graph, slic
from .builders.texture import BoundaryError, ObjParseError, build_texture_graph, read_obj, texture_node_map
from .graph import GraphError, check_graph, normalized_adjacency, write_graph
from .layers import forward_conv, transfer_conv
from .model_io import (
    ImageFormatError,
    ModelFormatError,
    build_layers,
    load_model,
    normalize_input,
    read_image,
    write_image,
)
from .nets import random_kernel
from .pipeline import CellGrid, GraphNetwork, paint_cells

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ASSET = 0, 1, 2, 3
KINDS = ("grid", "panorama", "cubemap", "masked", "texture", "superpixel")
IMAGE_SUFFIXES = (".ppm", ".pgm")


class UsageError(Exception):
    pass


class AssetError(Exception):
    pass


def _positive(name: str, value):
    if value is None or value <= 0:
        raise UsageError(f"--{name} must be a positive number")
    return value


def _need(args, name: str):
    value = getattr(args, name)
    if value is None:
        raise UsageError(f"--kind {args.kind} needs --{name}")
    return value


def _load_image(path) -> np.ndarray:
    try:
        return read_image(path)
    except FileNotFoundError as exc:
        raise AssetError(f"cannot read image {path}: {exc.strerror}") from exc
    except ImageFormatError as exc:
        raise AssetError(f"{path}: {exc}") from exc


def _load_mesh(path):
    try:
        return read_obj(path)
    except FileNotFoundError as exc:
        raise AssetError(f"cannot read mesh {path}: {exc.strerror}") from exc
    except (ObjParseError, GraphError) as exc:
        raise AssetError(f"{path}: {exc}") from exc


class Domain:
    """A built graph plus how to move data between it and the input layout."""

    def __init__(self, graph, grid: CellGrid, features=None, writeback=None):
        self.graph = graph
        self.grid = grid
        self.features = features
        self.writeback = writeback  # same-resolution values -> (H, W, C)


def build_domain(args, image: np.ndarray | None = None) -> Domain:
    kind = args.kind
    if kind in ("grid", "panorama"):
        if image is not None:
            h, w = image.shape[:2]
        else:
            h, w = _positive("h", args.h), _positive("w", args.w)
        g = build_grid(h, w) if kind == "grid" else build_panorama(h, w)
        feats = None if image is None else image.reshape(h * w, -1)
        return Domain(g, CellGrid.for_image(h, w), feats, lambda x: x.reshape(h, w, -1))
    if kind == "cubemap":
        if image is not None:
            f = image.shape[0]
            if image.shape[1] != 6 * f:
                raise AssetError(f"cube map strip must be F x 6F pixels, got {image.shape[1]}x{image.shape[0]}")
            if args.face is not None and args.face != f:
                raise UsageError(f"--face {args.face} disagrees with the {f}-pixel strip height")
        else:
            f = _positive("face", args.face)
        g = build_cubemap(f)
        feats = None if image is None else strip_to_nodes(image, f)
        return Domain(g, CellGrid.for_image(f, 6 * f), feats, lambda x: nodes_to_strip(x, f))
    if kind == "masked":
        mask_img = _load_image(_need(args, "mask"))
        mask = mask_img.mean(axis=2) > 0.5
        if image is not None and image.shape[:2] != mask.shape:
            raise AssetError("mask and input image sizes differ")
        if not mask.any():
            raise AssetError("mask selects no pixels")
        g, node_of = masked_grid_parts(mask)
        h, w = mask.shape
        feats = None if image is None else image[mask]
        return Domain(g, CellGrid.for_image(h, w), feats, lambda x: _scatter(x, node_of))
    if kind == "texture":
        mesh = _load_mesh(_need(args, "obj"))
        if image is not None:
            tex = image.shape[0]
            if image.shape[1] != tex:
                raise AssetError("texture images must be square")
        else:
            tex = _positive("tex", args.tex)
        try:
            g = build_texture_graph(mesh, tex)
            node_of = texture_node_map(mesh, tex)
        except (BoundaryError, GraphError) as exc:
            raise AssetError(f"texture graph: {exc}") from exc
        feats = None if image is None else image[node_of >= 0]
        return Domain(g, CellGrid.for_image(tex, tex), feats, lambda x: _scatter(x, node_of))
    if kind == "superpixel":
        if image is None:
            image = _load_image(_need(args, "input"))
        k = _positive("superpixels", args.superpixels)
        comp = _positive("compactness", args.compactness)
        knn = _positive("knn", args.knn)
        sp = slic(image, k, comp)
        g = build_superpixel_graph(sp, knn)
        h, w = image.shape[:2]
        return Domain(g, CellGrid.for_image(h, w), sp.mean_features, sp.paint)
    raise UsageError(f"unknown kind {kind!r}")


def _scatter(x: np.ndarray, node_of: np.ndarray) -> np.ndarray:
    out = np.zeros(node_of.shape + (x.shape[1],), dtype=np.float32)
    out[node_of >= 0] = x
    return out


def _write_nodes(path, graph, values) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "x", "y"] + [f"c{i}" for i in range(values.shape[1])])
        for i, (p, v) in enumerate(zip(graph.positions, values)):
            writer.writerow([i, f"{p[0]:.6g}", f"{p[1]:.6g}"] + [f"{a:.9g}" for a in v])


def _write_output(path: Path, values, *, image=None, graph=None) -> None:
    if path.suffix.lower() in IMAGE_SUFFIXES:
        if image is None:
            raise UsageError(f"{path.name}: this output has no image layout; use a .csv path")
        if image.shape[2] not in (1, 3):
            raise UsageError(f"cannot write {image.shape[2]} channels to {path.name}; use a .csv path")
        if (path.suffix.lower() == ".pgm") != (image.shape[2] == 1):
            raise UsageError(f"{path.name}: .pgm holds 1 channel and .ppm holds 3")
        write_image(image, path)
    elif values.ndim == 1:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "value"])
            writer.writerows([i, f"{v:.9g}"] for i, v in enumerate(values))
    else:
        _write_nodes(path, graph, values)


# -- commands ------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    results = verify.run_suite(args.seed, args.trials, args.inject_fault)
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "ok  " if r.passed else "FAIL"
        extra = f"  {r.detail}" if r.detail else ""
        print(f"{mark} {r.name:<{width}}  max dev {r.deviation:.3e} (tol {r.tolerance:.0e}){extra}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if args.report:
        out = Path(args.report)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "verify.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["check", "max_abs_dev", "tolerance", "passed", "detail"])
            for r in results:
                writer.writerow([r.name, f"{r.deviation:.6e}", r.tolerance, int(r.passed), r.detail])
        from .plotting import plot_deviations

        plot_deviations([r.name for r in results], [r.deviation for r in results],
                        [r.tolerance for r in results], out / "verify.png")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_graph(args) -> int:
    image = _load_image(args.input) if args.kind == "superpixel" else None
    domain = build_domain(args, image)
    problems = check_graph(domain.graph)
    if problems:
        raise AssetError("built graph is inconsistent: " + "; ".join(problems[:3]))
    write_graph(domain.graph, args.out)
    g = domain.graph
    print(f"{args.kind}: {g.num_nodes} nodes, {g.num_edges} edges -> {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        manifest, tensors = load_model(args.model)
    except FileNotFoundError as exc:
        raise AssetError(str(exc)) from exc
    except ModelFormatError as exc:
        raise AssetError(f"{args.model}: {exc}") from exc
    layers = build_layers(manifest, tensors)
    image = _load_image(args.input)
    domain = build_domain(args, image)
    try:
        x = normalize_input(manifest, domain.features)
    except ValueError as exc:
        raise AssetError(str(exc)) from exc
    net = GraphNetwork(layers, domain.graph, domain.grid)
    try:
        y = net.run(x)
    except ValueError as exc:
        raise AssetError(f"model does not fit the input: {exc}") from exc
    out = Path(args.out)
    if net.flattens:
        _write_output(out, y)
    elif net.output_graph is domain.graph:
        _write_output(out, y, image=domain.writeback(y), graph=domain.graph)
    elif args.kind == "superpixel":
        _write_output(out, y, graph=net.output_graph)
    else:
        _write_output(out, y, image=paint_cells(y, net.output_graph, net.output_grid), graph=net.output_graph)
    print(f"{args.kind}: {domain.graph.num_nodes} nodes -> {out}")
    return EXIT_OK


BENCH_STAGES = ("graph_build", "adjacency_build", "forward_conv")


def bench_rows(sizes, repeats=3, channels=16, seed=0) -> list[dict]:
    rng = np.random.default_rng(seed)
    kernel = random_kernel(rng, channels, channels, 3)
    layer = transfer_conv(kernel)
    rows = []
    for n in sizes:
        times = {s: [] for s in BENCH_STAGES}
        x = rng.normal(size=(n * n, channels)).astype(np.float32)
        for _ in range(repeats):
            t0 = time.perf_counter()
            g = build_grid(n, n)
            t1 = time.perf_counter()
            adj = normalized_adjacency(g)
            t2 = time.perf_counter()
            forward_conv(layer, adj, x)
            t3 = time.perf_counter()
            times["graph_build"].append(t1 - t0)
            times["adjacency_build"].append(t2 - t1)
            times["forward_conv"].append(t3 - t2)
        nnz = sum(m.nnz for m in adj.mats)
        for stage in BENCH_STAGES:
            t = np.asarray(times[stage])
            rows.append({
                "stage": stage, "size": n, "nodes": g.num_nodes, "edges": g.num_edges, "nnz": nnz,
                "repeats": repeats, "median_s": float(np.median(t)), "min_s": float(t.min()),
                "max_s": float(t.max()), "std_s": float(t.std()),
            })
    return rows


def cmd_bench(args) -> int:
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--sizes must be comma-separated integers: {args.sizes!r}") from exc
    if not sizes or any(s < 2 for s in sizes):
        raise UsageError("--sizes needs grid sides of at least 2")
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    rows = bench_rows(sizes, args.repeats, args.channels, args.seed)
    fields = list(rows[0])
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    for r in rows:
        print(f"{r['stage']:<16} n={r['nodes']:<8} median {r['median_s'] * 1e3:9.3f} ms  std {r['std_s'] * 1e3:.3f} ms")
    if not args.no_plot:
        from .plotting import plot_bench

        plot_bench(rows, Path(args.out).with_suffix(".png"))
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _domain_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--mask", help="PGM/PPM mask image; bright pixels are kept")
    p.add_argument("--obj", help="OBJ mesh with UV coordinates")
    p.add_argument("--face", type=int, help="cube map face size in pixels")
    p.add_argument("--superpixels", type=int, default=64)
    p.add_argument("--compactness", type=float, default=10.0)
    p.add_argument("--knn", type=int, default=8)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="selconv", description="Selection-based graph convolution toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify", help="check graph convolution against the image-domain reference")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=5, help="random cases per configuration")
    p.add_argument("--report", metavar="DIR", help="write verify.csv and verify.png here")
    p.add_argument("--inject-fault", choices=verify.FAULTS, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("graph", help="build a graph and write its text dump")
    _domain_flags(p)
    p.add_argument("--h", type=int, help="grid/panorama height")
    p.add_argument("--w", type=int, help="grid/panorama width")
    p.add_argument("--tex", type=int, help="texture size in pixels")
    p.add_argument("--input", help="image to segment (superpixel kind)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("run", help="run a saved model on a graph built from an input")
    p.add_argument("--model", required=True)
    _domain_flags(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help=".ppm/.pgm for images, anything else for CSV")
    p.set_defaults(func=cmd_run, h=None, w=None, tex=None)

    p = sub.add_parser("bench", help="time graph build, adjacency build and convolution")
    p.add_argument("--sizes", default="32,64,128", help="comma-separated grid sides")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="CSV path; a PNG plot is written next to it")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def _thread_limit():
    raw = os.environ.get("SELCONV_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"SELCONV_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("SELCONV_THREADS must be a positive integer")
    return n


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        limit = _thread_limit()
        if limit is None:
            return args.func(args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=limit):
            return args.func(args)
    except UsageError as exc:
        print(f"selconv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssetError, ModelFormatError, ImageFormatError) as exc:
        print(f"selconv: {exc}", file=sys.stderr)
        return EXIT_ASSET
    except FileNotFoundError as exc:
        print(f"selconv: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_ASSET


if __name__ == "__main__":
    sys.exit(main())
