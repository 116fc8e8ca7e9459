"""Command-line entry point.

Verbs: ``robot validate``, ``workspace build``, ``spmap render``,
``qa generate``, ``eval score``.  Exit codes: 0 success, 1 validation or
contract failure (including usage errors), 2 I/O or environment failure.

Every option may also come from ``--config FILE`` (YAML or JSON mapping of
option names, dashes or underscores); command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from collections import defaultdict, deque
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import yaml

from . import workspace as ws
from .errors import ReachMapError
from .imageio import write_gray_png, write_rgb_png
from .kinematics import is_rigid, load_robot_model, rigidity_error
from .reachqa import (
    ALL_TEMPLATE_IDS,
    LabelPolicy,
    QAPair,
    generate_qa_pairs,
    object_reachability,
    score_responses,
)
from .scene import find_manifests, load_manifest
from .spmap import (
    LEAVE_UNTOUCHED,
    TREAT_AS_UNREACHABLE,
    RenderStyle,
    build_spmap,
    classify_pixels,
    semantic_image,
)

log = logging.getLogger("reachmap")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2

# Built-in defaults; argparse defaults stay None so config files can fill gaps.
DEFAULTS = {
    "strategy": "random",
    "samples": ws.DEFAULT_SAMPLES,
    "seed": 0,
    "resolution": ws.DEFAULT_RESOLUTION,
    "dilation": ws.DEFAULT_DILATION,
    "margin": None,
    "gray": "128,128,128",
    "alpha": 0.6,
    "boundary_color": "255,255,255",
    "thickness": 2,
    "invalid_policy": TREAT_AS_UNREACHABLE,
    "reach_threshold": 0.5,
    "min_valid": 0.2,
    "templates": ",".join(map(str, ALL_TEMPLATE_IDS)),
}


class UsageError(ReachMapError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: usage error: {message}\n")


def _int_list(text: str, n: int | None = None, what: str = "value") -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise UsageError(f"{what} needs {n} values, got {len(vals)}")
    return vals


def _resolve(args, config: dict):
    """Fill unset options from the config file, then from DEFAULTS."""
    allowed = set(vars(args)) - {"func", "config"}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in allowed:
            raise UsageError(f"config key {key!r} is not an option of this command")
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    for dest, value in DEFAULTS.items():
        if dest in allowed and getattr(args, dest) is None:
            setattr(args, dest, value)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: cannot parse config file: {exc}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config file must hold a mapping")
    return doc


def _write_text_atomic(path, text: str):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


# -- robot validate ----------------------------------------------------------------


def cmd_robot_validate(args) -> int:
    robot = load_robot_model(Path(args.robot_config).read_text())
    ortho, det = rigidity_error(robot.base_to_camera)
    print(f"robot: {robot.name}")
    print(f"dof: {robot.dof}")
    for i, j in enumerate(robot.joints):
        span = math.degrees(j.limits.max - j.limits.min)
        print(
            f"  joint {i}: limits [{j.limits.min:.6g}, {j.limits.max:.6g}] rad ({span:.1f} deg)"
            f"  dh(theta_offset={j.dh.theta_offset:.6g}, d={j.dh.d:.6g}, a={j.dh.a:.6g}, alpha={j.dh.alpha:.6g})"
        )
    print(f"extrinsics: rigid ({'ok' if is_rigid(robot.base_to_camera) else 'FAIL'}; "
          f"max|R^T R - I| = {float(ortho):.2e}, |det R - 1| = {float(det):.2e})")
    return EXIT_OK


# -- workspace build ---------------------------------------------------------------


def _grid_spec(args, robot) -> ws.GridSpec:
    res = float(args.resolution)
    if not res > 0:
        raise UsageError("--resolution must be positive")
    if (args.origin is None) != (args.dims is None):
        raise UsageError("--origin and --dims must be given together")
    if args.origin is not None:
        origin = [float(v) for v in (args.origin.split(",") if isinstance(args.origin, str) else args.origin)]
        dims = _int_list(args.dims if isinstance(args.dims, str) else ",".join(map(str, args.dims)), 3, "--dims")
        if len(origin) != 3:
            raise UsageError("--origin needs 3 values")
        return ws.GridSpec(tuple(origin), res, dims)
    margin = res if args.margin is None else float(args.margin)
    lower, upper = ws.reach_bounds(robot, margin)
    return ws.GridSpec.from_bounds(lower, upper, res)


def cmd_workspace_build(args) -> int:
    robot = load_robot_model(Path(args.robot).read_text())
    seed = int(args.seed)
    if args.strategy == "random":
        samples = int(args.samples)
        if samples < 1:
            raise UsageError("--samples must be >= 1")
        sampling = ws.SamplingSpec.random(samples, seed)
    elif args.strategy == "grid":
        if args.counts is None:
            raise UsageError("--strategy grid requires --counts")
        sampling = ws.SamplingSpec.grid(_int_list(args.counts, robot.dof, "--counts"))
    else:
        raise UsageError(f"unknown --strategy {args.strategy!r}")
    dilation = int(args.dilation)
    if not 0 <= dilation <= 255:
        raise UsageError("--dilation must be in [0, 255]")
    spec = _grid_spec(args, robot)
    grid = ws.build_workspace_grid(robot, sampling, spec, dilation, threads=args.threads)
    ws.save_grid(grid, args.out)
    log.info(
        "wrote %s: %dx%dx%d voxels at %.4g m, %d occupied, %d of %d samples out of bounds",
        args.out, *spec.dims, spec.resolution, grid.count, grid.meta.out_of_bounds, sampling.n_samples,
    )
    return EXIT_OK


# -- spmap render ------------------------------------------------------------------


def _color(text, what) -> tuple[int, int, int]:
    vals = _int_list(text if isinstance(text, str) else ",".join(map(str, text)), 3, what)
    if any(not 0 <= v <= 255 for v in vals):
        raise UsageError(f"{what} components must be in [0, 255]")
    return vals


def _style(args) -> RenderStyle:
    return RenderStyle(
        gray=_color(args.gray, "--gray"),
        alpha=float(args.alpha),
        boundary=_color(args.boundary_color, "--boundary-color"),
        thickness=int(args.thickness),
        invalid_policy=args.invalid_policy,
    )


def _scene_extrinsics(manifest, robot_path):
    if manifest.extrinsics is not None:
        return manifest.extrinsics
    if robot_path is None:
        raise UsageError(f"scene {manifest.scene_id} has no extrinsics override; pass --robot")
    robot = load_robot_model(Path(robot_path).read_text())
    if robot.name != manifest.robot:
        log.warning("scene %s names robot %r but --robot is %r", manifest.scene_id, manifest.robot, robot.name)
    return robot.base_to_camera


def cmd_spmap_render(args) -> int:
    style = _style(args)
    manifest = load_manifest(args.manifest)
    grid = ws.load_grid(args.grid)
    E = _scene_extrinsics(manifest, args.robot)
    spmap, rendered = build_spmap(
        manifest.load_rgb(), manifest.load_depth(), manifest.intrinsics, E, grid, style, manifest.robot
    )
    write_rgb_png(args.out_rendered, rendered)
    write_gray_png(args.out_semantic, semantic_image(spmap))
    counts = {k.name.lower(): v for k, v in spmap.counts().items()}
    log.info("scene %s: %s", manifest.scene_id, counts)
    return EXIT_OK


# -- qa generate ---------------------------------------------------------------------


def cmd_qa_generate(args) -> int:
    policy = LabelPolicy(float(args.reach_threshold), float(args.min_valid))
    tids = _int_list(args.templates, None, "--templates")
    seed = int(args.seed)
    grid = ws.load_grid(args.grid)
    manifests = [load_manifest(p) for p in find_manifests(args.manifest)]
    manifests.sort(key=lambda m: m.scene_id)
    ids = [m.scene_id for m in manifests]
    if len(set(ids)) != len(ids):
        raise UsageError("duplicate scene ids among manifests")

    def one(manifest):
        E = _scene_extrinsics(manifest, args.robot)
        spmap = classify_pixels(manifest.load_depth(), manifest.intrinsics, E, grid)
        objs = [(a, object_reachability(spmap, a, policy)) for a in manifest.load_annotations()]
        pairs = generate_qa_pairs(manifest.scene_id, objs, tids, seed)
        log.info("scene %s: %d objects, %d pairs", manifest.scene_id, len(objs), len(pairs))
        return pairs

    threads = ws.default_threads() if args.threads is None else int(args.threads)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_scene = list(pool.map(one, manifests))
    else:
        per_scene = [one(m) for m in manifests]
    lines = [p.to_json() for pairs in per_scene for p in pairs]
    _write_text_atomic(args.out, "".join(line + "\n" for line in lines))
    log.info("wrote %d pairs to %s", len(lines), args.out)
    return EXIT_OK


# -- eval score ------------------------------------------------------------------------


def _read_jsonl(path):
    rows = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise UsageError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
    return rows


def _key(d) -> tuple:
    return (str(d["scene_id"]), int(d["template_id"]), str(d["object"]))


def cmd_eval_score(args) -> int:
    pairs = [QAPair.from_json(json.dumps(r)) for r in _read_jsonl(args.pairs)]
    responses = _read_jsonl(args.responses)
    pending = defaultdict(deque)
    for r in responses:
        if "response" not in r:
            raise UsageError(f"response record without 'response': {r}")
        pending[_key(r)].append(str(r["response"]))
    aligned, missing = [], []
    for p in pairs:
        queue = pending.get(_key(vars(p)))
        if queue:
            aligned.append(queue.popleft())
        else:
            missing.append(_key(vars(p)))
    extra = [k for k, q in pending.items() for _ in q]
    if missing or extra:
        for k in missing:
            print(f"orphan pair without response: scene={k[0]} template={k[1]} object={k[2]}", file=sys.stderr)
        for k in extra:
            print(f"orphan response without pair: scene={k[0]} template={k[1]} object={k[2]}", file=sys.stderr)
        return EXIT_INVALID
    report = score_responses(pairs, aligned)
    print(f"pairs: {len(pairs)}")
    print(f"accuracy: {report.accuracy:.4f}")
    for tid, stats in sorted(report.per_template.items()):
        print(f"  template {tid}: {stats['correct']}/{stats['n']} ({stats['accuracy']:.4f})")
    if args.report:
        _write_text_atomic(args.report, json.dumps(report.to_dict(), indent=2) + "\n")
    return EXIT_OK


# -- wiring ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reachmap", description="Space-physical reachability maps and reachability QA.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def verb(group_name, verb_name, func, help_text):
        group = group_parsers.get(group_name)
        if group is None:
            gp = groups.add_parser(group_name)
            group = gp.add_subparsers(dest="verb", required=True, parser_class=_Parser)
            group_parsers[group_name] = group
        p = group.add_parser(verb_name, help=help_text)
        p.add_argument("--config", help="YAML/JSON file of option defaults; flags win")
        p.set_defaults(func=func)
        return p

    group_parsers: dict = {}

    p = verb("robot", "validate", cmd_robot_validate, "check a robot config")
    p.add_argument("robot_config")

    p = verb("workspace", "build", cmd_workspace_build, "sample FK and write an SPRM grid")
    p.add_argument("--robot", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=["random", "grid"])
    p.add_argument("--samples", type=int, help=f"random samples (default {ws.DEFAULT_SAMPLES})")
    p.add_argument("--counts", help="per-joint counts for the grid strategy, e.g. 100,100")
    p.add_argument("--seed", type=int)
    p.add_argument("--resolution", type=float, help=f"voxel edge in metres (default {ws.DEFAULT_RESOLUTION})")
    p.add_argument("--origin", help="grid minimum corner x,y,z (requires --dims)")
    p.add_argument("--dims", help="voxel counts nx,ny,nz (requires --origin)")
    p.add_argument("--margin", type=float, help="padding around the automatic reach box")
    p.add_argument("--dilation", type=int, help=f"Chebyshev dilation radius (default {ws.DEFAULT_DILATION})")
    p.add_argument("--threads", type=int, help=f"worker threads (default ${ws.THREADS_ENV} or 1)")

    p = verb("spmap", "render", cmd_spmap_render, "render an S-P Map for one scene")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--robot", help="robot config supplying extrinsics when the manifest has none")
    p.add_argument("--out-rendered", required=True)
    p.add_argument("--out-semantic", required=True)
    p.add_argument("--gray")
    p.add_argument("--alpha", type=float)
    p.add_argument("--boundary-color")
    p.add_argument("--thickness", type=int)
    p.add_argument("--invalid-policy", choices=[TREAT_AS_UNREACHABLE, LEAVE_UNTOUCHED])

    p = verb("qa", "generate", cmd_qa_generate, "label objects and write QA pairs as JSON lines")
    p.add_argument("--manifest", required=True, nargs="+", help="manifest files or directories of *.scene.json")
    p.add_argument("--grid", required=True)
    p.add_argument("--robot")
    p.add_argument("--out", required=True)
    p.add_argument("--reach-threshold", type=float)
    p.add_argument("--min-valid", type=float)
    p.add_argument("--templates", help="comma-separated template ids (default all)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)

    p = verb("eval", "score", cmd_eval_score, "score responses against QA pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--report", help="write the JSON score report here")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        _resolve(args, _load_config(args.config))
        return args.func(args)
    except (ReachMapError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
