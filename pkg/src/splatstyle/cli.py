"""Command-line interface.

Every subcommand reads a scene (3DGS PLY), a COLMAP text model and, where
needed, a style PNG, and writes its outputs atomically into ``--out``.
Failures print one line, ``error: <Kind>: <message>``, and exit nonzero.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, dump_config, load_config
from .errors import SplatStyleError
from .features import FeatureExtractor
from .grouping import camera_centers, group_views
from .io import load_colmap, load_descriptor, load_ply, load_png, save_ply, save_png
from .io.atomic import write_text
from .metrics import Descriptor, evaluate
from .pipeline import ABLATION_VARIANTS, StylizationRun, dataset_update, finetune, render_views, run_ablation

log = logging.getLogger("splatstyle")

EXIT_ERROR = 1
EXIT_USAGE = 2


class UsageError(Exception):
    kind = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.replace(run={"seed": args.seed})
    if args.threads is not None:
        cfg = cfg.replace(rasterizer={"threads": args.threads})
    if getattr(args, "n_views", None) is not None:
        cfg = cfg.replace(grouping={"n_views": args.n_views})
    if getattr(args, "iterations", None) is not None:
        cfg = cfg.replace(finetune={"iterations": args.iterations})
    return cfg


def _run(args, cfg: PipelineConfig) -> StylizationRun:
    scene = load_ply(args.scene, background=cfg.run.background)
    cameras, _ = load_colmap(args.cameras)
    style = load_png(args.style) if getattr(args, "style", None) else None
    return StylizationRun(scene, cameras, style, cfg)


def _names(args) -> list[str]:
    return load_colmap(args.cameras)[1]


def _save_images(out: Path, names, images) -> None:
    for name, img in zip(names, images):
        save_png(out / Path(name).with_suffix(".png").name, img)


def _groups_text(groups) -> str:
    return "".join(f"group {g}: {' '.join(map(str, grp.view_indices))}\n" for g, grp in enumerate(groups))


def cmd_render(args, cfg):
    run = _run(args, cfg)
    out = Path(args.out)
    _save_images(out, _names(args), render_views(run.scene, run.cameras, cfg))
    log.info("rendered %d views to %s", len(run.cameras), out)


def cmd_group_views(args, cfg):
    cameras, names = load_colmap(args.cameras)
    groups = group_views(cameras, cfg.grouping.n_views)
    centers = camera_centers(cameras)
    lines = [f"{'group':>5}  {'view':>5}  {'name':<24} center"]
    for g, grp in enumerate(groups):
        for v in grp.view_indices:
            c = centers[v]
            lines.append(f"{g:>5}  {v:>5}  {names[v]:<24} {c[0]:.4f} {c[1]:.4f} {c[2]:.4f}")
    print("\n".join(lines))
    log.info("%d views in %d groups (N=%d)", len(cameras), len(groups), cfg.grouping.n_views)
    if args.out:
        write_text(args.out, _groups_text(groups))


def cmd_stylize(args, cfg):
    run = _run(args, cfg)
    dataset_update(run)
    out = Path(args.out)
    _save_images(out, _names(args), run.targets)
    write_text(out / "groups.txt", _groups_text(run.groups))
    for g, grp in enumerate(run.groups):
        log.info("group %d: views %s", g, list(grp.view_indices))
    log.info("wrote %d targets in %d groups to %s", len(run.targets), len(run.groups), out)


def _finetune(args, cfg):
    run = _run(args, cfg)
    names = _names(args)
    if args.targets:
        run.targets = [load_png(Path(args.targets) / Path(n).with_suffix(".png").name) for n in names]
    else:
        dataset_update(run)
    result = finetune(run)
    out = Path(args.out)
    save_ply(result.scene, out / "scene.ply")
    write_text(out / "losses.txt", "".join(f"{i} {v!r}\n" for i, v in enumerate(result.losses)))
    _save_images(out / "renders", names, render_views(result.scene, run.cameras, cfg))
    if result.losses:
        log.info("loss %.6f -> %.6f over %d iterations", result.losses[0], result.losses[-1], len(result.losses))


def cmd_finetune(args, cfg):
    _finetune(args, cfg)


def cmd_train_scratch(args, cfg):
    _finetune(args, cfg.replace(ablation={"from_scratch": True}))


def cmd_ablate(args, cfg):
    run = _run(args, cfg)
    n_values = tuple(int(v) for v in args.n_values.split(","))
    out = Path(args.out)
    for res in run_ablation(run, args.variant, n_values):
        sub = out / res.name.replace("=", "_")
        save_ply(res.scene, sub / "scene.ply")
        write_text(sub / "report.txt", "".join(f"{k} = {v}\n" for k, v in res.report.items()))
        log.info("%s: %s", res.name, ", ".join(f"{k}={v}" for k, v in res.report.items()))


def _frames(directory) -> list[Path]:
    files = sorted(Path(directory).glob("*.png"))
    if not files:
        raise UsageError(f"no PNG frames in {directory}")
    return files


def _descs(directory, frames):
    if directory is None:
        return None
    return [Descriptor(load_descriptor(Path(directory) / (f.stem + ".feat")), "imported") for f in frames]


def cmd_metrics(args, cfg):
    orig_files, styl_files = _frames(args.original), _frames(args.stylized)
    originals = [load_png(f) for f in orig_files]
    stylized = [load_png(f) for f in styl_files]
    style = load_png(args.style) if args.style else None
    style_desc = Descriptor(load_descriptor(args.style_desc), "imported") if args.style_desc else None
    if style is None and style_desc is None:
        raise UsageError("metrics needs --style or --style-desc")
    ext = FeatureExtractor(cfg.losses.extractor_seed)
    report = evaluate(originals, stylized, style, ext, style_desc,
                      _descs(args.original_desc, orig_files), _descs(args.stylized_desc, styl_files))
    values = report.as_dict()
    width = max(map(len, values))
    print("\n".join(f"{k:<{width}}  {v}" for k, v in values.items()))
    if args.out:
        write_text(args.out, "".join(f"{k} = {v}\n" for k, v in values.items()))


def cmd_fixture(args, cfg):
    from .fixture import write_fixture

    log.info("fixture written to %s", write_fixture(args.out))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splatstyle", description="Stylize a 3D Gaussian Splatting scene from one style image.")
    parser.add_argument("--config", help="INI config file (see --dump-config)")
    parser.add_argument("--seed", type=int, help="override [run] seed")
    parser.add_argument("--threads", type=int, help="rasterizer worker threads (tiles are split across them)")
    parser.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def scene_args(p, style=True):
        p.add_argument("--scene", required=True, help="3DGS PLY file")
        p.add_argument("--cameras", required=True, help="COLMAP text model directory")
        if style:
            p.add_argument("--style", required=True, help="style image (PNG)")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("render", help="render every camera to PNG")
    scene_args(p, style=False)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("group-views", help="partition cameras into neighboring-view groups")
    p.add_argument("--cameras", required=True)
    p.add_argument("--n-views", type=int)
    p.add_argument("--out", help="also write the partition to this file")
    p.set_defaults(func=cmd_group_views)

    p = sub.add_parser("stylize", help="dataset update: render, group and stylize every view")
    scene_args(p)
    p.add_argument("--n-views", type=int)
    p.set_defaults(func=cmd_stylize)

    for name, func, text in (("finetune", cmd_finetune, "finetune the scene on stylized targets"),
                             ("train-scratch", cmd_train_scratch, "fit a freshly initialized scene")):
        p = sub.add_parser(name, help=text)
        scene_args(p)
        p.add_argument("--targets", help="directory of stylized targets (default: run stylize first)")
        p.add_argument("--iterations", type=int)
        p.add_argument("--n-views", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", help="run one ablation variant and score it")
    scene_args(p)
    p.add_argument("--variant", choices=ABLATION_VARIANTS, default="full")
    p.add_argument("--n-values", default="2,4,8", help="group sizes for the n_sweep variant")
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("metrics", help="CFSD, CSD and CLIP-DC over two frame directories")
    p.add_argument("original", help="directory of original frames (PNG, sorted by name)")
    p.add_argument("stylized", help="directory of stylized frames")
    p.add_argument("--style", help="style image (PNG)")
    p.add_argument("--style-desc", help="imported style descriptor file")
    p.add_argument("--original-desc", help="directory of <frame>.feat descriptors for the originals")
    p.add_argument("--stylized-desc", help="directory of <frame>.feat descriptors for the stylized frames")
    p.add_argument("--out", help="key = value report file")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("fixture", help="write the synthetic demo scene")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = _config(args)
        if args.dump_config:
            print(dump_config(cfg), end="")
            return 0
        if args.command is None:
            raise UsageError("a subcommand is required")
        args.func(args, cfg)
        return 0
    except UsageError as exc:
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SplatStyleError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
