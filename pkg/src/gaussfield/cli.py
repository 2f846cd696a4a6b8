"""Command-line entry point: train, render, eval, edit, animate, composite,
and serve.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Every command is
deterministic given --seed. The config file is a JSON document mirroring the
model configuration fields; explicit flags override file values.
"""

from __future__ import annotations

import argparse
import json
import math
import socket
import sys
from pathlib import Path

from . import fileio
from .core import GaussFieldError, ModelConfig
from .edit import apply_transform, replay_animation, select, composite_over
from .field import bake, init_model, psnr, render, train
from .service import SessionState, canonical_eval_psnr, create_app

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _load_config(path: str | None, iters: int | None, seed: int | None) -> ModelConfig:
    values = {}
    if path is not None:
        values = json.loads(Path(path).read_text())
    cfg = ModelConfig.from_dict(values)
    overrides = {}
    if iters is not None:
        overrides["iterations"] = iters
    if seed is not None:
        overrides["rng_seed"] = seed
    return cfg.with_overrides(**overrides) if overrides else cfg


def _fmt_psnr(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.4f}"


def _cmd_train(args) -> int:
    image = fileio.load_image(args.image)
    cfg = _load_config(args.config, args.iters, args.seed)
    model = init_model(image, cfg)

    def progress(entry):
        print(
            f"iter {entry['iteration']:>6}  loss {entry['loss']:.6f}  "
            f"psnr {_fmt_psnr(entry['psnr'])}",
            flush=True,
        )

    train(model, image, progress_callback=progress)
    bake(model)
    fileio.save_checkpoint(model, args.out)
    canonical = fileio.load_checkpoint(args.out)
    print(f"PSNR: {_fmt_psnr(canonical_eval_psnr(canonical, image))} dB")
    return 0


def _parse_region(text: str | None):
    if text is None:
        return None
    parts = text.split(",")
    if len(parts) != 4:
        raise GaussFieldError(f"region must be x0,y0,x1,y1, got {text!r}")
    return tuple(int(p) for p in parts)


def _cmd_render(args) -> int:
    model = fileio.load_checkpoint(args.model)
    buf = render(model, args.width, args.height, _parse_region(args.region))
    fileio.save_image(buf, args.out)
    return 0


def _cmd_eval(args) -> int:
    model = fileio.load_checkpoint(args.model)
    image = fileio.load_image(args.image)
    value = canonical_eval_psnr(model, image)
    print(f"PSNR: {_fmt_psnr(value)} dB")
    return 0


def _cmd_edit(args) -> int:
    model = fileio.load_checkpoint(args.model)
    ops = fileio.parse_edit_script(Path(args.script).read_text())
    for sel, transform in ops:
        ids = select(model.gaussians, sel)
        model = apply_transform(model, ids, transform)
    fileio.save_checkpoint(model, args.out)
    return 0


def _cmd_animate(args) -> int:
    model = fileio.load_checkpoint(args.model)
    manifest = fileio.parse_animation_manifest(args.manifest)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for k, frame in replay_animation(model, manifest):
        fileio.save_image(frame, outdir / f"frame_{k:04d}.png")
    return 0


def _cmd_composite(args) -> int:
    fg = fileio.load_image(args.fg)
    bg = fileio.load_image(args.bg)
    fileio.save_image(composite_over(fg, bg), args.out)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    # Fail fast (and with our runtime exit code) if the port is taken.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    finally:
        probe.close()

    state = SessionState()
    if args.model is not None:
        state.model = fileio.load_checkpoint(args.model)
        state.version = 1
    app = create_app(state, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="gaussfield", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model to a PNG and save a baked checkpoint")
    p.add_argument("--image", required=True)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("render", help="render a checkpoint to a PNG")
    p.add_argument("--model", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--region", default=None, help="x0,y0,x1,y1 pixel rect")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("eval", help="print the PSNR of a checkpoint against a PNG")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("edit", help="apply an edit script to a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--script", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("animate", help="render every frame of a position manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=_cmd_animate)

    p = sub.add_parser("composite", help="alpha-blend an RGBA PNG over an RGB PNG")
    p.add_argument("--fg", required=True)
    p.add_argument("--bg", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_composite)

    p = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    p.add_argument("--model", default=None)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", default=None, help="directory with the static UI bundle")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GaussFieldError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_EXIT


if __name__ == "__main__":
    sys.exit(main())
