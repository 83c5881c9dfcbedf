"""Command-line entrypoints: dataset-gen, train, edit, evaluate, serve.

Exit codes: 0 success, 1 runtime failure (message on stderr), 2 usage
errors (argparse prints usage).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import checkpoint as ckpt_io
from . import data, metrics, pngio
from .conditioning import extract_sketch
from .config import load_train_config, train_config_from_dict
from .sampling import EditRequest, Pipeline, blended_sample
from .service import EditService, serve_forever


def _cmd_dataset_gen(args) -> int:
    data.build_dataset(args.n, args.out, seed=args.seed)
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .training import fit  # deferred: torch import is slow

    cfg = load_train_config(args.config) if args.config else train_config_from_dict({})
    dataset = data.load_dataset(args.data_dir)

    def progress(report):
        if report.step % 100 == 0 or report.step + 1 == cfg.steps:
            print(
                f"step {report.step}: l_cldm={report.l_cldm:.4f} "
                f"l_pix={report.l_pix:.4f} total={report.total:.4f}",
                flush=True,
            )

    ckpt = fit(dataset, cfg, log_path=args.loss_log, progress=progress)
    ckpt_io.save(ckpt, args.out)
    print(f"saved checkpoint to {args.out}")
    return 0


def _cmd_edit(args) -> int:
    pipe = Pipeline.from_checkpoint(ckpt_io.load(args.ckpt))
    source = pngio.load_image(args.image)
    mask = pngio.load_mask(args.mask)
    sketch = pngio.load_image(args.sketch) if args.sketch else extract_sketch(source)
    req = EditRequest(
        source=source,
        mask=mask,
        user_sketch=sketch,
        prompt=args.prompt,
        steps=args.steps if args.steps is not None else pipe.sched.T,
        seed=args.seed,
        latent_mask_sampling=not args.no_latent_mask,
    )
    result = blended_sample(pipe, req)
    pngio.save_image(args.out, result)
    print(f"wrote {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    pipe = Pipeline.from_checkpoint(ckpt_io.load(args.ckpt))
    report, per_image = metrics.evaluate_manifest(
        args.manifest_dir, pipe.proxy, pipe.vocab, pipe.text_table()
    )
    doc = report.as_dict()
    doc["per_image_pre_error"] = per_image
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    service = EditService(ckpt_io.load(args.ckpt), ui_dir=args.ui_dir)
    serve_forever(service, args.host, args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchedit",
        description="Sketch+text+mask local image editing with a small latent diffusion model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset-gen", help="generate the synthetic garment dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_dataset_gen)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("data_dir")
    p.add_argument("--config", help="JSON config file (defaults apply per key)")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--loss-log", help="append per-step loss lines to this file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("edit", help="run one edit request")
    p.add_argument("ckpt")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--sketch", help="defaults to the edge map of --image")
    p.add_argument("--prompt", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, help="defaults to the schedule's T")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--no-latent-mask",
        action="store_true",
        help="disable latent-mask blending (pure conditional generation)",
    )
    p.set_defaults(func=_cmd_edit)

    p = sub.add_parser("evaluate", help="score an edit manifest directory")
    p.add_argument("manifest_dir")
    p.add_argument("ckpt")
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP edit service")
    p.add_argument("ckpt")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--ui-dir", help="serve this directory on non-API paths")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
