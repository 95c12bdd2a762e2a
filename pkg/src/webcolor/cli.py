"""``webcolor`` command line: corpus generation, training, colorization, evaluation.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
``WEBCOLOR_SEED`` overrides ``--seed`` wherever a seed is accepted.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import baselines, corpus, metrics, render
from .checkpoint import CheckpointError
from .codec import QuantizedStyle, quantize_style, reconstruct_style
from .decoding import MID_BIN, diverse_select
from .models import PRESETS, ModelConfig
from .page import PageFormatError, PageTree, PageValidationError, write_page
from .training import NumericError, build_model, load_model, save_model, train
from .upsample import Upsampler

log = logging.getLogger("webcolor")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(args) -> int:
    env = os.environ.get("WEBCOLOR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"WEBCOLOR_SEED must be an integer, got {env!r}")
    return args.seed


def _write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _page_dir(path, split: str | None = None) -> list[PageTree]:
    """Pages from ``path``, or from ``path/<split>`` when it is a corpus root."""
    path = Path(path)
    if split and (path / split).is_dir():
        path = path / split
    if not path.is_dir():
        raise DataError(f"{path} is not a directory of pages")
    pages = corpus.read_pages(path)
    if not pages:
        raise DataError(f"no page files in {path}")
    return pages


def _need_styles(pages: Sequence[PageTree], where) -> None:
    bare = [p.id for p in pages if not p.has_styles]
    if bare:
        raise DataError(f"{where}: pages without color styles: {bare[:5]}")


def _full_styles(pages, quantized, upsampler: Upsampler | None):
    if upsampler is not None:
        return upsampler.apply(pages, quantized)
    return [[reconstruct_style(q, MID_BIN + MID_BIN) for q in qs] for qs in quantized]


def _load_upsampler(path) -> Upsampler | None:
    if path is None:
        return None
    model = load_model(path)
    if not isinstance(model, Upsampler):
        raise DataError(f"{path} holds a {model.kind!r} checkpoint, not an upsampler")
    return model


def _write_styled(out: Path, pages, styles, suffix: str = "") -> None:
    out.mkdir(parents=True, exist_ok=True)
    for page, st in zip(pages, styles):
        write_page(page.with_styles(st), out / f"{page.id}{suffix}.json")


# -- subcommands -----------------------------------------------------------

def cmd_gen_corpus(args) -> int:
    name, noise = corpus.parse_grammar(args.grammar)
    cfg = corpus.CorpusConfig(n_pages=args.pages, grammar=name, noise=noise, seed=_seed(args),
                              max_depth=args.max_depth, max_elements=args.max_elements,
                              min_size=args.min_size, max_size=args.max_size)
    pages = corpus.generate_corpus(cfg)
    ratios = [float(x) for x in args.split.split(",")]
    parts = corpus.split(pages, ratios, cfg.seed)
    names = ("train", "val", "test")[: len(parts)] if len(parts) <= 3 else [f"part{i}" for i in range(len(parts))]
    corpus.write_corpus(args.out, dict(zip(names, parts)), corpus.config_dict(cfg))
    print(f"wrote {len(pages)} pages to {args.out} ({', '.join(f'{n}={len(p)}' for n, p in zip(names, parts))})")
    return EXIT_OK


def _model_config(args) -> ModelConfig:
    base = dict(PRESETS[args.preset])
    for key in ("d_model", "n_heads", "n_layers", "d_ffn"):
        if getattr(args, key) is not None:
            base[key] = getattr(args, key)
    return ModelConfig(kind=args.model, message_passing=not args.no_mp, residual=not args.no_residual,
                       kl_weight=args.kl_weight, **base)


def cmd_train(args) -> int:
    pages = _page_dir(args.corpus, "train")
    _need_styles(pages, args.corpus)
    try:
        config = _model_config(args)
    except ValueError as e:
        raise UsageError(str(e))
    seed = _seed(args)
    model = build_model(config, seed)
    history = train(model, pages, args.iters, batch_size=args.batch, lr=args.lr, seed=seed,
                    callback=lambda s, v: log.info("step %d loss %.6f", s, v) if s % 50 == 0 else None)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_model(model, args.out, step=args.iters)
    if args.log:
        _write_json(args.log, {"loss": history})
    last = history[-1] if history else float("nan")
    print(f"trained {config.kind} for {args.iters} iterations, final loss {last:.6f}; saved {args.out}")
    return EXIT_OK


def _variations(model, pages, args, seed: int) -> list[list[list[QuantizedStyle]]]:
    """``K`` candidate stylings per page, indexed ``[variation][page][element]``."""
    kind = model.kind
    strategy = args.strategy
    if kind == "upsampler":
        raise DataError("generate needs a core model checkpoint, not an upsampler")
    if strategy == "prior" and kind != "cvae":
        raise UsageError("--strategy prior needs a cvae checkpoint")
    if kind == "cvae" and strategy not in ("prior", "greedy"):
        raise UsageError("cvae generation samples the prior; use --strategy prior")
    if strategy == "prior":
        strategy = "greedy"
    return [model.generate(pages, seed=seed + k, strategy=strategy, p=args.p) for k in range(args.variations)]


def cmd_generate(args) -> int:
    if not 1 <= args.select <= args.variations:
        raise UsageError(f"--select must be in 1..--variations ({args.variations})")
    model = load_model(args.ckpt)
    upsampler = _load_upsampler(args.upsampler)
    pages = _page_dir(args.pages, "test")
    seed = _seed(args)
    runs = _variations(model, pages, args, seed)
    out = Path(args.out)
    for i, page in enumerate(pages):
        cands = [run[i] for run in runs]
        chosen = diverse_select(cands, args.select, seed + i) if args.select < len(cands) else list(range(len(cands)))
        chosen = chosen[: args.select]
        for k, c in enumerate(chosen):
            styles = _full_styles([page], [cands[c]], upsampler)[0]
            suffix = "" if args.select == 1 else f".v{k}"
            _write_styled(out, [page], [styles], suffix)
    print(f"wrote {len(pages) * args.select} styled pages to {out}")
    return EXIT_OK


def cmd_upsample(args) -> int:
    upsampler = _load_upsampler(args.ckpt)
    pages = _page_dir(args.pages)
    _need_styles(pages, args.pages)
    quantized = [[quantize_style(s) for s in p.styles()] for p in pages]
    styles = upsampler.apply(pages, quantized)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for src, page, st in zip(sorted(Path(args.pages).glob("*.json")), pages, styles):
        write_page(page.with_styles(st), out / src.name)
    print(f"upsampled {len(pages)} pages into {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    if args.fit:
        pages = _page_dir(args.corpus, "train")
        _need_styles(pages, args.corpus)
        table = baselines.fit(pages)
        Path(args.table).parent.mkdir(parents=True, exist_ok=True)
        table.save(args.table)
        print(f"fitted frequency table on {len(pages)} pages; saved {args.table}")
        return EXIT_OK
    if args.out is None:
        raise UsageError("stats --mode/--sample needs --out")
    table = baselines.FrequencyTable.load(args.table)
    pages = _page_dir(args.pages, "test")
    method = "mode" if args.mode else "sampling"
    quantized = baselines.colorize(table, pages, method, _seed(args))
    _write_styled(Path(args.out), pages, _full_styles(pages, quantized, _load_upsampler(args.upsampler)))
    print(f"colorized {len(pages)} pages by {method}; wrote {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred = _page_dir(args.pred_dir)
    gt = _page_dir(args.gt_dir, "test")
    _need_styles(pred, args.pred_dir)
    _need_styles(gt, args.gt_dir)
    wanted = {"accuracy", "macro_f", "fcd", "contrast"} if args.metrics == "all" else set(args.metrics.split(","))
    unknown = wanted - {"accuracy", "macro_f", "fcd", "contrast"}
    if unknown:
        raise UsageError(f"unknown metrics: {sorted(unknown)}")
    report = metrics.evaluate(pred, gt, seed=_seed(args), fcd_scale=args.fcd_scale)
    report = {k: v for k, v in report.items() if k in wanted}
    text = metrics.report_json(report)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_render(args) -> int:
    src = Path(args.pages)
    files = sorted(src.glob("*.json"))
    if not files:
        raise DataError(f"no page files in {src}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pages = corpus.read_pages(src)
    _need_styles(pages, src)
    for f, page in zip(files, pages):
        render.write_png(out / f"{f.stem}.png", render.render_page(page))
    print(f"rendered {len(pages)} pages into {out}")
    return EXIT_OK


def cmd_audit(args) -> int:
    pages = _page_dir(args.pages)
    _need_styles(pages, args.pages)
    rep = metrics.aggregate_contrast(pages)
    doc = {
        "pages_violating_fraction": rep.pages_violating_fraction,
        "mean_violating_elements": rep.mean_violating_elements,
        "per_page": [{"id": p.id, "violations": [{"index": v.index, "ratio": v.ratio} for v in metrics.audit_page(p)]}
                     for p in pages],
    }
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps({k: doc[k] for k in ("pages_violating_fraction", "mean_violating_elements")}, sort_keys=True))
    return EXIT_OK


def build_parser() -> Parser:
    parser = Parser(prog="webcolor", description="Colorize tree-structured web pages.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True

    p = sub.add_parser("gen-corpus", help="generate a synthetic page corpus")
    p.add_argument("--pages", type=int, default=200)
    p.add_argument("--grammar", default="tag_deterministic",
                   help="tag_deterministic | parent_conditional | noisy:<p>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="0.8,0.1,0.1", help="train,val,test ratios")
    p.add_argument("--max-depth", type=int, default=30)
    p.add_argument("--max-elements", type=int, default=200)
    p.add_argument("--min-size", type=int, default=corpus.CorpusConfig.min_size)
    p.add_argument("--max-size", type=int, default=corpus.CorpusConfig.max_size)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="train a core model or the upsampler")
    p.add_argument("--model", choices=("ar", "nar", "cvae", "upsampler"), required=True)
    p.add_argument("--corpus", required=True, help="corpus root (uses its train/ split) or page directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--preset", choices=sorted(PRESETS), default="full")
    p.add_argument("--d-model", type=int)
    p.add_argument("--n-heads", type=int)
    p.add_argument("--n-layers", type=int)
    p.add_argument("--d-ffn", type=int)
    p.add_argument("--kl-weight", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-mp", action="store_true", help="disable hierarchical message passing")
    p.add_argument("--no-residual", action="store_true", help="drop the content residual connection")
    p.add_argument("--log", help="write the loss history as JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="colorize pages with a trained core model")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pages", required=True, help="corpus root (uses test/) or page directory")
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=("greedy", "top-p", "prior"), default="greedy")
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--variations", type=int, default=1)
    p.add_argument("--select", type=int, default=1)
    p.add_argument("--upsampler", help="upsampler checkpoint; mid-bin colors otherwise")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("upsample", help="restore full-resolution colors of styled pages")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pages", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("stats", help="statistics baselines")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--fit", action="store_true", help="fit a frequency table on --corpus")
    mode.add_argument("--mode", action="store_true", help="colorize by mode selection")
    mode.add_argument("--sample", action="store_true", help="colorize by frequency-weighted sampling")
    p.add_argument("--corpus", help="training pages for --fit")
    p.add_argument("--table", required=True, help="frequency table JSON")
    p.add_argument("--pages", help="pages to colorize")
    p.add_argument("--out")
    p.add_argument("--upsampler")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--metrics", default="all", help="all, or a comma list of accuracy,macro_f,fcd,contrast")
    p.add_argument("--fcd-scale", type=float, default=1.0, help="multiply FCD values, e.g. 1e-3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render styled pages to PNG previews")
    p.add_argument("--pages", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("audit", help="WCAG contrast audit")
    p.add_argument("--pages", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_audit)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "stats" and args.fit and not args.corpus:
            raise UsageError("stats --fit needs --corpus")
        if args.command == "stats" and not args.fit and not args.pages:
            raise UsageError("stats --mode/--sample needs --pages")
        return args.func(args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, PageFormatError, PageValidationError, CheckpointError, FileNotFoundError,
            IsADirectoryError, json.JSONDecodeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
