"""Command-line interface.

Subcommands: synth, ingest, fit, sweep, modes, predict, regime-map.

Run settings come from built-in defaults, then an optional ``--config``
file of ``key = value`` lines, then command-line flags (flags win).

Exit codes:
    0  success
    1  other package error
    2  validation error (bad config, flags or shapes)
    3  ingestion error (manifest or image problems)
    4  numerical error
    5  I/O error (unreadable/unwritable files, bad model files)
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .classify import CLASSIFIERS, load_model, save_model
from .dataset import CLASS_TOKENS, PatternDataset, load_dataset, load_images, read_image, save_dataset
from .errors import (
    EigenpatternError,
    IngestionError,
    ModelFileError,
    NumericalError,
    ValidationError,
)
from .linalg import cumulative_energy, economy_svd, normalized_singular_values, randomized_svd
from .metrics import accumulate, compute_metrics, format_table, reports_to_csv, reports_to_json
from .pipeline import (
    RunConfig,
    feature_matrix,
    render_mode,
    run_fit,
    run_sweep,
    sweep_to_csv,
)

EXIT_OK, EXIT_OTHER, EXIT_VALIDATION, EXIT_INGESTION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4, 5
THREADS_ENV = "EIGENPATTERN_THREADS"

_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


# --- configuration ------------------------------------------------------------


def parse_ranks(text: str) -> tuple[int, ...]:
    """``"1-10"``, ``"1-15:2"`` or ``"1,2,5"`` -> tuple of ranks."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        step = 1
        if ":" in part:
            part, s = part.split(":")
            step = int(s)
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-"))
            out.extend(range(lo, hi + 1, step))
        else:
            out.append(int(part))
    if not out:
        raise ValidationError(f"empty rank range {text!r}")
    return tuple(out)


def _coerce(key, raw):
    if key in ("variant", "classifier"):
        return raw
    if key == "classifiers":
        return tuple(c.strip() for c in str(raw).split(",") if c.strip())
    if key == "ranks":
        return parse_ranks(raw)
    if key in ("balance", "normalize", "stratify"):
        if isinstance(raw, bool):
            return raw
        low = str(raw).strip().lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ValidationError(f"{key}: expected a boolean, got {raw!r}")
    if key == "train_fraction":
        return float(raw)
    if key == "per_class" and str(raw).strip().lower() in ("", "none"):
        return None
    return int(raw)


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes in keys are allowed."""
    known = set(RunConfig.field_names())
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "target_rank_k":
            key = "target_rank"
        if key not in known:
            raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, val)
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def build_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for key in RunConfig.field_names():
        val = getattr(args, key, None)
        if val is not None:
            values[key] = _coerce(key, val)
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    return cfg.validate()


def _add_run_flags(p, sweep=False):
    g = p.add_argument_group("run settings")
    g.add_argument("--config", help="flat key = value config file")
    g.add_argument("--variant", choices=("plain", "fft"))
    g.add_argument("--target-rank", dest="target_rank", type=int, help="rSVD target rank k")
    g.add_argument("--rank", type=int, help="truncation rank r")
    if sweep:
        g.add_argument("--ranks", help="truncation ranks, e.g. 1-10 or 1,2,5")
        g.add_argument("--classifiers", help="comma-separated subset of " + ",".join(CLASSIFIERS))
    g.add_argument("--classifier", choices=CLASSIFIERS)
    g.add_argument("--neighbors", type=int)
    g.add_argument("--max-depth", dest="max_depth", type=int)
    g.add_argument("--min-leaf", dest="min_leaf", type=int)
    g.add_argument("--balance", dest="balance", action="store_const", const=True)
    g.add_argument("--no-balance", dest="balance", action="store_const", const=False)
    g.add_argument("--per-class", dest="per_class", type=int)
    g.add_argument("--normalize", dest="normalize", action="store_const", const=True)
    g.add_argument("--no-normalize", dest="normalize", action="store_const", const=False)
    g.add_argument("--stratify", dest="stratify", action="store_const", const=True)
    g.add_argument("--train-fraction", dest="train_fraction", type=float)
    g.add_argument("--cycles", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--oversampling", type=int)
    g.add_argument("--power-iterations", dest="power_iterations", type=int)


def _add_data_flags(p, labels_required=True):
    p.add_argument("--manifest", required=labels_required, help="CSV manifest of images")
    p.add_argument("--data-dir", help="image directory (default: the manifest's directory)")


def _data_dir(args):
    return Path(args.data_dir) if args.data_dir else Path(args.manifest).parent


def _load_labeled(args) -> PatternDataset:
    return load_dataset(_data_dir(args), args.manifest)


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _sibling(path, suffix):
    path = Path(path)
    return path.with_name(path.stem + suffix)


# --- commands -----------------------------------------------------------------


def cmd_synth(args):
    from .synth import gen_dataset, gen_grid_dataset

    if args.grid:
        ds = gen_grid_dataset(per_cell=args.per_cell, side=args.side, seed=args.seed, noise=args.noise)
    else:
        ds = gen_dataset(args.per_class, args.side, args.seed, noise=args.noise)
    manifest = save_dataset(ds, args.out)
    print(f"wrote {len(ds)} images and {manifest}")
    return EXIT_OK


def cmd_ingest(args):
    ds = load_images(_data_dir(args), args.manifest, require_labels=False)
    counts = ds.label_counts
    unlabeled = int(np.sum(ds.labels < 0))
    print(f"images: {len(ds)}  side: {ds.side} px  data matrix: {ds.side ** 2} x {len(ds)}")
    print("labels: " + "  ".join(f"{t}={c}" for t, c in zip(CLASS_TOKENS, counts)) + f"  unlabeled={unlabeled}")
    if args.spectrum:
        use_fft = args.variant == "fft"
        x = feature_matrix(ds, use_fft)
        if args.target_rank:
            sigma = randomized_svd(x, min(args.target_rank, *x.shape), seed=args.seed or 0).sigma
        else:
            sigma = economy_svd(x).sigma
        ns, ce = normalized_singular_values(sigma), cumulative_energy(sigma)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("mode", "sigma", "normalized", "cumulative_energy_pct"))
        for k, (s, n, c) in enumerate(zip(sigma, ns, ce), start=1):
            w.writerow((k, repr(float(s)), repr(float(n)), repr(float(c))))
        out = _write_text(args.spectrum, buf.getvalue())
        from .plotting import plot_spectrum

        plot_spectrum(sigma, _sibling(out, ".png"))
        print(f"first mode holds {ns[0] * 100:.1f} % of the singular-value sum; wrote {out}")
    return EXIT_OK


def _report_text(fmt, result, config):
    confusion = [c.confusion for c in result.cycles]
    if fmt == "json":
        return reports_to_json(result.reports, result.aggregate, confusion, extra={"config": config.as_dict()})
    return reports_to_csv(result.reports, result.aggregate)


def cmd_fit(args):
    config = build_config(args)
    ds = _load_labeled(args)
    result = run_fit(ds, config)
    save_model(result.model, args.model)
    fmt = args.format or "csv"
    report_path = Path(args.report) if args.report else _sibling(args.model, f".report.{fmt}")
    _write_text(report_path, _report_text(fmt, result, config))
    from .plotting import plot_confusion

    total = result.cycles[0].confusion
    for c in result.cycles[1:]:
        total = total + c.confusion
    plot_confusion(total, _sibling(report_path, ".confusion.png"), title=f"{config.cycles} cycle(s), summed")
    agg = result.aggregate
    print(f"test error over {config.cycles} cycle(s): {agg.mean_error:.2f} % +- {agg.std_error:.2f} %")
    print(format_table(result.reports[0]))
    print(f"model -> {args.model}\nreport -> {report_path}")
    return EXIT_OK


def cmd_sweep(args):
    config = build_config(args)
    if not config.ranks:
        config.ranks = tuple(range(1, min(10, config.target_rank) + 1))
        config.validate()
    ds = _load_labeled(args)
    rows = run_sweep(ds, config)
    out = _write_text(args.out, sweep_to_csv(rows))
    from .plotting import plot_sweep

    plot_sweep(rows, _sibling(out, ".error.png"), metric="error")
    plot_sweep(rows, _sibling(out, ".recallB.png"), metric="recall_B")
    best = min(rows, key=lambda r: r.mean_error)
    print(f"{len(rows)} rows -> {out}; best: {best.classifier} at r={best.r} with {best.mean_error:.2f} % error")
    return EXIT_OK


def cmd_modes(args):
    use_fft = (args.variant or "fft") == "fft"
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.model:
        model = load_model(args.model)
        basis, use_fft, side = model.basis, model.use_fft, model.side
    else:
        ds = load_images(_data_dir(args), args.manifest, require_labels=False)
        x = feature_matrix(ds, use_fft)
        k = min(args.target_rank or 50, *x.shape)
        fac = randomized_svd(x, max(k, min(args.count, *x.shape)), seed=args.seed or 0)
        basis, side = fac.u, ds.side
    count = min(args.count, basis.shape[1])
    from .dataset import write_image
    from .plotting import plot_mode_grid

    pictures = []
    for k in range(count):
        pic = render_mode(basis[:, k], side, use_fft)
        write_image(out_dir / f"mode_{k + 1:02d}.png", pic)
        pictures.append(pic)
    plot_mode_grid(pictures, out_dir / "modes_overview.png")
    print(f"wrote {count} {'FFT ' if use_fft else ''}mode images to {out_dir}")
    return EXIT_OK


def _prediction_inputs(args):
    if args.manifest:
        return load_images(_data_dir(args), args.manifest, require_labels=False)
    if not args.images_dir:
        raise ValidationError("give --manifest or --images-dir")
    files = sorted(p for p in Path(args.images_dir).iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise IngestionError(f"no .png images in {args.images_dir}")
    from .dataset import LabeledImage

    return PatternDataset.from_images(LabeledImage(read_image(f), None, name=f.name) for f in files)


def cmd_predict(args):
    model = load_model(args.model)
    ds = _prediction_inputs(args)
    pred = model.predict_many(ds.pixels)
    labeled = ds.is_labeled
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("file", "predicted_class") + (("label",) if labeled else ()))
    for name, p, lab in zip(ds.names, pred, ds.labels):
        w.writerow((name, CLASS_TOKENS[p]) + ((CLASS_TOKENS[lab],) if labeled else ()))
    out = _write_text(args.out, buf.getvalue())
    print(f"{len(ds)} predictions -> {out}")
    if labeled:
        cm = accumulate(ds.labels, pred)
        print("confusion (rows truth A,B,C; columns prediction A,B,C):")
        for row in cm.to_rows():
            print("  " + " ".join(f"{v:7d}" for v in row))
        try:
            report = compute_metrics(cm)
            print(format_table(report))
        except NumericalError as exc:
            report = None
            print(f"metrics unavailable: {exc}")
        if args.report:
            text = reports_to_json([report] if report else [], confusion=[cm]) if (args.format == "json") \
                else (reports_to_csv([report]) if report else "")
            rp = _write_text(args.report, text)
            from .plotting import plot_confusion

            plot_confusion(cm, _sibling(rp, ".confusion.png"))
    return EXIT_OK


def cmd_regime_map(args):
    from .regime import build_regime_map, export_regime_map

    model = load_model(args.model)
    ds = load_images(_data_dir(args), args.manifest, require_labels=False)
    keep = [k for k, m in enumerate(ds.meta)
            if (args.experiment is None or m.experiment == args.experiment)
            and (args.raster is None or m.raster_frequency == args.raster)]
    if not keep:
        raise ValidationError("no images match the experiment/raster filter")
    ds = ds.subset(keep)
    rasters = sorted({m.raster_frequency for m in ds.meta})
    if len(rasters) > 1:
        raise ValidationError(f"images span raster frequencies {rasters}; choose one with --raster")
    pred = model.predict_many(ds.pixels)
    rmap = build_regime_map(zip(ds.meta, pred))
    formats = [f.strip() for f in (args.format or "csv,svg").split(",") if f.strip()]
    written = [export_regime_map(rmap, Path(args.out).with_suffix("." + f), f) for f in formats]
    for which in ("lower", "upper"):
        pts = rmap.border_polyline(which)
        print(f"{which} border: " + (", ".join(f"{v:g}:{t:g}" for v, t in pts) or "none"))
    print("wrote " + ", ".join(str(p) for p in written))
    return EXIT_OK


# --- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eigenpattern", description="Eigenpattern classification of printed pattern images.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset (PNG + manifest)")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", dest="per_class", type=int, default=100)
    p.add_argument("--grid", action="store_true", help="fill the 7 x 20 velocity/tonal grid instead")
    p.add_argument("--per-cell", dest="per_cell", type=int, default=2)
    p.add_argument("--side", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="check a dataset and optionally write its singular-value spectrum")
    _add_data_flags(p)
    p.add_argument("--variant", choices=("plain", "fft"), default="fft")
    p.add_argument("--target-rank", dest="target_rank", type=int, help="use rSVD with this rank instead of a full SVD")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spectrum", help="CSV output for normalized singular values and cumulative energy")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="train and evaluate over several random splits; save the model")
    _add_data_flags(p)
    _add_run_flags(p)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--report", help="metrics report path (default: next to the model)")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="test error over a range of truncation ranks for several classifiers")
    _add_data_flags(p)
    _add_run_flags(p, sweep=True)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--format", choices=("csv",))
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("modes", help="write the leading modes as grayscale images")
    _add_data_flags(p, labels_required=False)
    p.add_argument("--model", help="take the basis from a trained model instead of the data")
    p.add_argument("--variant", choices=("plain", "fft"))
    p.add_argument("--target-rank", dest="target_rank", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int, default=12)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("predict", help="classify images with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest")
    p.add_argument("--data-dir")
    p.add_argument("--images-dir", dest="images_dir")
    p.add_argument("--out", required=True, help="output CSV of file,predicted_class")
    p.add_argument("--report", help="metrics report when the inputs carry labels")
    p.add_argument("--format", choices=("csv", "json"))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("regime-map", help="majority-class map over velocity x tonal value")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--experiment")
    p.add_argument("--raster", type=float, help="raster frequency filter in lines/cm")
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--format", help="comma-separated: csv, svg, png (default csv,svg)")
    p.set_defaults(func=cmd_regime_map)
    return parser


def _origin(exc) -> str:
    """Name of the innermost package module the exception came from."""
    name = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("eigenpattern."):
            name = mod.split(".", 1)[1]
    return name


def exit_code_for(exc) -> int:
    if isinstance(exc, ModelFileError):
        return EXIT_IO
    if isinstance(exc, IngestionError):
        return EXIT_INGESTION
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_OTHER


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(raw)))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit():
            return args.func(args)
    except (EigenpatternError, OSError) as exc:
        print(f"eigenpattern: error [{_origin(exc)}]: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
