"""``sfrecon`` command line: dataset generation, training, reconstruction, benchmarks.

Every command writes its fully resolved configuration as JSON next to its
primary output (``<output>.config.json``).  Passing that file back through
``--config`` reproduces the run.  Exit status is 0 on success, 2 for invalid
arguments or inputs and 1 for runtime failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import benchmark as bm
from . import fields as fs
from . import gp
from . import npmodel as npm
from .checkpoint import load_checkpoint
from .dataset import DatasetConfig, gen_dataset, read_dataset
from .errors import InvalidInputError
from .pgm import render_heatmap
from .training import TrainConfig, predict_field, train

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def parse_freqs(text):
    """``"150,307,500"`` or an inclusive range ``"30:10:500"`` (start:step:stop)."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, step, stop = (float(t) for t in text.split(":"))
            if step <= 0:
                raise InvalidInputError("frequency step must be positive")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(n)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse frequencies {text!r}") from exc


def _int_list(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise InvalidInputError(f"expected a comma-separated integer list, got {text!r}") from exc


def write_config(out_path, command, args, resolved):
    """Write ``<out_path>.config.json`` holding the CLI arguments and resolved settings."""
    path = Path(str(out_path) + ".config.json")
    cli_args = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
                if k not in ("func", "config", "command")}
    doc = {"command": command, "args": cli_args, "resolved": resolved}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- commands

def cmd_gen(args):
    freqs = parse_freqs(args.freqs)
    if not freqs or min(freqs) <= 0:
        raise InvalidInputError("frequencies must be positive")
    if args.count < 1:
        raise InvalidInputError("--count must be at least 1")
    cfg = DatasetConfig(family=fs.Family.parse(args.family).label, count=args.count, freqs=freqs,
                        seed=args.seed, region=args.region, t60=args.t60)
    gen_dataset(cfg, args.out)
    write_config(args.out, "gen", args, cfg.to_dict())
    print(f"wrote {cfg.count} {cfg.family} fields x {len(freqs)} frequencies to {args.out}")


def _model_config(args):
    base = npm.DESK_CONFIG if args.desk else npm.NPConfig()
    d = base.to_dict()
    for key in ("embed_dim", "latent_dim", "heads", "sa_blocks", "decoder_width", "decoder_layers"):
        val = getattr(args, key)
        if val is not None:
            d[key] = val
    d["freq_as_feature"] = bool(args.freq_as_feature)
    return npm.NPConfig.from_dict(d)


def cmd_train(args):
    ds = read_dataset(args.data)
    model = _model_config(args)
    if model.embed_dim % model.heads or model.latent_dim < 1:
        raise InvalidInputError("embedding width must be divisible by the head count")
    cfg = TrainConfig(epochs=args.epochs, base_lr=args.lr, decayed_lr=args.decayed_lr,
                      warmup=args.warmup, decay_epoch=args.decay_epoch, batch_size=args.batch_size,
                      ctx_range=(args.ctx_min, args.ctx_max), extra_range=(args.extra_min, args.extra_max),
                      fixed_ctx=args.fixed_ctx, visits_per_epoch=args.visits,
                      checkpoint_every=args.checkpoint_every, model=model)
    if cfg.epochs < 1 or cfg.batch_size < 1 or not 1 <= cfg.ctx_range[0] <= cfg.ctx_range[1]:
        raise InvalidInputError("epochs, batch size and context range must be positive and ordered")
    log = args.log or str(args.out) + ".log.jsonl"
    params = npm.init_params(model, 0)
    print(f"model parameters: {npm.param_count(params)}")
    train(ds, cfg, seed=args.seed, checkpoint_path=args.out, log_path=log)
    write_config(args.out, "train", args, {**cfg.to_dict(), "seed": args.seed, "log": log})
    print(f"checkpoint written to {args.out}; log at {log}")


def cmd_reconstruct(args):
    if (args.kernel is None) == (args.checkpoint is None):
        raise InvalidInputError("pass exactly one of --kernel or --checkpoint")
    ds = read_dataset(args.data)
    if not 0 <= args.field < ds.count:
        raise InvalidInputError(f"--field must lie in [0, {ds.count})")
    j = ds.freq_index(args.field, args.freq)
    field = ds.field(args.field, j)
    obs = fs.sample_observations(field, args.n_obs, args.obs_seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shape = (field.grid.nx, field.grid.ny)
    mask = np.zeros(field.grid.size, dtype=bool)
    mask[obs.indices] = True
    mask = mask.reshape(shape)
    truth = field.magnitudes
    render_heatmap(truth, out / "truth.pgm")
    render_heatmap(mask.astype(float), out / "mask.pgm")
    if args.kernel is not None:
        method = args.kernel if args.kernel.startswith("gp-") else "gp-" + args.kernel
        if method not in bm.GP_METHODS:
            raise InvalidInputError(f"unknown kernel {args.kernel!r}; choose from {', '.join(gp.FAMILIES)}")
        pred = bm.reconstruct(method, field, obs, restarts=args.restarts, seed=args.obs_seed).reshape(shape)
    else:
        params, cfg, _ = load_checkpoint(args.checkpoint)
        mags = truth.ravel()
        mean, std = float(mags.mean()), float(mags.std())
        pred, amap = predict_field(obs.locations, (mags[obs.indices] - mean) / std, field.grid,
                                   (params, cfg), stats=(mean, std), freq_hz=field.freq_hz)
        lines = ["target,context,grid_index,weight"]
        for t in range(amap.weights.shape[0]):
            for c in range(amap.weights.shape[1]):
                lines.append(f"{t},{c},{int(obs.indices[c])},{float(amap.weights[t, c])!r}")
        (out / "attention.csv").write_text("\n".join(lines) + "\n")
        for c in range(amap.weights.shape[1]):
            render_heatmap(amap.weights[:, c].reshape(shape), out / f"attention_ctx{c:02d}.pgm", mask=mask)
    render_heatmap(pred, out / "prediction.pgm", mask=mask)
    rows = ["grid_index,truth,prediction"]
    rows += [f"{i},{float(t)!r},{float(p)!r}" for i, (t, p) in enumerate(zip(truth.ravel(), pred.ravel()))]
    (out / "prediction.csv").write_text("\n".join(rows) + "\n")
    write_config(out / "prediction.csv", "reconstruct", args,
                 {"freq_hz": field.freq_hz, "observation_indices": [int(i) for i in obs.indices]})
    print(f"artifacts written to {out}")


def cmd_bench(args):
    ds = read_dataset(args.data)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    field_ids = None
    if args.fields is not None:
        field_ids = list(range(args.fields)) if args.fields <= ds.count else None
        if field_ids is None:
            raise InvalidInputError(f"--fields {args.fields} exceeds the {ds.count} fields in the dataset")
    cfg = bm.BenchConfig(methods=methods, obs_counts=_int_list(args.obs_counts), seed=args.seed,
                         freqs=parse_freqs(args.freqs) if args.freqs else None, field_ids=field_ids,
                         nmse_variant=args.nmse_variant, restarts=args.restarts,
                         gp_scaling=args.gp_scaling, np_stats=args.np_stats)
    model = None
    if "np" in methods:
        if args.checkpoint is None:
            raise InvalidInputError("method np needs --checkpoint")
        params, mcfg, _ = load_checkpoint(args.checkpoint)
        model = (params, mcfg)
    rows, reports = bm.benchmark(ds, cfg, model=model)
    out = Path(args.out)
    out.write_text(bm.rows_csv(rows))
    summary = Path(args.summary) if args.summary else out.with_name(out.stem + "_summary.csv")
    summary.write_text(bm.summary_csv(reports))
    write_config(out, "bench", args, {**cfg.to_dict(), "summary": str(summary)})
    for r in reports:
        flag = "" if r.complete else f"  (incomplete: {r.failures} failed)"
        print(f"{r.method:>14} {r.freq_hz:7.1f} Hz n={r.n_obs:<3} NMSE {r.nmse_db:8.3f} dB  MAC {r.mac:.4f}{flag}")


# ------------------------------------------------------------------ parser

def build_parser():
    p = argparse.ArgumentParser(prog="sfrecon", description="Sound-field magnitude reconstruction toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a simulated dataset (SFD1)")
    g.add_argument("--family", required=True, choices=["diffuse", "nearfield", "ism", "mt"])
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--freqs", default="30:10:500", help="comma list or start:step:stop (Hz)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--region", type=float, default=2.0, help="side of the free-field region in metres")
    g.add_argument("--t60", type=float, default=0.4, help="reverberation time for room families (s)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the neural process")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path (NPC1)")
    t.add_argument("--log", help="JSON-lines log path (default <out>.log.jsonl)")
    t.add_argument("--epochs", type=int, default=300)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--decayed-lr", type=float, default=1e-5)
    t.add_argument("--warmup", type=int, default=20)
    t.add_argument("--decay-epoch", type=int, default=200)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--ctx-min", type=int, default=3)
    t.add_argument("--ctx-max", type=int, default=50)
    t.add_argument("--extra-min", type=int, default=32)
    t.add_argument("--extra-max", type=int, default=256)
    t.add_argument("--fixed-ctx", type=int, help="train with a single context size")
    t.add_argument("--visits", type=int, default=1, help="visits per field and epoch")
    t.add_argument("--checkpoint-every", type=int, default=0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--desk", action="store_true", help="small model dimensions for CPU runs")
    for name in ("embed-dim", "latent-dim", "heads", "sa-blocks", "decoder-width", "decoder-layers"):
        t.add_argument(f"--{name}", type=int)
    t.add_argument("--freq-as-feature", action="store_true")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("reconstruct", help="reconstruct one field and export heatmaps")
    r.add_argument("--data", required=True)
    r.add_argument("--field", type=int, default=0)
    r.add_argument("--freq", type=float, required=True)
    r.add_argument("--n-obs", type=int, default=10)
    r.add_argument("--obs-seed", type=int, default=0)
    r.add_argument("--kernel", help=f"GP kernel: {', '.join(gp.FAMILIES)}")
    r.add_argument("--checkpoint", help="NP checkpoint (NPC1)")
    r.add_argument("--restarts", type=int, default=8)
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_reconstruct)

    b = sub.add_parser("bench", help="benchmark methods and write CSV reports")
    b.add_argument("--data", required=True)
    b.add_argument("--methods", default="mean-baseline,gp-bessel", help=f"comma list from {', '.join(bm.METHODS)}")
    b.add_argument("--obs-counts", default="10")
    b.add_argument("--freqs", help="subset of dataset frequencies")
    b.add_argument("--fields", type=int, help="use the first N fields")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--checkpoint")
    b.add_argument("--nmse-variant", choices=["point", "vector"], default="point")
    b.add_argument("--restarts", type=int, default=8)
    b.add_argument("--gp-scaling", choices=["observations", "none"], default="observations")
    b.add_argument("--np-stats", choices=["field", "observations"], default="field",
                   help="statistics used to standardize the NP context")
    b.add_argument("--out", required=True)
    b.add_argument("--summary")
    b.set_defaults(func=cmd_bench)

    for sp in (g, t, r, b):
        sp.add_argument("--config", help="JSON file of option values; explicit flags take precedence")
    return p


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Parse ``argv`` with option defaults taken from ``--config`` when given.

    Values from the file replace the parser defaults (and satisfy required
    options); flags on the command line still take precedence.
    """
    path = _config_path(argv)
    if path is None or not argv or argv[0].startswith("-"):
        return parser.parse_args(argv)
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    values = doc.get("args", doc)
    sub = parser._subparsers._group_actions[0].choices.get(argv[0])
    if sub is None:
        return parser.parse_args(argv)
    for action in sub._actions:
        key = action.dest
        if key in ("help", "config") or key not in values:
            continue
        action.default = values[key]
        action.required = False
    return parser.parse_args(argv)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (InvalidInputError, ValueError) as exc:
        print(f"sfrecon: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"sfrecon: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
