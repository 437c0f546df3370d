"""Command-line entry point for the full pipeline.

Subcommands: synth, nsim, triplets, train, score, eval-mos, eval-rank,
feature-loss. Exit codes: 0 success, 1 input/usage error, 2 internal error.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import degrade, evaluate, score as scoring, train as training, triplets as tri
from .audio_core import CANONICAL_RATE, load_wav, resample
from .errors import NomadError
from .net import EncoderConfig, load_checkpoint, save_checkpoint
from .nsim import utterance_nsim

log = logging.getLogger("nomadlite")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._fail(message))

    def _fail(self, message):
        print(f"error: {message}", file=sys.stderr)
        return 1


def _load_config_file(path: str) -> dict:
    """Flat key=value overrides; keys use the flag spelling without dashes."""
    overrides = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise NomadError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value.strip()
    return overrides


def build_parser() -> _Parser:
    parser = _Parser(prog="nomadlite", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed (default 0)")
    parser.add_argument("--config", help="key=value config file; flags still win")
    parser.add_argument("--quiet", action="store_true", help="suppress the config echo and info logs")
    sub = parser.add_subparsers(dest="command", required=True)
    parser._sub_choices = sub.choices  # kept for config-file default injection

    p = sub.add_parser("synth", help="synthesize the degraded dataset and manifest")
    p.add_argument("--clean-dir", required=True, help="directory of clean mono 16-bit WAVs")
    p.add_argument("--out", required=True, help="output directory (WAVs + manifest.csv)")
    p.add_argument("--families", default=",".join(degrade.DEFAULT_FAMILIES),
                   help=f"comma list from {sorted(degrade.LEVEL_TABLES)} "
                        f"(default {','.join(degrade.DEFAULT_FAMILIES)})")
    p.add_argument("--noise-kind", choices=["white", "pink"], default="white")
    p.add_argument("--external-codec-cmd",
                   help="command template with {in} {out} {kbps} for the external_codec family")
    p.add_argument("--jobs", type=int, default=1, help="parallel sources (default 1)")

    p = sub.add_parser("nsim", help="print the utterance NSIM of two files")
    p.add_argument("--ref", required=True)
    p.add_argument("--deg", required=True)

    p = sub.add_parser("triplets", help="sample triplets from a manifest and split by source")
    p.add_argument("--manifest", required=True)
    p.add_argument("--count", type=int, default=8000, help="triplets to draw (default 8000)")
    p.add_argument("--s", type=float, default=0.05, help="easy-negative margin (default 0.05)")
    p.add_argument("--mix", type=float, default=0.5, help="fraction of easy triplets (default 0.5)")
    p.add_argument("--split", type=float, default=0.8, help="train fraction by source (default 0.8)")
    p.add_argument("--out", required=True, help="output directory for triplets_{train,val}.csv")

    p = sub.add_parser("train", help="train the embedding network on triplet files")
    p.add_argument("--triplets", required=True, help="training triplet CSV")
    p.add_argument("--val", required=True, help="validation triplet CSV")
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--out", required=True, help="checkpoint path (report CSV written alongside)")

    p = sub.add_parser("score", help="score degraded clips against references")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--input-dir", required=True, help="directory of clips to score")
    p.add_argument("--pool-dir", required=True,
                   help="clean references; in fr mode must hold <source>__clean.wav counterparts")
    p.add_argument("--mode", choices=["nmr", "fr"], default="nmr")
    p.add_argument("--out", required=True, help="output score CSV")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("eval-mos", help="correlate scores with MOS per condition")
    p.add_argument("--scores", required=True)
    p.add_argument("--mos", required=True)
    p.add_argument("--out", help="optional per-condition CSV")

    p = sub.add_parser("eval-rank", help="per-family Spearman of score vs degradation level")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="optional CSV")

    p = sub.add_parser("feature-loss", help="deep feature L1 loss between clean and estimate")
    p.add_argument("--model", required=True)
    p.add_argument("--clean", required=True)
    p.add_argument("--estimate", required=True)

    return parser


def _echo_config(args) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    log.info("resolved config: %s", resolved)


def _cmd_synth(args) -> int:
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    unknown = [f for f in families if f not in degrade.LEVEL_TABLES]
    if unknown:
        raise NomadError(f"unknown families: {unknown}")
    rows = degrade.synth_dataset(
        args.clean_dir, args.out, seed=args.seed, families=families,
        noise_kind=args.noise_kind, external_codec_cmd=args.external_codec_cmd,
        jobs=args.jobs,
    )
    log.info("wrote %d manifest rows to %s", len(rows), Path(args.out) / "manifest.csv")
    return 0


def _cmd_nsim(args) -> int:
    ref = resample(load_wav(args.ref), CANONICAL_RATE)
    deg = resample(load_wav(args.deg), CANONICAL_RATE)
    print(f"{utterance_nsim(ref, deg):.6f}")
    return 0


def _cmd_triplets(args) -> int:
    manifest = degrade.read_manifest(args.manifest)
    sets = tri.build_sample_sets(manifest)
    cfg = tri.SamplerConfig(s=args.s, strategy_mix=args.mix, rng_seed=args.seed)
    records = tri.generate_triplets(sets, cfg, args.count)
    train_recs, val_recs = tri.split_by_source(records, args.split, rng_seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tri.write_triplets(train_recs, out / "triplets_train.csv")
    tri.write_triplets(val_recs, out / "triplets_val.csv")
    log.info("wrote %d train / %d val triplets to %s", len(train_recs), len(val_recs), out)
    return 0


def _cmd_train(args) -> int:
    cfg = training.TrainConfig(
        margin=args.margin, batch_size=args.batch, lr=args.lr,
        patience=args.patience, max_epochs=args.max_epochs, seed=args.seed,
    )
    train_recs = tri.read_triplets(args.triplets)
    val_recs = tri.read_triplets(args.val)
    model, report = training.fit(train_recs, val_recs, cfg,
                                 encoder_cfg=EncoderConfig(init_seed=args.seed))
    save_checkpoint(model, args.out)
    report.write_csv(str(args.out) + ".report.csv")
    log.info("best val loss %.6f at epoch %d (initial %.6f), %.1fs",
             report.best_val_loss, report.best_epoch, report.initial_val_loss,
             report.wall_time_s)
    return 0


def _source_id_of(path: Path) -> str:
    return path.stem.split("__")[0]


def _cmd_score(args) -> int:
    model = load_checkpoint(args.model)
    clips = sorted(Path(args.input_dir).glob("*.wav"))
    if not clips:
        raise NomadError(f"no WAV files in {args.input_dir}")
    pool_dir = Path(args.pool_dir)

    def canonical(p):
        return resample(load_wav(p), CANONICAL_RATE)

    rows = []
    if args.mode == "nmr":
        refs = sorted(pool_dir.glob("*.wav"))
        if not refs:
            raise NomadError(f"no WAV files in {pool_dir}")
        pool = scoring.ReferencePool([canonical(r) for r in refs], pool_id=pool_dir.name)

        def score_one(clip):
            return scoring.ScoreRow(str(clip), scoring.pooled_score(model, canonical(clip), pool),
                                    "nmr", pool.pool_id)
    else:
        def score_one(clip):
            ref_path = pool_dir / degrade.clean_name(_source_id_of(clip))
            if not ref_path.exists():
                raise NomadError(f"no clean counterpart {ref_path} for {clip}")
            value = scoring.full_reference_score(model, canonical(clip), canonical(ref_path))
            return scoring.ScoreRow(str(clip), value, "fr", str(ref_path))

    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(score_one, clips))
    else:
        rows = [score_one(c) for c in clips]
    scoring.write_scores(rows, args.out)
    log.info("wrote %d scores to %s", len(rows), args.out)
    return 0


def _cmd_eval_mos(args) -> int:
    report = evaluate.aggregate_per_condition(
        scoring.read_scores(args.scores), evaluate.read_mos(args.mos)
    )
    print(f"conditions: {report.n_conditions}  PC: {report.pc:+.4f}  SC: {report.sc:+.4f}")
    print("condition_id,mean_score,mean_mos")
    for row in report.per_condition:
        print(f"{row.condition_id},{row.mean_score:.6f},{row.mean_mos:.6f}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            f.write("condition_id,mean_score,mean_mos\n")
            for row in report.per_condition:
                f.write(f"{row.condition_id},{row.mean_score:.12f},{row.mean_mos:.12f}\n")
    return 0


def _cmd_eval_rank(args) -> int:
    result = evaluate.monotonicity_report(
        scoring.read_scores(args.scores), degrade.read_manifest(args.manifest)
    )
    print("family,spearman")
    lines = []
    for family, sc in result.items():
        text = "undefined" if sc is None else f"{sc:+.4f}"
        print(f"{family},{text}")
        lines.append(f"{family},{text}\n")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as f:
            f.write("family,spearman\n")
            f.writelines(lines)
    return 0


def _cmd_feature_loss(args) -> int:
    model = load_checkpoint(args.model)
    clean = resample(load_wav(args.clean), CANONICAL_RATE)
    estimate = resample(load_wav(args.estimate), CANONICAL_RATE)
    loss, _grad = scoring.feature_loss(model, clean, estimate)
    print(f"{loss:.6f}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "nsim": _cmd_nsim,
    "triplets": _cmd_triplets,
    "train": _cmd_train,
    "score": _cmd_score,
    "eval-mos": _cmd_eval_mos,
    "eval-rank": _cmd_eval_rank,
    "feature-loss": _cmd_feature_loss,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        # apply config-file values as defaults before the real parse
        if "--config" in argv:
            cfg_path = argv[argv.index("--config") + 1]
            overrides = _load_config_file(cfg_path)

            def apply_defaults(p):
                conv = {}
                for action in p._actions:
                    if action.dest in overrides:
                        raw = overrides[action.dest]
                        conv[action.dest] = action.type(raw) if action.type else raw
                p.set_defaults(**conv)

            apply_defaults(parser)
            for subparser in parser._sub_choices.values():
                apply_defaults(subparser)
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except (NomadError, IndexError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if not args.quiet:
        _echo_config(args)
    try:
        return _COMMANDS[args.command](args)
    except (NomadError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - internal failure
        log.exception("internal error: %s", e)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
