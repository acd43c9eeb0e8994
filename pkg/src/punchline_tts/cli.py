"""Command-line front door.

Every subcommand is a thin wrapper over the library; ``serve`` starts the
HTTP service, and ``synthesize --server`` talks to a running instance
instead of loading the checkpoint locally. Failures exit nonzero with a
one-line machine-readable error record on stderr.
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys

import numpy as np

from .audio import AudioConfig, write_wav
from .corpus import (
    StatisticsConfig,
    compute_statistics,
    format_statistics_table,
    load_alignment,
    load_manifest,
    validate_clip_lengths,
    write_statistics_report,
)
from .errors import InputError, PunchlineError
from .fixture import build_fixture_corpus
from .frontend import FillerRegistry, build_symbol_table, mandarin_inventory
from .melio import export_mel_text, read_mel
from .model.config import desk_profile, load_loss_weights, load_run_config
from .plotting import plot_durations
from .synthesis import (
    DurationTrace,
    SynthesisRequest,
    compare_durations,
    pick_reference,
    synthesize,
    write_synthesis_outputs,
)
from .training import (
    TrainSchedule,
    check_split_disjoint,
    finetune,
    load_checkpoint,
    load_training_corpus,
    train,
)


def _load_registry(corpus_dir: str) -> FillerRegistry:
    path = os.path.join(corpus_dir, "registry.tsv")
    if os.path.exists(path):
        return FillerRegistry.load(path)
    return FillerRegistry.empty()


def _corpus_tracks(corpus_dir: str, records):
    alignments, pitch, energy = {}, {}, {}
    for record in records:
        u = record.utterance_id
        alignments[u] = load_alignment(
            os.path.join(corpus_dir, "alignments", f"{u}.lab")
        )
        with open(os.path.join(corpus_dir, "pitch", f"{u}.txt")) as fh:
            pitch[u] = np.asarray([float(x) for x in fh if x.strip()])
        with open(os.path.join(corpus_dir, "energy", f"{u}.txt")) as fh:
            energy[u] = np.asarray([float(x) for x in fh if x.strip()])
    return alignments, pitch, energy


def _schedule_from_args(args) -> TrainSchedule:
    return TrainSchedule(
        steps=args.steps,
        batch_size=args.batch_size,
        seed=args.seed,
        lr_factor=args.lr_factor,
        warmup_steps=args.warmup,
        validation_interval=args.val_interval,
        checkpoint_interval=args.checkpoint_interval,
    )


def cmd_train(args) -> int:
    registry = _load_registry(args.corpus)
    weights = None
    if args.config:
        config = load_run_config(args.config)
        weights = load_loss_weights(args.config)
    else:
        config = desk_profile()
    table = build_symbol_table(
        mandarin_inventory(), registry if config.use_special_tokens else FillerRegistry.empty()
    )
    utterances, _ = load_training_corpus(
        args.corpus, table, registry, use_special_tokens=config.use_special_tokens
    )
    val_utterances = None
    if args.val_manifest:
        train_records = load_manifest(os.path.join(args.corpus, "manifest.tsv"))
        val_records = load_manifest(args.val_manifest)
        check_split_disjoint(train_records, val_records)
        val_utterances, _ = load_training_corpus(
            args.corpus, table, registry,
            use_special_tokens=config.use_special_tokens, records=val_records,
        )
    result = train(
        utterances, table, config, _schedule_from_args(args), args.out,
        val_utterances=val_utterances, weights=weights,
    )
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"loss log:   {result.log_path}")
    if result.loss_log:
        print(f"final total loss: {result.final_total:.4f}")
    return 0


def cmd_finetune(args) -> int:
    registry = _load_registry(args.corpus)
    base = load_checkpoint(args.checkpoint)
    config = base.model.config
    table = build_symbol_table(
        mandarin_inventory(), registry if config.use_special_tokens else FillerRegistry.empty()
    )
    if not table.is_superset_of(base.symbol_table):
        table = base.symbol_table
    utterances, _ = load_training_corpus(
        args.corpus, table, registry, use_special_tokens=config.use_special_tokens
    )
    result = finetune(
        base, utterances, _schedule_from_args(args), args.out, symbol_table=table
    )
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"loss log:   {result.log_path}")
    return 0


def _phonemes_from_arg(text: str) -> list[str]:
    if text.startswith("@"):
        with open(text[1:], encoding="utf-8") as fh:
            return fh.read().split()
    return text.split()


def cmd_synthesize(args) -> int:
    phonemes = _phonemes_from_arg(args.phonemes)
    stem = args.name or "synthesis"

    if args.server:
        import httpx

        payload = {
            "phonemes": phonemes,
            "speaker_id": args.speaker,
            "reference_clip_id": args.reference,
            "seed": args.seed,
            "return_waveform": args.wav,
            "name": args.name,
        }
        response = httpx.post(f"{args.server}/synthesize", json=payload, timeout=300.0)
        if response.status_code != 200:
            raise InputError(f"server error {response.status_code}: {response.text}")
        body = response.json()
        os.makedirs(args.out, exist_ok=True)
        raw = base64.b64decode(body["mel_base64"])
        mel_path = os.path.join(args.out, f"{stem}.mel")
        with open(mel_path, "wb") as fh:
            fh.write(raw)
        trace = DurationTrace(
            name=body.get("reference_clip_id") or args.speaker,
            segments=[(s["label"], s["start"], s["frames"]) for s in body["trace"]],
        )
        trace.save(os.path.join(args.out, f"{stem}.trace.json"))
        if body.get("waveform_base64"):
            pcm = np.frombuffer(
                base64.b64decode(body["waveform_base64"]), dtype="<i2"
            )
            write_wav(
                os.path.join(args.out, f"{stem}.wav"),
                pcm.astype(np.float64) / 32767.0,
                AudioConfig(sample_rate=body["sample_rate"]),
            )
        print(f"mel: {mel_path} ({body['frames']} frames)")
        return 0

    checkpoint = load_checkpoint(args.checkpoint)
    reference_mel = None
    clip_id = args.reference
    if checkpoint.model.config.use_prosody_encoder:
        if not args.corpus:
            raise InputError(
                "a corpus directory is required to resolve the reference clip"
            )
        records = load_manifest(os.path.join(args.corpus, "manifest.tsv"))
        if clip_id is None:
            clip_id = pick_reference(records, args.speaker, args.seed).utterance_id
        elif not any(r.utterance_id == clip_id for r in records):
            raise InputError(f"reference clip {clip_id!r} not in the manifest")
        reference_mel = read_mel(os.path.join(args.corpus, "mels", f"{clip_id}.mel"))

    result = synthesize(
        checkpoint,
        SynthesisRequest(
            phonemes=phonemes,
            speaker_id=args.speaker,
            reference_clip_id=clip_id,
            seed=args.seed,
            name=args.name or args.speaker,
            return_waveform=args.wav,
        ),
        reference_mel=reference_mel,
    )
    paths = write_synthesis_outputs(result, args.out, stem)
    if args.mel_text:
        text_path = os.path.join(args.out, f"{stem}.mel.txt")
        export_mel_text(text_path, result.mel)
        paths["mel_text"] = text_path
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def cmd_plot_durations(args) -> int:
    traces = [DurationTrace.load(path) for path in args.traces]
    plot_durations(traces, args.out)
    print(f"plot: {args.out}")
    return 0


def cmd_compare_durations(args) -> int:
    report = compare_durations(
        DurationTrace.load(args.trace_a), DurationTrace.load(args.trace_b)
    )
    text = json.dumps(report, ensure_ascii=False, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def cmd_stats(args) -> int:
    records = load_manifest(os.path.join(args.corpus, "manifest.tsv"))
    for warning in validate_clip_lengths(records):
        print(f"warning: {warning}", file=sys.stderr)
    alignments, pitch, energy = _corpus_tracks(args.corpus, records)
    audio = AudioConfig()
    stats = compute_statistics(
        records, alignments, pitch, energy,
        StatisticsConfig(frame_hop_s=audio.frame_hop_s),
    )
    print(format_statistics_table(stats))
    if args.report:
        write_statistics_report(stats, args.report)
        print(f"report: {args.report}")
    return 0


def cmd_make_fixture(args) -> int:
    info = build_fixture_corpus(
        args.out,
        speakers=tuple(args.speakers.split(",")),
        clips_per_speaker=args.clips,
        seed=args.seed,
    )
    print(f"fixture corpus: {info['root']} ({len(info['records'])} clips)")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint_path=args.checkpoint, corpus_dir=args.corpus)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="punchline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_schedule_args(p):
        p.add_argument("--steps", type=int, required=True)
        p.add_argument("--batch-size", type=int, default=2)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--lr-factor", type=float, default=1.0)
        p.add_argument("--warmup", type=int, default=200)
        p.add_argument("--val-interval", type=int, default=200)
        p.add_argument("--checkpoint-interval", type=int, default=500)

    p = sub.add_parser("train", help="train from scratch on a corpus directory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="JSON run config (profile + overrides)")
    p.add_argument("--val-manifest")
    p.add_argument("--out", required=True)
    add_schedule_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="warm-start from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    add_schedule_args(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("synthesize", help="phonemes in, mel/trace (and wav) out")
    p.add_argument("--checkpoint")
    p.add_argument("--speaker", required=True)
    p.add_argument("--phonemes", required=True,
                   help="inline space-separated labels, or @file")
    p.add_argument("--reference", help="reference clip id")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus", help="corpus dir for reference resolution")
    p.add_argument("--out", required=True)
    p.add_argument("--name")
    p.add_argument("--wav", action="store_true")
    p.add_argument("--mel-text", action="store_true")
    p.add_argument("--server", help="use a running service instead of a local model")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("plot-durations", help="stacked duration-segment chart")
    p.add_argument("--traces", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_durations)

    p = sub.add_parser("compare-durations", help="per-phoneme deltas of two traces")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare_durations)

    p = sub.add_parser("stats", help="per-speaker corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--report", help="write a machine-readable JSON report")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("make-fixture", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", default="A,B")
    p.add_argument("--clips", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PunchlineError as err:
        record = {"error": type(err).__name__, "message": str(err)}
        print(json.dumps(record, ensure_ascii=False), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
