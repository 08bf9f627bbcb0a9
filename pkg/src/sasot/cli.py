"""Command-line entry point: ``sasot <subcommand>``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 check failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .cif import CifConfig
from .gradcheck import CHECKS, run_checks
from .labels import (SpeakerTranscript, TimedWord, TsotLabel, make_masked_label,
                     serialize_tsot)
from .metrics import score_file
from .mixsim import (ALLOWED_DOWNSAMPLE, build_dataset, load_alignments, synthesize_features,
                     write_manifest)
from .model import DEFAULT_LAMBDAS, ModelConfig, SaSotModel, build_vocab

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_jsonl(path):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{path}: no such file")
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    return out


def _write_json(obj, out):
    text = json.dumps(obj, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _write_jsonl(records, out):
    text = "".join(json.dumps(r) + "\n" for r in records)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    if not Path(args.alignments).exists():
        raise UsageError(f"{args.alignments}: no such file")
    utts = load_alignments(args.alignments)
    n = write_manifest(build_dataset(utts, args.p, args.seed, args.n), args.out,
                       with_signal=not args.no_signal)
    print(f"wrote {n} samples to {args.out}", file=sys.stderr)
    return EXIT_OK


def _record_label(rec) -> TsotLabel:
    by_spk = {}
    for w in rec["words"]:
        spk = int(w.get("speaker", 0))
        by_spk.setdefault(spk, []).append(TimedWord(w["text"], float(w["start"]), spk))
    transcripts = [SpeakerTranscript(s, tuple(sorted(ws, key=lambda w: w.emit_time)))
                   for s, ws in sorted(by_spk.items())]
    return serialize_tsot(transcripts)


def cmd_serialize(args) -> int:
    out = []
    for rec in _read_jsonl(args.input):
        out.append({"utt_id": rec.get("utt_id"), "label": _record_label(rec).text})
    _write_jsonl(out, args.out)
    return EXIT_OK


def cmd_mask(args) -> int:
    out = []
    for rec in _read_jsonl(args.input):
        label = TsotLabel.from_text(rec["label"]) if "label" in rec else _record_label(rec)
        row = {"utt_id": rec.get("utt_id"), "label": label.text}
        for spk in label.speakers:
            ml = make_masked_label(label, spk)
            row[ml.start_symbol] = " ".join(ml.tokens)
        out.append(row)
    _write_jsonl(out, args.out)
    return EXIT_OK


def cmd_score(args) -> int:
    if not Path(args.input).exists():
        raise UsageError(f"{args.input}: no such file")
    _write_json(score_file(args.input), args.out)
    return EXIT_OK


def _model_config(args, words) -> ModelConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    base.setdefault("vocab", build_vocab(words))
    for key in ("seed", "beta", "tail_threshold", "downsample"):
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    if args.lambdas is not None:
        base["lambdas"] = args.lambdas
    return ModelConfig(**base)


def cmd_demo_forward(args) -> int:
    recs = _read_jsonl(args.manifest)
    if not recs:
        raise ValueError(f"{args.manifest}: empty manifest")
    if not 0 <= args.index < len(recs):
        raise UsageError(f"--index {args.index} outside manifest of {len(recs)} records")
    rec = recs[args.index]
    if "signal" not in rec:
        raise ValueError("manifest record has no inline signal (simulate without --no-signal)")
    # words keep source indices, which the speaker list is keyed by
    label = _record_label(rec) if rec.get("words") else TsotLabel.from_text(rec["label"])
    words = [t for r in recs for t in (r.get("label") or "").split()]
    cfg = _model_config(args, words + list(label.tokens))
    sample = (rec["signal"], int(rec["sample_rate"]))
    feats = synthesize_features(sample, args.frame_ms, args.hop_ms, 1, cfg.feature_dim)
    model = SaSotModel(cfg)
    speakers = rec.get("speaker")
    if isinstance(speakers, list):
        speaker_ids = [int(s) % cfg.speaker_count for s in speakers]
    else:
        speaker_ids = None
    teacher = model.forward(feats, label, speaker_ids, use_saa=args.use_saa)
    greedy = model.forward(feats, use_saa=args.use_saa)
    _write_json({"utt_id": rec.get("utt_id"), "label": label.text,
                 "use_saa": args.use_saa, "features": list(feats.shape),
                 "teacher_forced": teacher.summary(), "greedy": greedy.summary()}, args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    reports = run_checks(args.targets, args.seed, args.instances)
    _write_json({"passed": all(r.passed for r in reports),
                 "reports": [r.as_dict() for r in reports]}, args.out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sasot", description="Speaker-aware t-SOT toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a two-speaker mixture manifest")
    s.add_argument("alignments", help="alignment JSONL")
    s.add_argument("--out", required=True, help="output manifest JSONL")
    s.add_argument("--p", type=float, default=0.5, help="overlap probability (default 0.5)")
    s.add_argument("-n", type=int, default=100, help="number of samples (default 100)")
    s.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    s.add_argument("--no-signal", action="store_true", help="omit the summed signal")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("serialize", help="t-SOT labels from timed words")
    s.add_argument("input", help="JSONL with 'words' [{text, start, speaker}]")
    s.add_argument("--out", help="output JSONL (default stdout)")
    s.set_defaults(func=cmd_serialize)

    s = sub.add_parser("mask", help="masked t-SOT labels for each speaker")
    s.add_argument("input", help="JSONL with 'label' (or 'words')")
    s.add_argument("--out", help="output JSONL (default stdout)")
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("score", help="cpWER of t-SOT hypotheses")
    s.add_argument("input", help="JSONL with 'refs' {speaker: text} and 'hyp'")
    s.add_argument("--out", help="report JSON (default stdout)")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("demo-forward", help="toy model forward pass on a manifest record")
    s.add_argument("manifest", help="mixture manifest JSONL from 'simulate'")
    s.add_argument("--config", help="ModelConfig JSON")
    s.add_argument("--index", type=int, default=0, help="record to run (default 0)")
    s.add_argument("--seed", type=int, help="parameter seed")
    s.add_argument("--beta", type=float, help="CIF firing threshold")
    s.add_argument("--tail-threshold", type=float, help="CIF tail firing fraction")
    s.add_argument("--lambdas", type=float, nargs=4, metavar="L",
                   help=f"joint loss weights (default {' '.join(map(str, DEFAULT_LAMBDAS))})")
    s.add_argument("--downsample", type=int, choices=ALLOWED_DOWNSAMPLE,
                   help="encoder temporal downsampling")
    s.add_argument("--frame-ms", type=float, default=25.0, help="feature window (ms)")
    s.add_argument("--hop-ms", type=float, default=10.0, help="feature hop (ms)")
    s.add_argument("--use-saa", action="store_true", help="speaker-aware decoder attention")
    s.add_argument("--out", help="summary JSON (default stdout)")
    s.set_defaults(func=cmd_demo_forward)

    s = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    s.add_argument("--targets", nargs="+", choices=sorted(CHECKS), default=sorted(CHECKS),
                   help="checks to run (default all)")
    s.add_argument("--instances", type=int, default=50, help="random instances per check")
    s.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    s.add_argument("--out", help="report JSON (default stdout)")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "tail_threshold", None) is not None or getattr(args, "beta", None) is not None:
        try:
            CifConfig(args.beta if args.beta is not None else 1.0,
                      args.tail_threshold if args.tail_threshold is not None else 0.5)
        except ValueError as exc:
            print(f"sasot: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sasot: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, OSError) as exc:
        print(f"sasot: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
