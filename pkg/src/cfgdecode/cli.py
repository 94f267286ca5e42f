"""Command-line front end.

Subcommands: ``toy-train`` (fit and save the toy model), ``decode`` (run
guided decodes to JSONL), ``sweep`` (decode batches across a grid of
guidance scales and tabulate), ``discriminate`` (score one prompt/target
pair, optionally scheduling scales), and ``report`` (aggregate an
evaluation JSONL).

Option precedence is flag > environment > config file > built-in
default; the environment name for ``--foo-bar`` is ``CFGDECODE_FOO_BAR``
and the config key is ``foo-bar``. The resolved values land in the
sweep's metadata.json, so a run documents its own configuration. Outputs
carry no wall-clock timestamps: re-running a command with the same
inputs yields byte-identical files.

Exit codes: 0 success, 1 usage, 2 configuration or invalid input,
3 transport/protocol (a remote endpoint misbehaved), 4 degenerate or
aborted decode, 5 file I/O or empty input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import kernels
from .clients import LlmClient, NliClient
from .decoding import SamplerSettings, decode, make_request
from .errors import (
    ConfigError,
    DecodeAborted,
    DegenerateResultError,
    EmptyInputError,
    GuidanceError,
    ProtocolError,
    TransportError,
)
from .guidance import GuidancePolicy, NegativeMode, PolicyMode
from .mismatch import EMOTIONS, DiscriminatorBackend, discriminate
from .reporting import (
    SweepPoint,
    UtteranceRecord,
    aggregate,
    ingest,
    sweep_table,
    write_summary_csv,
)
from .scheduling import PRESETS, load_scale_table, schedule
from .toylm import ToyConditionalLM, make_synthetic_corpus, train_toy_lm

# exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_DEGENERATE = 4
EXIT_IO = 5

# mean-surprisal level (nats/token) the unconditional toy model itself
# decodes at; the fluency proxies measure the excess above it
_SURPRISAL_REF = 5.0

_CONFIG_KEYS = {
    "w", "w-f", "filter-top-k", "policy", "negative", "n", "seed",
    "top-k", "temperature", "max-len", "jobs", "scales", "preset",
    "sentences", "dropout", "smoothing", "p-associated", "group-by",
    "wer-pooling", "backend",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; our taxonomy reserves 1 for that."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_config_file(path: str) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown option {key!r}")
        out[key] = value.strip()
    return out


class _Options:
    """Resolves each option through flag > env > config > default and
    remembers the winning value for the metadata echo."""

    def __init__(self, args: argparse.Namespace):
        self._args = args
        self._config = (
            _read_config_file(args.config) if getattr(args, "config", None) else {}
        )
        self.resolved: dict[str, object] = {}

    def get(self, name: str, default, cast=str):
        attr = name.replace("-", "_")
        value = getattr(self._args, attr, None)
        if value is None:
            env = os.environ.get("CFGDECODE_" + name.upper().replace("-", "_"))
            if env is not None:
                value = _cast_str(name, env, cast)
            elif name in self._config:
                value = _cast_str(name, self._config[name], cast)
            else:
                value = default
        self.resolved[name] = value
        return value


def _cast_str(name: str, raw: str, cast):
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"option {name!r}: cannot parse {raw!r}") from None


def _policy_from_options(opts: _Options) -> GuidancePolicy:
    mode = PolicyMode(opts.get("policy", "standard"))
    negative = NegativeMode(opts.get("negative", "drop-style"))
    w = opts.get("w", 2.0, float)
    w_f = opts.get("w-f", 1.0, float)
    k = opts.get("filter-top-k", 50, int)
    return GuidancePolicy(mode=mode, negative=negative, w=w, filter_top_k=k, w_f=w_f)


def _sampler_from_options(opts: _Options) -> SamplerSettings:
    return SamplerSettings(
        top_k=opts.get("top-k", 25, int),
        temperature=opts.get("temperature", 1.0, float),
    )


def _emotion_cycle(selector: str) -> list[str]:
    if selector == "all":
        return list(EMOTIONS)
    if selector not in EMOTIONS:
        raise ConfigError(
            f"unknown emotion {selector!r}; choose one of {EMOTIONS} or 'all'"
        )
    return [selector]


def toy_metrics(
    model: ToyConditionalLM, token_ids
) -> tuple[str | None, float, float]:
    """(predicted emotion, WER proxy, MOS proxy) for one generated text.

    The proxies derive from the excess mean surprisal over the
    unconditional model's own decoding level: the WER stand-in squashes
    it to [0, 1), the MOS stand-in decays from 5 by e per excess nat.
    """
    predicted = model.predict_emotion(token_ids)
    if token_ids:
        excess = max(0.0, model.mean_surprisal(token_ids) - _SURPRISAL_REF)
    else:
        excess = float("inf")
    wer = excess / (1.0 + excess) if np.isfinite(excess) else 1.0
    mos = 1.0 + 4.0 * (np.exp(-excess) if np.isfinite(excess) else 0.0)
    return predicted, wer, mos


def _decode_batch(
    model: ToyConditionalLM,
    emotions: list[str],
    n: int,
    *,
    policy: GuidancePolicy,
    sampler: SamplerSettings,
    base_seed: int,
    max_len: int,
    jobs: int,
    id_prefix: str = "utt",
) -> list[dict]:
    """n decodes, emotions round-robin, utterance i seeded base_seed + i.

    Returns one plain dict per utterance, in submission order regardless
    of worker count (a single writer consumes an order-preserving map).
    """
    requests = []
    for i in range(n):
        emotion = emotions[i % len(emotions)]
        rng = np.random.default_rng((base_seed + i, 0xC0DE))
        requests.append(
            (
                i,
                emotion,
                make_request(
                    model.vocab,
                    emotion,
                    policy=policy,
                    sampler=sampler,
                    seed=base_seed + i,
                    max_len=max_len,
                    rng=rng,
                ),
            )
        )

    def run(item):
        i, emotion, request = item
        result = decode(model, request)
        predicted, wer, mos = toy_metrics(model, result.token_ids)
        # superset of the report schema, so decode output feeds `report`
        return {
            "id": f"{id_prefix}-{i:05d}",
            "target_emotion": emotion,
            "predicted_emotion": predicted,
            "wer": wer,
            "mos": mos,
            "policy": policy.mode.value,
            "n_words": max(1, len(result.token_ids)),
            "source": "toy",
            "text": model.vocab.detokenize(result.token_ids),
            "token_ids": list(result.token_ids),
            "finished": result.finished,
            "seed": request.seed,
            "n_steps": len(result.steps),
            "backend": result.backend,
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run, requests))
    return [run(item) for item in requests]


def _rows_to_records(rows: list[dict], policy_label: str) -> list[UtteranceRecord]:
    return [
        UtteranceRecord(
            id=row["id"],
            target_emotion=row["target_emotion"],
            predicted_emotion=row["predicted_emotion"],
            wer=row["wer"],
            mos=row["mos"],
            policy=policy_label,
            n_words=row["n_words"],
            source=row["source"],
        )
        for row in rows
    ]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_toy_train(args: argparse.Namespace) -> int:
    opts = _Options(args)
    sentences = opts.get("sentences", 4000, int)
    seed = opts.get("seed", 0, int)
    dropout = opts.get("dropout", 0.15, float)
    smoothing = opts.get("smoothing", 0.1, float)
    p_associated = opts.get("p-associated", 0.45, float)
    corpus = make_synthetic_corpus(
        sentences, seed=seed, p_associated=p_associated
    )
    model = train_toy_lm(
        corpus, dropout_rate=dropout, seed=seed, smoothing=smoothing
    )
    model.save(args.out)
    n_contexts = sum(len(c) for c in model.counts.values())
    print(
        f"trained on {sentences} sentences (seed {seed}, dropout {dropout:g}): "
        f"{n_contexts} contexts across {len(model.counts)} tags -> {args.out}"
    )
    return EXIT_OK


def cmd_decode(args: argparse.Namespace) -> int:
    opts = _Options(args)
    model = ToyConditionalLM.load(args.model)  # before any output exists
    policy = _policy_from_options(opts)
    sampler = _sampler_from_options(opts)
    n = opts.get("n", 8, int)
    seed = opts.get("seed", 0, int)
    max_len = opts.get("max-len", 48, int)
    jobs = opts.get("jobs", 1, int)
    emotions = _emotion_cycle(args.emotion)
    rows = _decode_batch(
        model, emotions, n,
        policy=policy, sampler=sampler, base_seed=seed,
        max_len=max_len, jobs=jobs,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        print(f"wrote {len(rows)} decodes -> {args.out}")
    else:
        for row in rows:
            marker = "" if row["finished"] else " ..."
            print(f"[{row['target_emotion']:>9}] {row['text']}{marker}")
    return EXIT_OK


def _parse_scales(raw: str) -> list[float]:
    try:
        scales = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse scale list {raw!r}") from None
    if len(scales) < 2:
        raise ConfigError("a sweep needs at least 2 scales")
    if len(set(scales)) != len(scales):
        raise ConfigError(f"duplicate scales in {raw!r}")
    return scales


def cmd_sweep(args: argparse.Namespace) -> int:
    opts = _Options(args)
    model = ToyConditionalLM.load(args.model)
    scales = _parse_scales(opts.get("scales", "1.0,2.0,3.0"))
    base = _policy_from_options(opts)
    sampler = _sampler_from_options(opts)
    n = opts.get("n", 200, int)
    seed = opts.get("seed", 0, int)
    max_len = opts.get("max-len", 48, int)
    jobs = opts.get("jobs", 1, int)
    os.makedirs(args.out_dir, exist_ok=True)

    points = []
    for w in scales:
        label = f"{w:g}"
        rows_path = os.path.join(args.out_dir, f"scale-{label}.jsonl")
        done_path = rows_path + ".done"
        if args.resume and os.path.exists(done_path):
            with open(rows_path, encoding="utf-8") as fh:
                rows = [json.loads(line) for line in fh if line.strip()]
            print(f"scale {label}: resumed {len(rows)} decodes", file=sys.stderr)
        else:
            policy = GuidancePolicy(
                mode=base.mode, negative=base.negative, w=w,
                filter_top_k=base.filter_top_k, w_f=base.w_f,
            )
            rows = _decode_batch(
                model, list(EMOTIONS), n,
                policy=policy, sampler=sampler, base_seed=seed,
                max_len=max_len, jobs=jobs, id_prefix=f"w{label}",
            )
            with open(rows_path, "w", encoding="utf-8") as fh:
                for row in rows:
                    fh.write(json.dumps(row, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            # the marker is written only after the rows hit disk, so an
            # interrupted scale is recomputed, never trusted half-done
            with open(done_path, "w", encoding="utf-8") as fh:
                fh.write(f"{len(rows)}\n")
        summary = aggregate(_rows_to_records(rows, f"w={label}"))
        points.append(SweepPoint(scale=w, summary=summary))

    table = sweep_table(points)
    table_path = os.path.join(args.out_dir, "table.txt")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    metadata = {
        "command": "sweep",
        "model": args.model,
        "backend": kernels.BACKEND,
        "options": opts.resolved,
        "scales": scales,
    }
    with open(os.path.join(args.out_dir, "metadata.json"), "w") as fh:
        json.dump(metadata, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(table)
    return EXIT_OK


def cmd_discriminate(args: argparse.Namespace) -> int:
    opts = _Options(args)
    backend = DiscriminatorBackend(opts.get("backend", "lexicon"))
    client = None
    if backend is DiscriminatorBackend.NLI:
        client = NliClient(args.url)
    elif backend is DiscriminatorBackend.LLM:
        client = LlmClient(args.url)
    result = discriminate(
        args.prompt, args.target, backend=backend, client=client
    )
    out = {
        "backend": result.backend.value,
        "distance": result.distance,
        "level": result.level.value,
        "prompt_emotion": result.prompt_emotion,
    }
    preset = opts.get("preset", None)
    if preset is not None:
        if preset in PRESETS:
            table = PRESETS[preset]
        elif os.path.exists(preset):
            table = load_scale_table(preset)
        else:
            raise ConfigError(
                f"unknown preset {preset!r}; pick one of {sorted(PRESETS)} "
                "or pass a scale-table file"
            )
        policy = schedule(result.distance, table)
        out["policy"] = {
            "mode": policy.mode.value,
            "w": policy.w,
            "w_f": policy.w_f,
            "filter_top_k": policy.filter_top_k,
        }
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    opts = _Options(args)
    group_by = opts.get("group-by", None)
    pooling = opts.get("wer-pooling", "utterance")
    result = ingest(args.infile)
    for diagnostic in result.diagnostics:
        print(f"skipped {diagnostic}", file=sys.stderr)
    overall = aggregate(result.records, wer_pooling=pooling)
    summaries = {"all": overall}
    if group_by:
        grouped = aggregate(result.records, group_by=group_by, wer_pooling=pooling)
        summaries.update(grouped)
    width = max(len(k) for k in summaries)
    for label, s in summaries.items():
        print(
            f"{label.rjust(width)}  n={s.n:<5d} er={s.er_text:>7}  "
            f"wer={s.wer_text:>7}  mos={s.mos_text}"
        )
    if args.csv:
        write_summary_csv(args.csv, summaries)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cfgdecode",
        description="Guided token decoding with mismatch-adaptive scales.",
    )
    parser.add_argument(
        "--config", help="key = value file consulted after flags and environment"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_policy_flags(p):
        p.add_argument("--policy", choices=[m.value for m in PolicyMode])
        p.add_argument("--negative", choices=[m.value for m in NegativeMode])
        p.add_argument("--w", type=float, help="guidance scale")
        p.add_argument("--w-f", type=float, help="second-pass scale")
        p.add_argument("--filter-top-k", type=int)
        p.add_argument("--top-k", type=int, help="sampler top-k")
        p.add_argument("--temperature", type=float)
        p.add_argument("--max-len", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--n", type=int, help="number of decodes")
        p.add_argument("--jobs", type=int, help="worker threads")

    p = sub.add_parser("toy-train", help="fit and save the toy model")
    p.add_argument("--out", required=True)
    p.add_argument("--sentences", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--smoothing", type=float)
    p.add_argument("--p-associated", type=float)
    p.set_defaults(func=cmd_toy_train)

    p = sub.add_parser("decode", help="run guided decodes")
    p.add_argument("--model", required=True)
    p.add_argument("--emotion", required=True, help="an emotion tag or 'all'")
    p.add_argument("--out", help="JSONL destination (default: pretty stdout)")
    add_policy_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="decode across a grid of guidance scales")
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scales", help="comma-separated, e.g. 1.0,2.0,3.0")
    p.add_argument(
        "--resume", action="store_true",
        help="reuse scales whose completion marker exists",
    )
    add_policy_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("discriminate", help="score one prompt/target pair")
    p.add_argument("--prompt", required=True)
    p.add_argument("--target", required=True)
    p.add_argument(
        "--backend", choices=[b.value for b in DiscriminatorBackend]
    )
    p.add_argument("--url", help="endpoint override for nli/llm backends")
    p.add_argument(
        "--preset",
        help="scale table (preset name or file) to turn the result into scales",
    )
    p.set_defaults(func=cmd_discriminate)

    p = sub.add_parser("report", help="aggregate an evaluation JSONL")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--group-by", choices=["policy", "mismatch_level"])
    p.add_argument("--wer-pooling", choices=["utterance", "words"])
    p.add_argument("--csv", help="also write the summaries as CSV")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse funnels both --help (0) and usage errors (1) through here
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"cfgdecode: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TransportError, ProtocolError) as exc:
        print(f"cfgdecode: endpoint error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (DegenerateResultError, DecodeAborted) as exc:
        print(f"cfgdecode: decode failed: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except EmptyInputError as exc:
        print(f"cfgdecode: empty input: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"cfgdecode: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GuidanceError as exc:
        print(f"cfgdecode: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
