"""Command-line pipeline: synth-data, prepare, train, generate, evaluate.

Every artifact-producing command is reproducible: the same config and seed
yield byte-identical outputs.  The ``GESTURE_FORGE_PROVIDERS`` environment
variable selects the embedding provider bundle ("mock" is the only bundled
one; external encoders attach through the provider interfaces in code).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from . import dataset as ds
from .bvh import parse_bvh, serialize_bvh
from .features import (
    FeatureMatrix,
    MockAudioProvider,
    MockTextProvider,
    extract_audio_features,
    extract_text_features,
    save_archive,
)
from .fusion import FUSION_MODES, FusionConfig
from .generator import (
    Checkpoint,
    GeneratorConfig,
    LossWeights,
    OptimizerSettings,
    TrainingClip,
    generate,
    load_checkpoint,
    save_checkpoint,
    segment_bounds,
    train,
)
from .metrics import (
    audio_beats,
    beat_align,
    compute_fdk,
    compute_fgd,
    fit_autoencoder,
    motion_beats,
    BEAT_SIGMA_S,
)
from .pose import decode_pose, encode_pose, fit_standardizer, pose_dim, standardize

log = logging.getLogger(__name__)

MODE_ALIASES = {
    "pase": "audio_only",
    "llanimation": "text_only",
    "llanimation-plus": "concat",
    "llanimation-cross": "cross_attention",
}
PROVIDERS_ENV = "GESTURE_FORGE_PROVIDERS"


class UsageError(ValueError):
    """Bad command-line input or config document (exit code 2)."""


@dataclass
class ProviderConfig:
    name: str = "mock"
    text_dim: int = 32
    audio_dim: int = 16


@dataclass
class RunConfig:
    """Full run description; every field lands in the checkpoint manifest."""

    seed: int = 0
    dataset: str | None = None
    out: str | None = None
    epochs: int = 100
    jobs: int = 1
    fusion: FusionConfig = field(default_factory=FusionConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    provider: ProviderConfig = field(default_factory=ProviderConfig)


def _build_section(cls, doc: dict, where: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise UsageError(f"unknown key(s) {sorted(unknown)} in {where}; allowed: {sorted(allowed)}")
    if cls is OptimizerSettings and "betas" in doc:
        doc = dict(doc, betas=tuple(doc["betas"]))
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid {where}: {exc}") from None


def load_run_config(path: str | Path | None, overrides: dict) -> RunConfig:
    """Parse a config JSON (unknown keys rejected) and apply CLI overrides."""
    doc = json.loads(Path(path).read_text()) if path else {}
    if not isinstance(doc, dict):
        raise UsageError("config document must be a JSON object")
    sections = {"fusion": FusionConfig, "generator": GeneratorConfig, "loss_weights": LossWeights, "optimizer": OptimizerSettings, "provider": ProviderConfig}
    scalars = {f.name for f in fields(RunConfig)} - set(sections)
    unknown = set(doc) - set(sections) - scalars
    if unknown:
        raise UsageError(f"unknown key(s) {sorted(unknown)} in config; allowed: {sorted(set(sections) | scalars)}")

    kwargs = {k: doc[k] for k in scalars if k in doc}
    gen_doc = dict(doc.get("generator", {}))
    fus_doc = dict(doc.get("fusion", {}))
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "fusion_mode":
            fus_doc["mode"] = MODE_ALIASES.get(value, value)
        elif key in ("seed", "dataset", "out", "epochs", "jobs"):
            kwargs[key] = value
        else:
            raise UsageError(f"unsupported override {key!r}")
    if "seed" in kwargs and "seed" not in gen_doc:
        gen_doc["seed"] = kwargs["seed"]
    # fused features feed the generator directly, so the widths must agree
    if "proj_dim" not in fus_doc:
        fus_doc["proj_dim"] = gen_doc.get("d_model", GeneratorConfig().d_model)

    cfg = RunConfig(
        **kwargs,
        fusion=_build_section(FusionConfig, fus_doc, "fusion section"),
        generator=_build_section(GeneratorConfig, gen_doc, "generator section"),
        loss_weights=_build_section(LossWeights, dict(doc.get("loss_weights", {})), "loss_weights section"),
        optimizer=_build_section(OptimizerSettings, dict(doc.get("optimizer", {})), "optimizer section"),
        provider=_build_section(ProviderConfig, dict(doc.get("provider", {})), "provider section"),
    )
    if cfg.fusion.mode not in FUSION_MODES:
        raise UsageError(f"unknown fusion mode {cfg.fusion.mode!r}")
    return cfg


def make_providers(provider: ProviderConfig) -> tuple[MockTextProvider, MockAudioProvider]:
    name = os.environ.get(PROVIDERS_ENV, provider.name)
    if name != "mock":
        raise UsageError(
            f"provider bundle {name!r} is not bundled; set {PROVIDERS_ENV}=mock or attach external "
            "encoders through the TextEmbeddingProvider/AudioEmbeddingProvider interfaces"
        )
    return MockTextProvider(dim=provider.text_dim), MockAudioProvider(dim=provider.audio_dim)


# ---------------------------------------------------------------------------
# pipeline plumbing
# ---------------------------------------------------------------------------

def session_feature_set(session: ds.DyadicSession, text_provider, audio_provider) -> dict[str, np.ndarray]:
    n = session.n_frames
    return {
        "main_audio": extract_audio_features(audio_provider, session.main_agent.wave, n).values,
        "main_text": extract_text_features(text_provider, session.main_agent.words, n).values,
        "inter_audio": extract_audio_features(audio_provider, session.interlocutor.wave, n).values,
        "inter_text": extract_text_features(text_provider, session.interlocutor.words, n).values,
    }


def _session_clip(session: ds.DyadicSession, feats: dict[str, np.ndarray], standardizer) -> TrainingClip:
    encoded = encode_pose(session.main_agent.motion)
    target = standardize(encoded, standardizer, direction="forward")
    return TrainingClip(
        session_id=session.session_id,
        audio_main=feats["main_audio"],
        text_main=feats["main_text"],
        speaker_main=session.main_agent.speaker_id,
        audio_inter=feats["inter_audio"],
        text_inter=feats["inter_text"],
        speaker_inter=session.interlocutor.speaker_id,
        poses_std=target.poses,
    )


def _load_split(root: str | Path, split: str) -> list[ds.DyadicSession]:
    pairs = ds.list_sessions(root, split)
    if not pairs:
        raise UsageError(f"no sessions in split {split!r} under {root}")
    return [ds.load_session(root, sid) for _, sid in pairs]


def _hash_doc(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    spec = ds.SyntheticSpec(
        n_sessions=args.sessions,
        duration_s=args.duration,
        n_speakers=args.speakers,
        seed=args.seed if args.seed is not None else 0,
    )
    ids = ds.make_synthetic(spec, args.out)
    by_split: dict[str, int] = {}
    for sid in ids:
        by_split[ds.assign_split(sid)] = by_split.get(ds.assign_split(sid), 0) + 1
    log.info("wrote %d sessions to %s (%s)", len(ids), args.out, ", ".join(f"{k}={v}" for k, v in sorted(by_split.items())))
    return 0


def cmd_prepare(args) -> int:
    cfg = load_run_config(args.config, {"seed": args.seed, "dataset": args.dataset, "out": args.out})
    if not cfg.dataset or not cfg.out:
        raise UsageError("prepare needs --dataset and --out")
    text_p, audio_p = make_providers(cfg.provider)
    count = 0
    for split, sid in ds.list_sessions(cfg.dataset):
        session = ds.load_session(cfg.dataset, sid)
        feats = session_feature_set(session, text_p, audio_p)
        matrices = {
            name: FeatureMatrix(values=v, modality="text" if "text" in name else "audio")
            for name, v in feats.items()
        }
        save_archive(matrices, Path(cfg.out) / split / sid / "features")
        count += 1
    log.info("prepared feature archives for %d sessions under %s", count, cfg.out)
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, {
        "seed": args.seed, "dataset": args.dataset, "out": args.out,
        "epochs": args.epochs, "fusion_mode": args.fusion,
    })
    if not cfg.dataset or not cfg.out:
        raise UsageError("train needs --dataset and --out")
    text_p, audio_p = make_providers(cfg.provider)

    sessions = _load_split(cfg.dataset, "train")
    skeleton = sessions[0].main_agent.motion.skeleton
    encoded = [encode_pose(s.main_agent.motion) for s in sessions]
    standardizer = fit_standardizer(encoded)
    cfg.generator.pose_dim = pose_dim(skeleton)

    clips = [_session_clip(s, session_feature_set(s, text_p, audio_p), standardizer) for s in sessions]
    result = train(clips, cfg.generator, cfg.fusion, cfg.loss_weights, cfg.epochs, cfg.optimizer, standardizer, skeleton)

    ckpt = Checkpoint(
        model=result.model,
        generator_config=cfg.generator,
        fusion_config=cfg.fusion,
        loss_weights=cfg.loss_weights,
        optimizer=cfg.optimizer,
        standardizer=standardizer,
        skeleton=skeleton,
        epoch=cfg.epochs,
        seed=cfg.seed,
        provider=asdict(cfg.provider),
    )
    save_checkpoint(ckpt, cfg.out)
    if result.epoch_losses:
        log.info("trained %d epochs on %d clips: loss %.6f -> %.6f", cfg.epochs, len(clips), result.epoch_losses[0], result.epoch_losses[-1])
    log.info("checkpoint written to %s", cfg.out)
    return 0


def cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    text_p, audio_p = make_providers(ProviderConfig(**ckpt.provider))
    sessions = _load_split(args.dataset, args.split)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = ckpt.model
    model.eval()
    w = ckpt.generator_config.segment_len

    def one(session: ds.DyadicSession) -> str:
        feats = session_feature_set(session, text_p, audio_p)
        with torch.no_grad():
            x_main = model.fuse_sequence(feats["main_audio"], feats["main_text"], session.main_agent.speaker_id)
            x_inter = model.fuse_sequence(feats["inter_audio"], feats["inter_text"], session.interlocutor.speaker_id)
            seq = generate(model.generator, x_main, x_inter, ckpt.standardizer, ckpt.skeleton)
        path = out_dir / f"{session.session_id}.bvh"
        path.write_text(serialize_bvh(decode_pose(seq)))
        n_calls = len(segment_bounds(session.n_frames, w))
        log.info("session %s: %d frames, %d model invocations", session.session_id, session.n_frames, n_calls)
        return session.session_id

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(one, sessions))
    else:
        for session in sessions:
            one(session)
    log.info("wrote %d clips to %s", len(sessions), out_dir)
    return 0


def cmd_evaluate(args) -> int:
    root = args.dataset
    train_sessions = _load_split(root, "train")
    eval_sessions = _load_split(root, args.split)

    train_encoded = [encode_pose(s.main_agent.motion) for s in train_sessions]
    standardizer = fit_standardizer(train_encoded)
    train_std = [standardize(e, standardizer) for e in train_encoded]

    generated_dir = Path(args.generated)
    gen_seqs, ref_seqs = [], []
    for session in eval_sessions:
        path = generated_dir / f"{session.session_id}.bvh"
        if not path.is_file():
            raise UsageError(f"generated clip missing: {path}")
        gen_seqs.append(encode_pose(parse_bvh(path.read_text())))
        ref_seqs.append(encode_pose(session.main_agent.motion))

    ae = fit_autoencoder(train_std, seed=args.seed if args.seed is not None else 0, epochs=args.ae_epochs)
    fgd = compute_fgd([standardize(s, standardizer) for s in gen_seqs], [standardize(s, standardizer) for s in ref_seqs], ae)
    fdk = compute_fdk(gen_seqs, ref_seqs)

    def clip_ba(pair) -> tuple[float, float]:
        session, gen_seq, ref_seq = pair
        beats_audio = audio_beats(session.main_agent.wave)
        scores = []
        for seq in (gen_seq, ref_seq):
            beats_motion = motion_beats(seq)
            if len(beats_motion) == 0:
                log.warning("session %s: no motion beats detected; beat alignment contributes 0", session.session_id)
                scores.append(0.0)
            else:
                scores.append(beat_align(beats_motion, beats_audio, sigma=args.sigma))
        return scores[0], scores[1]

    pairs = list(zip(eval_sessions, gen_seqs, ref_seqs))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            ba_pairs = list(pool.map(clip_ba, pairs))
    else:
        ba_pairs = [clip_ba(p) for p in pairs]

    report = {
        "system": args.name,
        "fgd": fgd,
        "fdk": fdk,
        "beat_align": float(np.mean([b[0] for b in ba_pairs])),
        "beat_align_reference": float(np.mean([b[1] for b in ba_pairs])),
        "n_clips": len(eval_sessions),
        "manifests": {
            "autoencoder": ae.manifest_hash(),
            "beat": _hash_doc({"sigma": args.sigma, "threshold_stds": 1.0}),
        },
    }
    text = json.dumps(report, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
        log.info("report written to %s", args.out)
    print(report_render(report))
    return 0


def report_render(report: dict | list[dict]) -> str:
    """Aligned text table, one row per system, sorted by FGD ascending."""
    if isinstance(report, dict):
        rows = report.get("systems", [report]) if "systems" in report else [report]
    else:
        rows = list(report)
    header = ("Model", "FGD↓", "FD_k↓", "BA↑")
    cells = [header]
    try:
        for row in sorted(rows, key=lambda r: r["fgd"]):
            cells.append((str(row.get("system", "system")), f"{row['fgd']:.4f}", f"{row['fdk']:.4f}", f"{row['beat_align']:.4f}"))
    except KeyError as exc:
        raise UsageError(f"metric report is missing field {exc}") from None
    widths = [max(len(r[c]) for r in cells) for c in range(4)]
    lines = ["  ".join(cell.ljust(widths[c]) for c, cell in enumerate(row)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gesture-forge", description="Speech-to-gesture pipeline")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic dyadic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sessions", type=int, default=4)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--speakers", type=int, default=3)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("prepare", help="write per-session feature archives")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a gesture model")
    p.add_argument("--config", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--fusion", choices=sorted(MODE_ALIASES) + sorted(FUSION_MODES), default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate BVH clips from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=ds.SPLITS)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated clips against ground truth")
    p.add_argument("--dataset", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--split", default="test", choices=ds.SPLITS)
    p.add_argument("--name", default="generated")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=BEAT_SIGMA_S)
    p.add_argument("--ae-epochs", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)  # bit-exact reproducibility across runs
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        module = type(exc).__module__.rsplit(".", 1)[-1]
        print(f"{module}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
