"""Command-line pipeline: simulate, featurize, train, detect, evaluate, plot.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from .baselines import (
    baseline_from_text,
    gmm_classifier_to_text,
    logreg_to_text,
    score_gmm,
    score_logreg,
    train_gmm_classifier,
    train_logreg,
)
from .errors import InputError, NumericalError
from .features import FeatureSeries, extract_features
from .inference import run_estep
from .learning import EmConfig, run_em
from .metrics import auc, frame_labels, kfold_split, weighted_rates
from .model import (
    MODEL_HEADER,
    load_model,
    model_to_text,
    sample_recording,
    seizure_intervals,
)
from .montage import build_standard_montage, load_montage


def _load_any_model(path):
    text = sio._read_text(path)
    lines = [l.strip() for l in text.splitlines() if l.strip()]
    if not lines or lines[0] != MODEL_HEADER:
        raise InputError(f"{path}: not a model file")
    kind = lines[1].removeprefix("kind:").strip() if len(lines) > 1 else ""
    if kind == "chmm":
        from .model import model_from_text

        return "chmm", model_from_text(text)
    return kind, baseline_from_text(text)


def _cmd_simulate(args) -> int:
    kind, model = _load_any_model(args.model)
    if kind != "chmm":
        raise InputError(f"simulate needs a chmm model, got kind {kind!r}")
    states, feats = sample_recording(model, args.frames, args.seed)
    sio.write_features(f"{args.out_prefix}_features.csv", feats)
    sio.write_states(f"{args.out_prefix}_states.csv", model.montage.channels, states.states, feats.frame_step_s)
    sio.write_labels(f"{args.out_prefix}_labels.csv", seizure_intervals(states, feats.frame_step_s))
    return 0


def _cmd_featurize(args) -> int:
    montage = load_montage(sio._read_text(args.montage)) if args.montage else build_standard_montage()
    rec = sio.read_recording(args.recording)
    feats = extract_features(rec, montage)
    sio.write_features(args.out, feats)
    return 0


def _load_training_data(manifest_path, montage):
    pairs = sio.read_manifest(manifest_path)
    feature_sets, label_sets = [], []
    for rec_path, lab_path in pairs:
        if rec_path.suffix == ".csv" and rec_path.name.endswith("_features.csv"):
            feats = sio.read_features(rec_path)
            if feats.channels != montage.channels:
                raise InputError(f"{rec_path}: channels do not match the montage")
        else:
            feats = extract_features(sio.read_recording(rec_path), montage)
        intervals = sio.read_labels(lab_path)
        labels = frame_labels(feats.channels, feats.frame_starts_s, intervals)
        feature_sets.append(feats)
        label_sets.append(labels.values)
    return feature_sets, label_sets


def _cmd_train(args) -> int:
    config = sio.read_config(args.config) if args.config else EmConfig()
    montage = load_montage(sio._read_text(args.montage)) if args.montage else build_standard_montage()
    feature_sets, label_sets = _load_training_data(args.manifest, montage)
    labeled = list(zip(feature_sets, label_sets))
    if args.method == "chmm":
        result = run_em(feature_sets, label_sets, montage, config)
        sio.atomic_write_text(args.out, model_to_text(result.model))
        sio.write_em_trace(Path(args.out).parent / "em_trace.csv", result.fe_trace)
    elif args.method == "gmm":
        clf = train_gmm_classifier(labeled, config)
        sio.atomic_write_text(args.out, gmm_classifier_to_text(clf))
    elif args.method == "logreg":
        clf = train_logreg(labeled, config)
        sio.atomic_write_text(args.out, logreg_to_text(clf))
    else:
        raise InputError(f"unknown method {args.method!r}")
    return 0


def _cmd_detect(args) -> int:
    kind, model = _load_any_model(args.model)
    feats = sio.read_features(args.features)
    if kind == "chmm":
        if feats.channels != model.montage.channels:
            raise InputError(
                "feature channels do not match the model montage: "
                f"{feats.channels} vs {model.montage.channels}"
            )
        result = run_estep(model, feats)
        probs = result.stats.gamma
    else:
        if feats.channels != model.channels:
            raise InputError("feature channels do not match the classifier")
        p = score_gmm(model, feats) if kind == "gmm-lr" else score_logreg(model, feats)
        probs = np.stack([1.0 - p, p, np.zeros_like(p)], axis=-1)
    sio.write_posteriors(args.out, feats.channels, feats.frame_starts_s, probs)
    return 0


def _cmd_evaluate(args) -> int:
    if len(args.posteriors) != len(args.labels):
        raise InputError("need one labels file per posteriors file")
    rows = []
    all_scores, all_labels = [], []
    per_recording = []
    for post_path, lab_path in zip(args.posteriors, args.labels):
        channels, starts, probs = sio.read_posteriors(post_path)
        intervals = sio.read_labels(lab_path)
        labels = frame_labels(channels, starts, intervals)
        scores = probs[:, :, 1]
        per_recording.append((Path(post_path).stem, scores, labels.values))
        all_scores.append(scores.ravel())
        all_labels.append(labels.values.ravel())
    pooled_scores = np.concatenate(all_scores)
    pooled_labels = np.concatenate(all_labels)
    if args.kfold_manifest:
        ids = [
            line.strip()
            for line in sio._read_text(args.kfold_manifest).splitlines()
            if line.strip() and not line.startswith("#")
        ]
        by_id = {rid: (s, l) for rid, s, l in per_recording}
        unknown = [rid for rid in ids if rid not in by_id]
        if unknown:
            raise InputError(f"kfold manifest ids not among the posteriors: {', '.join(unknown)}")
        for fold_idx, (_, test) in enumerate(kfold_split(ids, k=args.k, seed=args.seed)):
            s = np.concatenate([by_id[rid][0].ravel() for rid in test])
            l = np.concatenate([by_id[rid][1].ravel() for rid in test])
            tpr, tnr = weighted_rates(s, l)
            rows.append((f"fold{fold_idx}", args.model_name, tpr, tnr, auc(s, l)))
    tpr, tnr = weighted_rates(pooled_scores, pooled_labels)
    rows.append(("pooled", args.model_name, tpr, tnr, auc(pooled_scores, pooled_labels)))
    sio.write_metrics(args.out, rows)
    if args.roc_out:
        from .metrics import roc_points

        fpr, tpr_curve = roc_points(pooled_scores, pooled_labels)
        sio.write_roc(args.roc_out, fpr, tpr_curve)
    return 0


# --- plot export -------------------------------------------------------------

_CELL_W = 12
_CELL_H = 16
_MARGIN_LEFT = 48
_MARGIN_TOP = 20
_MARGIN_BOTTOM = 28

# white for baseline, violet for seizure
_FILL_HI = (138, 43, 226)


def _cell_fill(p: float) -> str:
    p = min(max(p, 0.0), 1.0)
    r = round(255 - p * (255 - _FILL_HI[0]))
    g = round(255 - p * (255 - _FILL_HI[1]))
    b = round(255 - p * (255 - _FILL_HI[2]))
    return f"rgb({r},{g},{b})"


def posterior_heatmap_svg(channels, starts, seizure_probs, intervals=None) -> str:
    """Channels-by-time raster of seizure posteriors with label overlays."""
    n, f = seizure_probs.shape
    width = _MARGIN_LEFT + f * _CELL_W + 8
    height = _MARGIN_TOP + n * _CELL_H + _MARGIN_BOTTOM
    step = starts[1] - starts[0] if f > 1 else 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, ch in enumerate(channels):
        y = _MARGIN_TOP + i * _CELL_H
        parts.append(
            f'<text x="{_MARGIN_LEFT - 6}" y="{y + _CELL_H - 4}" font-size="10" '
            f'text-anchor="end" font-family="monospace">{ch}</text>'
        )
        for t in range(f):
            x = _MARGIN_LEFT + t * _CELL_W
            parts.append(
                f'<rect class="cell" x="{x}" y="{y}" width="{_CELL_W}" height="{_CELL_H}" '
                f'fill="{_cell_fill(float(seizure_probs[i, t]))}"/>'
            )
    grid_h = n * _CELL_H
    if intervals:
        bounds = set()
        for spans in intervals.values():
            for onset, offset in spans:
                bounds.add(onset)
                bounds.add(offset)
        for b in sorted(bounds):
            x = _MARGIN_LEFT + (b - float(starts[0])) / step * _CELL_W
            parts.append(
                f'<line class="label-bound" x1="{x:.2f}" y1="{_MARGIN_TOP}" x2="{x:.2f}" '
                f'y2="{_MARGIN_TOP + grid_h}" stroke="black" stroke-width="1.5" '
                f'stroke-dasharray="5,3"/>'
            )
    for t in range(0, f, max(1, f // 8)):
        x = _MARGIN_LEFT + t * _CELL_W
        parts.append(
            f'<text x="{x}" y="{height - 10}" font-size="9" font-family="monospace">'
            f"{float(starts[t]):g}s</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _cmd_export_plot(args) -> int:
    channels, starts, probs = sio.read_posteriors(args.posteriors)
    intervals = sio.read_labels(args.labels) if args.labels else None
    if intervals:
        for ch in intervals:
            if ch != "*" and ch not in channels:
                raise InputError(f"labels reference unknown channel {ch!r}")
    svg = posterior_heatmap_svg(channels, starts, probs[:, :, 1], intervals)
    sio.atomic_write_text(args.out, svg)
    raster = Path(args.out).with_suffix(".csv")
    buf = ["channel,frame,start_s,p_seizure"]
    for i, ch in enumerate(channels):
        for t in range(probs.shape[1]):
            buf.append(f"{ch},{t},{starts[t]!r},{probs[i, t, 1]!r}")
    sio.atomic_write_text(raster, "\n".join(buf) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seizchmm",
        description="Coupled-HMM seizure detection pipeline for multichannel EEG",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample states and features from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", type=int, required=True, help="frames after the initial one")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("featurize", help="filter a recording and extract features")
    p.add_argument("--recording", required=True)
    p.add_argument("--montage", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train", help="train the coupled model or a baseline")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", required=True, choices=("chmm", "gmm", "logreg"))
    p.add_argument("--config", default=None)
    p.add_argument("--montage", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("detect", help="write per-frame posteriors for a feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("evaluate", help="metrics from posterior and label files")
    p.add_argument("--posteriors", nargs="+", required=True)
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--kfold-manifest", default=None)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-name", default="model")
    p.add_argument("--roc-out", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("export-plot", help="posterior heatmap as SVG plus raster CSV")
    p.add_argument("--posteriors", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
