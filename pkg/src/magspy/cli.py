"""Command-line entry point.

Subcommands: simulate, train, classify, detect, eval, snr, sweep.
Exit codes: 0 success, 1 validation error (bad arguments, configs, or input
files), 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import detect as _detect
from .experiments import ExperimentConfig, run_scenario, write_report
from .forest import (extract_features, load_model, predict, save_model,
                     train_forest, Dataset)
from .metrics import evaluate, format_report_text
from .motion import MotionThresholds
from .preprocess import augment_with_inverse, preprocess_recording
from .simulate import load_device_profile
from .traces import load_recordings, save_recordings


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1 for
    # every validation failure.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config(path: str, seed: int | None, profile_path: str | None,
                 scenario: str | None = None) -> ExperimentConfig:
    obj = json.loads(Path(path).read_text(encoding="utf-8")) if path else {}
    if scenario is not None:
        obj["scenario"] = scenario
    if seed is not None:
        obj["seed"] = seed
    cfg = ExperimentConfig.from_dict(obj)
    if profile_path:
        from dataclasses import replace
        cfg = replace(cfg, device_profiles=(load_device_profile(profile_path),))
    return cfg


def _cmd_simulate(args) -> int:
    if not args.out:
        raise ValueError("simulate requires --out")
    cfg = _load_config(args.config, args.seed, args.device_profile)
    from .experiments import _class_ids, _render_class_traces
    from .simulate import load_motion_script, render_recording
    profiles = cfg.resolved_profiles()
    class_ids = _class_ids("class", cfg.class_count)
    recordings, _, patterns, labels, profile_ids = _render_class_traces(
        cfg, class_ids, cfg.traces_per_class, profiles, "cw")
    if args.motion_script:
        script = load_motion_script(args.motion_script)
        recordings = [
            render_recording(pattern, profiles[p_idx], motion=script,
                             seed=i, device_id=f"device-{p_idx}", label=label)
            for i, (pattern, label, p_idx)
            in enumerate(zip(patterns, labels, profile_ids))
        ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_recordings(recordings, out / "recordings.jsonl")
    print(f"wrote {len(recordings)} recordings to {out / 'recordings.jsonl'}")
    return 0


def _preprocessed_dataset(recordings, rate, bin_count):
    traces = [(preprocess_recording(rec, rate), rec.label) for rec in recordings]
    bins = min(bin_count, min(len(t) for t, _ in traces))
    return traces, bins


def _cmd_train(args) -> int:
    if not args.out:
        raise ValueError("train requires --out")
    recordings = load_recordings(args.data)
    if any(rec.label is None for rec in recordings):
        raise ValueError("training recordings must all carry labels")
    cfg = _load_config(args.config, args.seed, None)
    traces, bins = _preprocessed_dataset(recordings, args.rate, cfg.bin_count)
    pairs = []
    for trace, label in traces:
        original, inverse = augment_with_inverse(trace)
        pairs.append((extract_features(original, bins, label), label))
        pairs.append((extract_features(inverse, bins, label), label))
    dataset = Dataset.from_pairs(pairs)
    model = train_forest(dataset, cfg.forest, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    by_label: dict[str, list] = {}
    for trace, label in traces:
        by_label.setdefault(label, []).append(trace)
    for label, group in sorted(by_label.items()):
        pattern = _detect.average_pattern(group, label)
        _detect.save_pattern(pattern, out / f"pattern_{label}.json")
    print(f"wrote model and {len(by_label)} patterns to {out}")
    return 0


def _cmd_classify(args) -> int:
    model = load_model(args.model)
    recordings = load_recordings(args.data)
    lines = []
    pairs = []
    for rec in recordings:
        trace = preprocess_recording(rec, args.rate)
        features = extract_features(trace, model.n_features)
        label, probs = predict(model, features)
        lines.append(json.dumps({
            "device_id": rec.device_id,
            "label": rec.label,
            "predicted": label,
            "probability": probs[label],
        }, separators=(",", ":")))
        if rec.label is not None:
            pairs.append((rec.label, label))
    output = "".join(line + "\n" for line in lines)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "predictions.jsonl").write_text(output, encoding="utf-8")
        if pairs and all(t in model.class_names for t, _ in pairs):
            report = evaluate(pairs, model.class_names)
            write_report(out, {"report": report.to_dict()},
                         format_report_text(report))
    else:
        sys.stdout.write(output)
    return 0


def _cmd_detect(args) -> int:
    pattern = _detect.load_pattern(args.pattern)
    recordings = load_recordings(args.data)
    model = load_model(args.model) if args.model else None
    thresholds = _detect.PeakThresholds(args.min_height, args.min_prominence,
                                        args.min_width)
    lines = []
    all_detections = []
    rate = None
    for rec in recordings:
        stream = preprocess_recording(rec)
        rate = stream.rate_hz
        if model is not None:
            detections = _detect.detect_and_classify(stream, pattern, thresholds,
                                                     model, args.window_s)
        else:
            series = _detect.cross_correlate(stream, pattern)
            detections = [
                _detect.Detection(k, float(series.values[k]))
                for k in _detect.find_peaks(series, thresholds)
            ]
        all_detections.extend(detections)
        for det in detections:
            lines.append(json.dumps({
                "time_s": det.time_index / stream.rate_hz,
                "score": det.score,
                "label": det.predicted_label,
            }, separators=(",", ":")))
    output = "".join(line + "\n" for line in lines)
    scores = None
    if args.truth and rate is not None:
        truth = [
            (int(round(obj["time_s"] * rate)), obj.get("label", ""))
            for obj in (json.loads(line) for line
                        in Path(args.truth).read_text().splitlines() if line.strip())
        ]
        counts = _detect.score_detections(all_detections, truth,
                                          args.tolerance_s, rate)
        scores = {"tp": counts.tp, "fp": counts.fp, "fn": counts.fn}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "detections.jsonl").write_text(output, encoding="utf-8")
        if scores is not None:
            (out / "scores.json").write_text(
                json.dumps(scores, sort_keys=True) + "\n", encoding="utf-8")
    else:
        sys.stdout.write(output)
        if scores is not None:
            print(f"tp={scores['tp']} fp={scores['fp']} fn={scores['fn']}",
                  file=sys.stderr)
    return 0


def _cmd_eval(args, scenario: str | None = None) -> int:
    cfg = _load_config(args.config, args.seed, args.device_profile, scenario)
    if getattr(args, "motion_mean_threshold", None) is not None or \
            getattr(args, "motion_max_threshold", None) is not None:
        from dataclasses import replace
        thresholds = MotionThresholds(
            args.motion_mean_threshold
            if args.motion_mean_threshold is not None
            else cfg.motion_thresholds.mean_threshold,
            args.motion_max_threshold
            if args.motion_max_threshold is not None
            else cfg.motion_thresholds.max_threshold)
        cfg = replace(cfg, motion_thresholds=thresholds)
    payload, text = run_scenario(cfg, threads=args.threads)
    if args.out:
        write_report(args.out, payload, text)
        print(f"wrote report to {Path(args.out) / 'report.json'}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="magspy",
                     description="Magnetometer side-channel fingerprinting toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required,
                       help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for training")

    p = sub.add_parser("simulate", help="render a labeled synthetic dataset")
    common(p)
    p.add_argument("--device-profile", default=None, help="device profile JSON")
    p.add_argument("--motion-script", default=None,
                   help="apply this motion script JSON to every recording")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train a forest on labeled recordings")
    common(p)
    p.add_argument("--data", required=True, help="recordings JSONL")
    p.add_argument("--rate", type=float, default=None,
                   help="resample traces to this rate before features")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("classify", help="classify recordings with a trained model")
    common(p)
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--data", required=True, help="recordings JSONL")
    p.add_argument("--rate", type=float, default=None,
                   help="resample traces to this rate before features")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("detect", help="scan streams for an activity pattern")
    common(p)
    p.add_argument("--pattern", required=True, help="activity pattern JSON")
    p.add_argument("--data", required=True, help="stream recordings JSONL")
    p.add_argument("--model", default=None, help="classify at peaks with this model")
    p.add_argument("--min-height", type=float, required=True)
    p.add_argument("--min-prominence", type=float, required=True)
    p.add_argument("--min-width", type=int, default=1)
    p.add_argument("--window-s", type=float, default=12.0)
    p.add_argument("--tolerance-s", type=float, default=1.0)
    p.add_argument("--truth", default=None,
                   help="truth events JSONL (time_s, label) to score against")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("eval", help="run the scenario configured in --config")
    common(p, config_required=True)
    p.add_argument("--device-profile", default=None, help="device profile JSON")
    p.add_argument("--motion-mean-threshold", type=float, default=None)
    p.add_argument("--motion-max-threshold", type=float, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("snr", help="device SNR calibration table")
    common(p)
    p.add_argument("--device-profile", default=None, help="device profile JSON")
    p.set_defaults(func=lambda a: _cmd_eval(a, scenario="snr"))

    p = sub.add_parser("sweep", help="sampling-rate sweep")
    common(p)
    p.add_argument("--device-profile", default=None, help="device profile JSON")
    p.set_defaults(func=lambda a: _cmd_eval(a, scenario="sweep"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"magspy: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - contract: runtime errors exit 2
        print(f"magspy: runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
