"""Command-line driver for every pipeline stage.

Commands: gen-data, simulate, fit, pool, train-aet, train-ptc, evaluate,
serve. A JSON config file supplies defaults; explicit flags win. Exit
codes: 0 ok, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class DataError(Exception):
    """Bad or missing input data (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise DataError(f"config file not found: {p}")
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)


def _setting(args, config: dict, name: str, default):
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    return config.get(name, default)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest_of_outputs(out: Path, command: str, files: list[str], extra: dict | None = None):
    payload = {"command": command, "outputs": sorted(files)}
    payload.update(extra or {})
    with open(out / f"{command}-manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _records_from_args(args, config):
    from .datagen import load_dataset

    manifest = _setting(args, config, "manifest", None)
    if manifest is None:
        raise DataError("a dataset manifest is required (--manifest)")
    if not Path(manifest).exists():
        raise DataError(f"manifest not found: {manifest}")
    return load_dataset(manifest)


def _train_config(args, config, seed):
    from .models import TrainConfig
    from .nn import LrSchedule

    sched_cfg = config.get("schedule", {})
    schedule = LrSchedule(
        lr_min=float(_setting(args, sched_cfg, "lr-min", sched_cfg.get("lr_min", 1e-6))),
        lr_max=float(_setting(args, sched_cfg, "lr-max", sched_cfg.get("lr_max", 1e-4))),
        cycle_epochs=float(sched_cfg.get("cycle_epochs", 5.0)),
        max_decay=float(sched_cfg.get("max_decay", 0.9)),
        cycle_growth=float(sched_cfg.get("cycle_growth", 1.5)),
    )
    return TrainConfig(
        epochs=int(_setting(args, config, "epochs", 30)),
        batch_size=int(_setting(args, config, "batch-size", config.get("batch_size", 12))),
        seed=seed,
        schedule=schedule,
        patience=config.get("patience", 40),
        focusing=float(_setting(args, config, "focusing", config.get("focusing", 2.0))),
        steps_per_epoch=config.get("steps_per_epoch"),
    )


def _backbone_config(args, config):
    from .models import BackboneConfig

    model_cfg = dict(config.get("model", {}))
    size = _setting(args, model_cfg, "input-size", model_cfg.get("input_size", 64))
    model_cfg["input_size"] = int(size)
    return BackboneConfig(**model_cfg)


def _write_history(path: Path, history: list[dict]):
    with open(path, "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _write_eval_table(path: Path, image_rows: list[dict]):
    import csv as csvmod

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csvmod.DictWriter(
            fh, fieldnames=["image_id", "pred_neg", "pred_pos", "true_neg", "true_pos"]
        )
        writer.writeheader()
        for row in image_rows:
            writer.writerow(row)


# --- commands -----------------------------------------------------------------


def cmd_gen_data(args, config):
    from .datagen import make_synthetic_dataset, write_dataset

    out = _out_dir(args)
    n = int(_setting(args, config, "count", 200))
    size = int(_setting(args, config, "size", 64))
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    with_thresholds = not args.no_thresholds
    records = make_synthetic_dataset(n, size=size, seed=seed, with_thresholds=with_thresholds)
    manifest = write_dataset(records, out)
    _write_manifest_of_outputs(out, "gen-data", [str(manifest)], {"n_images": n, "seed": seed})
    print(f"wrote {n} images to {out} (manifest: {manifest})")
    return EXIT_OK


def cmd_simulate(args, config):
    from .datagen import DatasetRecord
    from .psychometric import PsychometricParams, SimulatedObserver, write_trial_log
    from .session import SessionConfig, create_session

    records = _records_from_args(args, config)
    dataset = {r.image_id: r for r in records}
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    n_observers = int(_setting(args, config, "observers", 3))
    images_per_observer = int(_setting(args, config, "images-per-observer",
                                       config.get("images_per_observer", 15)))
    beta = float(config.get("observer_beta", 3.5))
    out = _out_dir(args)

    calibration_id = sorted(dataset)[0]
    pool_ids = sorted(i for i in dataset if i != calibration_id)
    rows = []
    fitted_count = 0
    rng = np.random.default_rng([seed, 5])
    for obs_index in range(n_observers):
        take = min(images_per_observer, len(pool_ids))
        image_ids = [pool_ids[int(i)] for i in rng.choice(len(pool_ids), take, replace=False)]
        session = create_session(
            f"sim{obs_index:03d}", image_ids, dataset, calibration_id,
            config=SessionConfig(), seed=seed + obs_index,
        )
        # observer's true thresholds follow each image's manifest entry
        observers = {}
        for image_id in [calibration_id] + image_ids:
            th = dataset[image_id].thresholds
            if th is None:
                raise DataError(f"image {image_id} lacks thresholds for simulation")
            observers[image_id] = SimulatedObserver(
                neg=PsychometricParams(0.5, 0.75, beta, abs(th.neg.mean)),
                pos=PsychometricParams(0.5, 0.75, beta, th.pos.mean),
                seed=seed * 1000 + obs_index,
            )
        trial_index = 0
        while session.status != "finished":
            trial = session.next_trial(dataset)
            correct = observers[trial.image_id].respond(trial.x)
            side = trial.correct_side if correct else ("left" if trial.correct_side == "right" else "right")
            session.submit_response(trial.trial_id, side, timestamp=float(trial_index))
            trial_index += 1
        for t in session.trials:
            if not t["calibration"]:
                rows.append({k: t[k] for k in
                             ("observer_id", "image_id", "direction", "x", "correct", "timestamp")})
        fitted_count += 1
    log_path = out / "trials.jsonl"
    write_trial_log(log_path, rows)
    _write_manifest_of_outputs(out, "simulate", [str(log_path)],
                               {"observers": n_observers, "seed": seed})
    print(f"simulated {n_observers} observers, {len(rows)} trials -> {log_path}")
    return EXIT_OK


def cmd_fit(args, config):
    from .psychometric import FitError, TrialRecord, fit_weibull, read_trial_log

    trials_path = _setting(args, config, "trials", None)
    if trials_path is None or not Path(trials_path).exists():
        raise DataError(f"trial log not found: {trials_path}")
    rows = read_trial_log(trials_path)
    if not rows:
        raise DataError("empty trial log")
    out = _out_dir(args)
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["observer_id"], row["image_id"], row["direction"]), []).append(row)
    fitted = {}
    skipped = 0
    for (observer_id, image_id, direction), group in sorted(groups.items()):
        trials = [TrialRecord(x=r["x"], correct=r["correct"]) for r in group]
        key = (observer_id, image_id)
        fitted.setdefault(key, {"observer_id": observer_id, "image_id": image_id,
                                "x_t_neg": None, "x_t_pos": None})
        try:
            fit = fit_weibull(trials)
            value = float(direction * fit.t)
        except FitError:
            skipped += 1
            value = None
        fitted[key]["x_t_neg" if direction < 0 else "x_t_pos"] = value
    fit_path = out / "fitted.jsonl"
    with open(fit_path, "w", encoding="utf-8") as fh:
        for key in sorted(fitted):
            fh.write(json.dumps(fitted[key], sort_keys=True) + "\n")
    _write_manifest_of_outputs(out, "fit", [str(fit_path)], {"unfittable": skipped})
    print(f"fitted {len(fitted)} observer-image pairs ({skipped} unfittable) -> {fit_path}")
    return EXIT_OK


def cmd_pool(args, config):
    from .psychometric import ThresholdPair, bootstrap_mean, remove_outliers, write_threshold_table

    fitted_path = _setting(args, config, "fitted", None)
    if fitted_path is None or not Path(fitted_path).exists():
        raise DataError(f"fitted thresholds not found: {fitted_path}")
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    out = _out_dir(args)
    by_image: dict = {}
    with open(fitted_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            entry = by_image.setdefault(row["image_id"], {"neg": [], "pos": []})
            if row.get("x_t_neg") is not None:
                entry["neg"].append(row["x_t_neg"])
            if row.get("x_t_pos") is not None:
                entry["pos"].append(row["x_t_pos"])
    pairs = {}
    for image_id, entry in sorted(by_image.items()):
        if not entry["neg"] or not entry["pos"]:
            continue
        pairs[image_id] = ThresholdPair(
            neg=bootstrap_mean(remove_outliers(entry["neg"], 3.0), 1000, seed),
            pos=bootstrap_mean(remove_outliers(entry["pos"], 3.0), 1000, seed + 1),
        )
    if not pairs:
        raise DataError("no image had fittable thresholds in both directions")
    table_path = out / "thresholds.csv"
    write_threshold_table(table_path, pairs)
    _write_manifest_of_outputs(out, "pool", [str(table_path)], {"n_images": len(pairs)})
    print(f"pooled thresholds for {len(pairs)} images -> {table_path}")
    return EXIT_OK


def cmd_train_aet(args, config):
    from .models import save_model, train_aet

    records = _records_from_args(args, config)
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    out = _out_dir(args)
    bc = _backbone_config(args, config)
    tc = _train_config(args, config.get("train_aet", config), seed)
    model, history = train_aet(records, bc, tc)
    ckpt = out / "aet.ckpt"
    save_model(ckpt, model, extra={"val_loss": min(h["val_loss"] for h in history)})
    _write_history(out / "aet-metrics.jsonl", history)
    _write_manifest_of_outputs(out, "train-aet", [str(ckpt), str(out / "aet-metrics.jsonl")],
                               {"seed": seed, "config": asdict(bc)})
    print(f"trained regressor: best val MSE {min(h['val_loss'] for h in history):.4f} -> {ckpt}")
    return EXIT_OK


def cmd_train_ptc(args, config):
    from .models import PtcModel, build_ptc_from_aet, load_model, save_model, train_ptc

    records = _records_from_args(args, config)
    if any(r.thresholds is None for r in records):
        raise DataError("classifier training needs thresholds for every manifest record")
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    out = _out_dir(args)
    tc = _train_config(args, config.get("train_ptc", config), seed)
    if args.aet:
        if not Path(args.aet).exists():
            raise DataError(f"regressor checkpoint not found: {args.aet}")
        aet = load_model(args.aet)
        model = build_ptc_from_aet(aet, args.freeze or "none", seed=seed)
    else:
        bc = _backbone_config(args, config)
        model = PtcModel(bc, seed=seed)
        if args.freeze and args.freeze != "none":
            model.backbone.freeze(args.freeze)
    model, history = train_ptc(model, records, tc)
    ckpt = out / "ptc.ckpt"
    best = max(h["val_miou"] for h in history)
    save_model(ckpt, model, extra={"val_miou": best, "freeze": args.freeze or "none"})
    _write_history(out / "ptc-metrics.jsonl", history)
    _write_manifest_of_outputs(out, "train-ptc", [str(ckpt), str(out / "ptc-metrics.jsonl")],
                               {"seed": seed, "freeze": args.freeze or "none"})
    print(f"trained classifier: best val mIoU {best:.3f} -> {ckpt}")
    return EXIT_OK


def cmd_evaluate(args, config):
    from .evaluate import cross_validate, evaluate_model
    from .models import load_model

    records = _records_from_args(args, config)
    seed = int(args.seed if args.seed is not None else config.get("seed", 0))
    out = _out_dir(args)
    if args.mode == "sweep":
        if not args.model or not Path(args.model).exists():
            raise DataError(f"model checkpoint not found: {args.model}")
        model = load_model(args.model)
        report = evaluate_model(model, records, iou_seed=seed)
        payload = report.to_dict()
        path = out / "sweep-report.json"
        _write_eval_table(out / "sweep-report.csv", payload["images"])
        if args.curves:
            from .evaluate import boundary_sweep

            curve_dir = out / "curves"
            curve_dir.mkdir(exist_ok=True)
            for rec in records:
                sweep = boundary_sweep(model, rec.image, rec.mask, rec.thresholds)
                with open(curve_dir / f"{rec.image_id}.csv", "w", encoding="utf-8") as fh:
                    fh.write("x,f1_neg,f1_pos\n")
                    for x, fn, fp in zip(sweep.xs, sweep.f1_neg, sweep.f1_pos):
                        fh.write(f"{x},{fn},{fp}\n")
    else:
        from .models import load_model as _load

        aet = None
        if args.aet:
            if not Path(args.aet).exists():
                raise DataError(f"regressor checkpoint not found: {args.aet}")
            aet = _load(args.aet)
        bc = _backbone_config(args, config)
        tc = _train_config(args, config.get("train_ptc", config), seed)
        report = cross_validate(
            records, k=int(args.folds), freeze_stage=args.freeze or "none",
            aet_model=aet, config=bc, train_config=tc, seed=seed,
        )
        payload = report.to_dict()
        path = out / "cv-report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    _write_manifest_of_outputs(out, "evaluate", [str(path)], {"seed": seed})
    print(f"MSE both {payload['mse_both']:.4f} (neg {payload['mse_neg']:.4f}, "
          f"pos {payload['mse_pos']:.4f}) -> {path}")
    return EXIT_OK


def cmd_serve(args, config):
    import uvicorn

    from .server import create_app

    records = _records_from_args(args, config)
    app = create_app(
        records,
        store_dir=_setting(args, config, "store", "sessions"),
        static_dir=args.static,
    )
    uvicorn.run(app, host=args.host, port=int(args.port), log_level="warning")
    return EXIT_OK


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jndnet", description=__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="global seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", type=int, help="kernel thread cap")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--count", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--no-thresholds", action="store_true")

    p = sub.add_parser("simulate", help="run simulated observers through sessions")
    p.add_argument("--manifest")
    p.add_argument("--observers", type=int)
    p.add_argument("--images-per-observer", type=int)

    p = sub.add_parser("fit", help="fit psychometric functions to a trial log")
    p.add_argument("--trials")

    p = sub.add_parser("pool", help="pool fitted thresholds across observers")
    p.add_argument("--fitted")

    p = sub.add_parser("train-aet", help="train the shift regressor")
    p.add_argument("--manifest")
    p.add_argument("--epochs", type=int)
    p.add_argument("--input-size", type=int)

    p = sub.add_parser("train-ptc", help="train the threshold classifier")
    p.add_argument("--manifest")
    p.add_argument("--aet", help="regressor checkpoint to start from")
    p.add_argument("--freeze", help="freeze stage (none, block1_pool, ..., concatenate)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--input-size", type=int)
    p.add_argument("--focusing", type=float)

    p = sub.add_parser("evaluate", help="boundary sweep or cross-validation")
    p.add_argument("mode", choices=["sweep", "cv"])
    p.add_argument("--manifest")
    p.add_argument("--model", help="classifier checkpoint (sweep mode)")
    p.add_argument("--aet", help="regressor checkpoint (cv mode)")
    p.add_argument("--freeze")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int)
    p.add_argument("--input-size", type=int)
    p.add_argument("--focusing", type=float)
    p.add_argument("--curves", action="store_true",
                   help="emit per-image F1-vs-shift curve CSVs (sweep mode)")

    p = sub.add_parser("serve", help="run the session HTTP service")
    p.add_argument("--manifest")
    p.add_argument("--store")
    p.add_argument("--static", help="web UI bundle directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", default=8765)

    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "pool": cmd_pool,
    "train-aet": cmd_train_aet,
    "train-ptc": cmd_train_ptc,
    "evaluate": cmd_evaluate,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        config = _load_config(args.config)
        if args.threads:
            from .nn import set_num_threads

            set_num_threads(args.threads)
        return COMMANDS[args.command](args, config)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # descriptive nonzero exit for operators
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
