"""Pipeline orchestration: synth | prepare | train | evaluate | analyze |
serve | validate, one TOML config end to end.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
Logs are line-oriented key=value records on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, corpus, nnet, projection, similarity, survey, synth
from .config import PipelineConfig, load_config, write_artifact_meta
from .errors import ConfigError, DataError, LegibilityError, NumericError
from .imageutil import save_image


def log(**kv) -> None:
    print(" ".join(f"{k}={v}" for k, v in kv.items()), flush=True)


def _json_artifact(path, payload: dict, config: PipelineConfig) -> None:
    payload = dict(payload)
    payload["config_digest"] = config.digest()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(config: PipelineConfig) -> None:
    spec = synth.SynthSpec(
        num_segments=config.synth.num_segments,
        panos_per_segment=config.synth.panos_per_segment,
        pano_height=config.synth.pano_height,
        ambiguity=config.synth.ambiguity,
        shared_pair=tuple(config.synth.shared_pair) if config.synth.shared_pair else None,
        noise_sigma=config.synth.noise_sigma,
    )
    station = synth.synth_station(spec, seed=config.seed)
    config.pano_dir.mkdir(parents=True, exist_ok=True)
    for pano in station.panoramas:
        save_image(pano.pixels, config.pano_dir / f"{pano.id}.png")
    corpus.save_trajectory(station.trajectory, config.corpus_dir / "trajectory.csv")
    corpus.save_segments(station.segments, config.corpus_dir / "segments.json")
    timestamps = {p.id: p.timestamp for p in station.panoramas}
    _json_artifact(config.corpus_dir / "pano_index.json",
                   {"panoramas": timestamps, "seed": config.seed}, config)
    write_artifact_meta(config.corpus_dir / "trajectory.csv", config, "synth")
    write_artifact_meta(config.corpus_dir / "segments.json", config, "synth")
    log(event="synth", panoramas=len(station.panoramas),
        segments=len(station.segments), out=str(config.corpus_dir))


def cmd_prepare(config: PipelineConfig) -> None:
    pano_index_path = config.corpus_dir / "pano_index.json"
    if not pano_index_path.exists():
        raise DataError(f"missing corpus at {config.corpus_dir}; run synth first")
    with open(pano_index_path, encoding="utf-8") as fh:
        timestamps = json.load(fh)["panoramas"]
    trajectory = corpus.load_trajectory(config.corpus_dir / "trajectory.csv")
    segments = corpus.load_segments(config.corpus_dir / "segments.json")

    config.crop_dir.mkdir(parents=True, exist_ok=True)
    crop_records = []
    crops = []
    for pano_id in sorted(timestamps):
        pano = projection.load_panorama(config.pano_dir / f"{pano_id}.png",
                                        pano_id=pano_id,
                                        timestamp=timestamps[pano_id])
        for k, (spec, image) in enumerate(projection.standard_crop_set(
                pano, preset=config.crop.preset, out_size=config.crop.out_size,
                fov=config.crop.fov)):
            rel = f"crops/{pano_id}_{k:02d}.png"
            save_image(image, config.corpus_dir / rel)
            crop_records.append({"pano_id": pano_id, "yaw": spec.yaw,
                                 "pitch": spec.pitch, "fov": spec.fov,
                                 "out_path": rel})
            crops.append({"image_path": rel, "pano_id": pano_id,
                          "timestamp": pano.timestamp, "yaw": spec.yaw,
                          "pitch": spec.pitch})
    projection.write_crop_manifest(crop_records, config.corpus_dir / "crop_manifest.csv")
    write_artifact_meta(config.corpus_dir / "crop_manifest.csv", config, "prepare")

    manifest, dropped = corpus.annotate(crops, trajectory, segments)
    manifest = corpus.balance(manifest, config.dataset.balance_cap, seed=config.seed)
    train_m, test_m = corpus.split(manifest, config.dataset.test_fraction,
                                   seed=config.seed)
    merged = corpus.DatasetManifest(train_m.entries + test_m.entries, segments)
    corpus.save_manifest(merged, config.corpus_dir / "manifest.csv")
    write_artifact_meta(config.corpus_dir / "manifest.csv", config, "prepare",
                        extra={"dropped": dropped})
    log(event="prepare", crops=len(crops), dropped=dropped,
        train=len(train_m.entries), test=len(test_m.entries))


def _load_split(config: PipelineConfig, split: str) -> nnet.LabeledImages:
    segments = corpus.load_segments(config.corpus_dir / "segments.json")
    manifest = corpus.load_manifest(config.corpus_dir / "manifest.csv", segments)
    part = manifest.subset(split)
    if not part.entries:
        raise DataError(f"manifest has no {split!r} entries; run prepare first")
    return nnet.load_dataset(part, root=config.corpus_dir)


def _model_config(config: PipelineConfig, num_classes: int) -> nnet.ModelConfig:
    return nnet.ModelConfig(
        num_classes=num_classes,
        input_size=config.model.input_size,
        stage_channels=tuple(config.model.stage_channels),
        stage_blocks=tuple(config.model.stage_blocks),
        stem_stride=config.model.stem_stride,
        head_bias=config.model.head_bias,
    )


def cmd_train(config: PipelineConfig, resume: bool = False) -> None:
    train_data = _load_split(config, "train")
    test_data = _load_split(config, "test")
    start_epoch = 0
    if resume and config.checkpoint_path.exists():
        model, header = nnet.load_model(config.checkpoint_path)
        start_epoch = (header.get("epoch") or -1) + 1
        log(event="resume", start_epoch=start_epoch)
    else:
        model = nnet.build_model(_model_config(config, len(train_data.class_segments)),
                                 seed=config.seed)
    model, report = nnet.train(
        model, train_data, epochs=config.train.epochs, lr=config.train.lr,
        batch_size=config.train.batch_size, seed=config.seed,
        start_epoch=start_epoch, eval_data=test_data,
        log=lambda **kv: log(event="train", **kv))
    config.checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    nnet.save_model(model, config.checkpoint_path, seed=config.seed,
                    epoch=report.epochs[-1],
                    extra={"config_digest": config.digest()})
    _json_artifact(config.out / "train_report.json", {
        "epochs": report.epochs,
        "train_loss": report.train_loss,
        "test_top1": report.test_top1,
        "test_top5": report.test_top5,
        "wall_time_s": report.wall_time,
    }, config)
    log(event="trained", epochs=len(report.epochs),
        final_loss=report.train_loss[-1], top1=report.test_top1[-1])


def _evaluate(config: PipelineConfig):
    if not config.checkpoint_path.exists():
        raise DataError(f"missing checkpoint {config.checkpoint_path}; run train first")
    model, _ = nnet.load_model(config.checkpoint_path)
    test_data = _load_split(config, "test")
    return model, test_data, nnet.evaluate(model, test_data)


def cmd_evaluate(config: PipelineConfig) -> None:
    _, test_data, result = _evaluate(config)
    out = config.analysis_dir
    out.mkdir(parents=True, exist_ok=True)
    result.to_csv(out / "eval.csv")
    result.summary_csv(out / "eval_by_segment.csv")
    write_artifact_meta(out / "eval.csv", config, "evaluate")
    write_artifact_meta(out / "eval_by_segment.csv", config, "evaluate")
    segments = corpus.load_segments(config.corpus_dir / "segments.json")
    for key in analysis.GROUP_KEYS:
        table = analysis.legibility_by(result, segments, key)
        table.to_csv(out / f"legibility_by_{key}.csv")
        write_artifact_meta(out / f"legibility_by_{key}.csv", config, "evaluate")
    log(event="evaluate", images=len(result.labels), top1=result.top1_accuracy,
        top5=result.top5_accuracy, mean_confidence=result.mean_confidence)


def cmd_analyze(config: PipelineConfig, cam_samples: int = 8) -> None:
    model, test_data, result = _evaluate(config)
    out = config.analysis_dir
    out.mkdir(parents=True, exist_ok=True)

    logits = similarity.logit_matrix(result)
    q = similarity.covariance(logits)
    similarity.save_matrix_csv(q, result.class_segments, out / "covariance.csv")

    aff = similarity.affinity(result)
    similarity.save_matrix_csv(aff.matrix, aff.class_segments, out / "affinity.csv")

    n_pairs = min(config.survey.pool_size,
                  len(aff.class_segments) * (len(aff.class_segments) - 1) // 2)
    pairs = similarity.top_pairs(aff, n_pairs)
    _json_artifact(out / "top_pairs.json", {
        "pairs": [{"segment_i": aff.class_segments[i],
                   "segment_j": aff.class_segments[j],
                   "affinity": float(aff.matrix[i, j])} for i, j in pairs],
    }, config)

    graph = similarity.graph_from_affinity(aff)
    partition = similarity.louvain(graph, seed=config.seed)
    _json_artifact(out / "partition.json", {
        "communities": partition.as_dict(),
        "modularity": partition.q,
        "q_trace": partition.q_trace,
    }, config)

    coords = similarity.layout2d(aff.matrix, seed=config.seed)
    similarity.save_layout_csv(coords, aff.class_segments, out / "layout.csv")

    cam_dir = out / "cam"
    cam_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng(config.seed)
    picks = rng.choice(len(test_data), size=min(cam_samples, len(test_data)),
                       replace=False)
    for i in picks:
        image = test_data.images[i]
        fwd = nnet.forward(model, image)
        heatmap = analysis.make_heatmap(fwd.feature_maps, model.head_w,
                                        int(fwd.probs.argmax()),
                                        image.shape[0], image.shape[1],
                                        image_ref=test_data.image_paths[i])
        stem = Path(heatmap.image_ref).stem
        save_image(np.clip(np.rint(heatmap.upsampled * 255), 0, 255).astype(np.uint8),
                   cam_dir / f"{stem}_heat.png")
        save_image(analysis.overlay(heatmap.upsampled, image, alpha=0.5),
                   cam_dir / f"{stem}_overlay.png")
    for name in ("covariance.csv", "affinity.csv", "layout.csv"):
        write_artifact_meta(out / name, config, "analyze")
    log(event="analyze", pairs=len(pairs), communities=int(partition.communities.max()) + 1,
        modularity=partition.q, cam_samples=len(picks))


def _build_questions(config: PipelineConfig) -> list:
    """Build (and persist) the question pool from the analyzed affinity;
    deterministic for a given config, so serve and validate agree."""
    aff_path = config.analysis_dir / "affinity.csv"
    if not aff_path.exists():
        raise DataError(f"missing {aff_path}; run analyze first")
    matrix, node_ids = similarity.load_matrix_csv(aff_path)
    segments = corpus.load_segments(config.corpus_dir / "segments.json")
    manifest = corpus.load_manifest(config.corpus_dir / "manifest.csv", segments)
    aff = similarity.SegmentAffinity(matrix=matrix, counts=np.zeros(len(node_ids)),
                                     class_segments=node_ids)
    pairs = similarity.top_pairs(aff, min(config.survey.pool_size,
                                          len(node_ids) * (len(node_ids) - 1) // 2))
    questions = survey.build_question_pool(pairs, aff, manifest,
                                           pool_size=config.survey.pool_size,
                                           seed=config.seed)
    config.survey_dir.mkdir(parents=True, exist_ok=True)
    _json_artifact(config.survey_dir / "questions.json", {
        "questions": [{
            "question_id": q.question_id, "segment_a": q.segment_a,
            "pano_id": q.pano_id, "control_image": q.control_image,
            "choices": list(q.choices), "roles": q.roles,
            "choice_segments": {k: int(v) for k, v in q.choice_segments.items()},
            "rotation_ms": q.rotation_ms,
        } for q in questions],
    }, config)
    return questions


def _build_survey_service(config: PipelineConfig) -> survey.SurveyService:
    questions = _build_questions(config)
    aff_matrix, node_ids = similarity.load_matrix_csv(config.analysis_dir / "affinity.csv")
    aff = similarity.SegmentAffinity(matrix=aff_matrix, counts=np.zeros(len(node_ids)),
                                     class_segments=node_ids)

    model, _ = nnet.load_model(config.checkpoint_path)
    heatmaps = {}
    from .imageutil import load_image
    for q in questions:
        image = load_image(config.corpus_dir / q.control_image)
        fwd = nnet.forward(model, image)
        raw = analysis.cam(fwd.feature_maps, model.head_w, int(fwd.probs.argmax()))
        heatmaps[q.control_image] = analysis.upsample_cam(
            raw, image.shape[0], image.shape[1])

    store = survey.ResponseStore(config.response_store_path)
    return survey.SurveyService(
        questions, store, image_size=(config.crop.out_size, config.crop.out_size),
        affinity=aff, heatmaps=heatmaps,
        questions_per_participant=config.survey.questions_per_participant,
        overlap_radius=config.survey.radius)


def cmd_serve(config: PipelineConfig, port=None, ui_dir=None) -> None:
    import uvicorn
    from .server import create_app
    service = _build_survey_service(config)
    app = create_app(service, static_dir=str(config.corpus_dir), ui_dir=ui_dir)
    log(event="serve", port=port or config.survey.port,
        questions=len(service.questions))
    uvicorn.run(app, host="0.0.0.0", port=port or config.survey.port)


def cmd_validate(config: PipelineConfig) -> None:
    questions_path = config.survey_dir / "questions.json"
    if questions_path.exists():
        with open(questions_path, encoding="utf-8") as fh:
            qdata = json.load(fh)["questions"]
        questions = [survey.SurveyQuestion(
            question_id=d["question_id"], segment_a=d["segment_a"],
            pano_id=d["pano_id"], control_image=d["control_image"],
            choices=tuple(d["choices"]), roles=d["roles"],
            choice_segments={k: int(v) for k, v in d["choice_segments"].items()},
            rotation_ms=d["rotation_ms"]) for d in qdata]
    else:
        questions = _build_questions(config)

    report: dict = {}
    if not config.response_store_path.exists():
        report["notice"] = "response store is empty; nothing to validate"
        report["responses"] = 0
    else:
        store = survey.ResponseStore(config.response_store_path)
        responses = store.responses()
        valid, rejected = survey.filter_bots(
            responses, min_dwell_ms=config.survey.min_dwell_ms,
            max_per_participant=config.survey.max_per_participant)
        model, _ = nnet.load_model(config.checkpoint_path)
        from .imageutil import load_image
        heatmaps = {}
        for q in questions:
            image = load_image(config.corpus_dir / q.control_image)
            fwd = nnet.forward(model, image)
            raw = analysis.cam(fwd.feature_maps, model.head_w, int(fwd.probs.argmax()))
            heatmaps[q.control_image] = analysis.upsample_cam(
                raw, image.shape[0], image.shape[1])
        dist = survey.overlap_distribution(
            valid, questions, heatmaps, radius=config.survey.radius,
            denominator=config.survey.overlap_denominator)
        report["responses"] = len(responses)
        report["valid"] = len(valid)
        report["rejected"] = [{"reason": reason} for _, reason in rejected]
        report["summary"] = dist.summary()
        report["histogram"] = dist.histogram()
        report["per_response"] = [{"index": i, "overlap": v}
                                  for i, v in dist.per_response]
        report["choices"] = survey.aggregate_choices(valid, questions)
        report["properties"] = survey.property_tally(valid)
        survey.export_responses_csv(store.records(), questions,
                                    config.survey_dir / "responses.csv")
        write_artifact_meta(config.survey_dir / "responses.csv", config, "validate")
    _json_artifact(config.survey_dir / "validation_report.json", report, config)
    log(event="validate", responses=report.get("responses", 0),
        valid=report.get("valid", 0))


# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="legibility",
        description="Spatial-legibility pipeline: synthesize a station, train "
                    "a localization model, analyze legibility, run the survey.")
    parser.add_argument("command",
                        choices=["synth", "prepare", "train", "evaluate",
                                 "analyze", "serve", "validate"])
    parser.add_argument("--config", type=Path, default=None, help="TOML config path")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", type=str, default=None, help="override output dir")
    parser.add_argument("--port", type=int, default=None, help="serve: port override")
    parser.add_argument("--ui", type=str, default=None, help="serve: UI bundle dir")
    parser.add_argument("--resume", action="store_true", help="train: continue from checkpoint")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config, seed=args.seed, out_dir=args.out)
        config.out.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            cmd_synth(config)
        elif args.command == "prepare":
            cmd_prepare(config)
        elif args.command == "train":
            cmd_train(config, resume=args.resume)
        elif args.command == "evaluate":
            cmd_evaluate(config)
        elif args.command == "analyze":
            cmd_analyze(config)
        elif args.command == "serve":
            cmd_serve(config, port=args.port, ui_dir=args.ui)
        elif args.command == "validate":
            cmd_validate(config)
    except ConfigError as exc:
        log(event="error", kind="config", message=repr(str(exc)))
        return 2
    except DataError as exc:
        log(event="error", kind="data", message=repr(str(exc)))
        return 3
    except NumericError as exc:
        log(event="error", kind="numeric", message=repr(str(exc)))
        return 4
    except LegibilityError as exc:
        log(event="error", kind="unknown", message=repr(str(exc)))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
