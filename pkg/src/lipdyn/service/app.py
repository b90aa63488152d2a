"""HTTP face of the engine: every pipeline stage behind one endpoint.

The service owns a base configuration; any request may carry a full or
partial config override, merged section-wise for that request only.
Engine errors surface as structured JSON bodies whose ``exit_code``
mirrors the CLI convention (2 data, 3 numeric).
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import Config
from ..errors import EmptySet, IoFailure, LipdynError, MalformedRecord
from ..eval_harness import (
    attack_deepfake_proxy,
    attack_mimic,
    attack_static_photo,
    build_system,
    evaluate_corpus,
    genuine_control,
    synth_generate,
    synth_photo_probes,
    train_verifier,
)
from ..ingest import parse_landmark_file
from ..pipeline import FEATURE_SCHEMA, FeatureSet, extract_clip, schema_hash
from ..synth import render_clip, subject_params, write_clip
from ..verifier import SiameseModel, Template, enroll, verify_stream
from . import schemas


def create_app(config: Config | None = None) -> FastAPI:
    base = config or Config()
    app = FastAPI(title="lipdyn", version=__version__)

    @app.exception_handler(LipdynError)
    async def _engine_error(request, exc: LipdynError):
        status = 500 if exc.exit_code == 3 else 400
        return JSONResponse(status_code=status, content=schemas.ErrorBody(
            error=exc.kind, detail=str(exc), exit_code=exc.exit_code).model_dump())

    def merged(overrides: dict | None) -> Config:
        return base.merged(overrides) if overrides else base

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__,
                                      feature_schema=FEATURE_SCHEMA,
                                      schema_hash=schema_hash())

    @app.get("/config", response_model=schemas.ConfigResponse)
    def config_endpoint():
        return schemas.ConfigResponse(config=base.model_dump(mode="json"))

    @app.post("/extract", response_model=schemas.ExtractResponse)
    def extract(req: schemas.ExtractRequest):
        cfg = merged(req.config)
        records = parse_landmark_file(req.landmarks)
        frames_dir = Path(req.frames)
        images = []
        for rec in records:
            if rec.image_ref is None:
                raise MalformedRecord("record lacks an image reference",
                                      rec.frame_index)
            img = cv2.imread(str(frames_dir / rec.image_ref), cv2.IMREAD_COLOR)
            if img is None:
                raise IoFailure(f"cannot read frame image {frames_dir / rec.image_ref}")
            images.append(img)
        features = extract_clip(images, records, req.subject, cfg)
        features.save(req.out)
        return schemas.ExtractResponse(out=req.out, windows=features.count,
                                       dim=int(features.rows.shape[1]),
                                       subjects=features.subjects)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        cfg = merged(req.config)
        if req.seed is not None:
            cfg = cfg.merged({"training": {"seed": req.seed}})
        features = FeatureSet.load(req.features)
        model = train_verifier(features.rows, features.subject_index, cfg)
        model.save(req.out)
        return schemas.TrainResponse(out=req.out, model_version=model.version,
                                     final_train_loss=model.final_train_loss,
                                     windows=features.count)

    @app.post("/enroll", response_model=schemas.EnrollResponse)
    def enroll_subject(req: schemas.EnrollRequest):
        model = SiameseModel.load(req.model)
        features = FeatureSet.load(req.features)
        if req.subject not in features.subjects:
            raise EmptySet(f"subject {req.subject!r} has no windows in {req.features}")
        s = features.subjects.index(req.subject)
        own = features.subject_index == s
        assembled = model.transform.apply(features.rows)
        template = enroll(model, assembled[own], assembled[~own], subject=req.subject)
        template.save(req.out)
        return schemas.EnrollResponse(out=req.out, subject=req.subject,
                                      tau=template.tau,
                                      gallery_size=int(template.gallery.shape[0]),
                                      model_version=template.model_version)

    @app.post("/verify", response_model=schemas.VerifyResponse)
    def verify_windows(req: schemas.VerifyRequest):
        cfg = merged(req.config)
        model = SiameseModel.load(req.model)
        template = Template.load(req.template)
        features = FeatureSet.load(req.features)
        assembled = model.transform.apply(features.rows)
        smoothing = req.smoothing or cfg.verify.smoothing_window
        decisions = [
            schemas.Decision(window=i, accepted=bool(ok), score=float(score),
                             smoothed=bool(smoothed))
            for i, (ok, score, smoothed)
            in enumerate(verify_stream(template, assembled, model, smoothing))
        ]
        rate = float(np.mean([d.accepted for d in decisions])) if decisions else 0.0
        return schemas.VerifyResponse(decisions=decisions, accept_rate=rate)

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(req: schemas.EvaluateRequest):
        cfg = merged(req.config)
        report = evaluate_corpus(req.subjects, req.windows, req.seed, cfg)
        return schemas.EvaluateResponse(report=report.render(),
                                        points=report.points_text(),
                                        accuracy=report.core["accuracy"],
                                        eer_mean=report.eer_mean,
                                        attacks=report.attacks)

    @app.post("/attack", response_model=schemas.AttackResponse)
    def attack(req: schemas.AttackRequest):
        cfg = merged(req.config).merged({"training": {"seed": req.seed}})
        features = synth_generate(req.subjects, req.windows, req.seed, cfg)
        system, held_out = build_system(features, cfg)
        control = genuine_control(system, features, held_out)
        if req.scenario == "mimic":
            rate = attack_mimic(system, features, held_out)
        elif req.scenario == "static_photo":
            photo = synth_photo_probes(req.subjects, min(3, req.windows), req.seed, cfg)
            rate = attack_static_photo(system, photo)
        else:
            rate = attack_deepfake_proxy(system, features, held_out, req.alpha)
        return schemas.AttackResponse(scenario=req.scenario, success_rate=rate,
                                      genuine_control=control)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        out = Path(req.out_dir)
        clips, sidecars = [], []
        for idx in range(req.subjects):
            params = subject_params(req.seed, idx)
            images, records = render_clip(params, req.frames, req.seed, idx)
            clip_dir = out / f"subject{idx:02d}"
            sidecar = write_clip(clip_dir, images, records)
            clips.append(str(clip_dir))
            sidecars.append(str(sidecar))
        return schemas.SynthResponse(clips=clips, sidecars=sidecars,
                                     frames=req.frames)

    return app


app = create_app()
