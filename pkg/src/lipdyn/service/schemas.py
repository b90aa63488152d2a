"""Request and response bodies for the verification service.

Artifacts (feature files, models, templates, clips) are exchanged by
path: the service and its clients share a filesystem, and the binary
formats already carry their own versioned headers.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str
    feature_schema: str
    schema_hash: str


class ConfigResponse(BaseModel):
    config: dict


class ErrorBody(BaseModel):
    """Uniform failure shape; exit_code mirrors the CLI convention."""

    error: str
    detail: str
    exit_code: int


class ExtractRequest(BaseModel):
    landmarks: str = Field(description="landmark records file (.lmk.jsonl)")
    frames: str = Field(description="directory holding the referenced frame images")
    subject: str = "subject"
    out: str = Field(description="feature windows file to write")
    config: dict | None = None


class ExtractResponse(BaseModel):
    out: str
    windows: int
    dim: int
    subjects: list[str]


class TrainRequest(BaseModel):
    features: str
    out: str = Field(description="model file to write")
    seed: int | None = Field(None, ge=0)
    config: dict | None = None


class TrainResponse(BaseModel):
    out: str
    model_version: str
    final_train_loss: float
    windows: int


class EnrollRequest(BaseModel):
    model: str
    features: str
    subject: str
    out: str = Field(description="template file to write")
    config: dict | None = None


class EnrollResponse(BaseModel):
    out: str
    subject: str
    tau: float
    gallery_size: int
    model_version: str


class VerifyRequest(BaseModel):
    model: str
    template: str
    features: str
    smoothing: int | None = Field(None, ge=1)
    config: dict | None = None


class Decision(BaseModel):
    window: int
    accepted: bool
    score: float
    smoothed: bool


class VerifyResponse(BaseModel):
    decisions: list[Decision]
    accept_rate: float


class EvaluateRequest(BaseModel):
    subjects: int = Field(10, ge=2)
    windows: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)
    config: dict | None = None


class EvaluateResponse(BaseModel):
    report: str
    points: str
    accuracy: float
    eer_mean: float
    attacks: dict[str, float]


class AttackRequest(BaseModel):
    scenario: Literal["mimic", "static_photo", "deepfake"]
    subjects: int = Field(10, ge=2)
    windows: int = Field(20, ge=1)
    seed: int = Field(0, ge=0)
    alpha: float = Field(1.0, ge=0.0, le=1.0)
    config: dict | None = None


class AttackResponse(BaseModel):
    scenario: str
    success_rate: float
    genuine_control: float


class SynthRequest(BaseModel):
    out_dir: str
    subjects: int = Field(2, ge=1)
    frames: int = Field(49, ge=2)
    seed: int = Field(0, ge=0)


class SynthResponse(BaseModel):
    clips: list[str]
    sidecars: list[str]
    frames: int
