"""Engine configuration.

Every tunable of the pipeline lives here with its declared default, so a
dumped config file is a complete, self-documenting record of an
experiment. Validation mirrors the preconditions of the module that
consumes each field.
"""

from __future__ import annotations

import json
from pathlib import Path

from pydantic import BaseModel, Field, model_validator


class RoiConfig(BaseModel):
    """Mouth crop and normalization."""

    margin: float = Field(0.15, ge=0.0, lt=2.0, description="bbox expansion fraction per side")
    width: int = Field(250, frozen=True)
    height: int = Field(110, frozen=True)


class ContourConfig(BaseModel):
    """Piecewise-polynomial lip contour fitting."""

    degree: int = Field(2, ge=1, le=4)
    points_per_segment: int = Field(3, ge=2, description="landmarks per polynomial segment")
    samples_per_segment: int = Field(8, ge=2, description="polygon samples per segment when rasterizing")


class TextureConfig(BaseModel):
    """Steerable filtering and co-occurrence statistics."""

    sigma: float = Field(2.0, gt=0.0, description="Gaussian scale of the filter bank, px")
    glcm_levels: int = Field(16, ge=2)
    glcm_distance: int = Field(1, ge=1)


class LipprintConfig(BaseModel):
    """Lip-print enhancement, edge detection and line extraction."""

    clahe_clip: float = Field(2.0, gt=0.0)
    clahe_tiles: int = Field(8, ge=1)
    canny_low: int = Field(50, ge=0)
    canny_high: int = Field(150, ge=1)
    canny_aperture: int = Field(3)
    bilateral_d: int = Field(5, ge=1)
    bilateral_sigma_color: float = Field(75.0, gt=0.0)
    bilateral_sigma_space: float = Field(75.0, gt=0.0)
    hough_rho: float = Field(1.0, gt=0.0)
    hough_theta_deg: float = Field(1.0, gt=0.0)
    hough_votes: int = Field(10, ge=1)
    hough_min_length: float = Field(5.0, gt=0.0)
    hough_max_gap: float = Field(2.0, ge=0.0)
    link_gap: float = Field(2.0, gt=0.0, description="merge segments with endpoint gap below this, px")
    link_angle: float = Field(10.0, ge=0.0, description="max angle difference for merging, deg")
    min_length: float = Field(10.0, ge=0.0, description="keep segments strictly longer, px")
    angle_low: float = Field(40.0, ge=0.0, le=180.0)
    angle_high: float = Field(140.0, ge=0.0, le=180.0)


class MatchingConfig(BaseModel):
    """Cross-frame line matching and motion vectors."""

    w_center: float = Field(1.0, ge=0.0, description="cost weight per px of center movement")
    w_length: float = Field(0.5, ge=0.0, description="cost weight per px of length difference")
    w_angle: float = Field(0.2, ge=0.0, description="cost weight per deg of angle difference")
    max_center_distance: float = Field(15.0, gt=0.0)
    max_vectors: int = Field(8, ge=1)


class ArticulatorConfig(BaseModel):
    """Mouth-openness levels."""

    openness_low: float = Field(0.33, gt=0.0, lt=1.0)
    openness_high: float = Field(0.66, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _ordered(self) -> "ArticulatorConfig":
        if not self.openness_low < self.openness_high:
            raise ValueError("openness thresholds must satisfy low < high")
        return self


class WindowConfig(BaseModel):
    """Feature extraction windowing."""

    length: int = Field(25, ge=2, description="frames per feature window")
    stride: int = Field(12, ge=1)


class NetworkConfig(BaseModel):
    """Twin embedding network shape."""

    channels: int = Field(8, description="convolution channels; supported configurations: 2, 4, 8")
    kernel: int = Field(5, ge=1)
    embedding_dim: int = Field(32, ge=1)
    margin: float = Field(1.0, gt=0.0)

    @model_validator(mode="after")
    def _channels_supported(self) -> "NetworkConfig":
        if self.channels not in (2, 4, 8):
            raise ValueError("channels must be one of 2, 4, 8")
        return self


class TrainingConfig(BaseModel):
    """Contrastive training schedule."""

    learning_rate: float = Field(1e-3, gt=0.0)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(50, ge=1)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    seed: int = Field(0, ge=0)
    max_pairs: int = Field(1200, ge=2, description="cap on generated training pairs")


class VerifyConfig(BaseModel):
    """Decision smoothing for continuous verification."""

    smoothing_window: int = Field(5, ge=1)


class EvalConfig(BaseModel):
    """Cross-validation protocol."""

    folds: int = Field(10, ge=2)
    subject_disjoint: bool = Field(False, description="partition subjects instead of windows")


class Config(BaseModel):
    """Complete engine configuration with declared defaults."""

    roi: RoiConfig = Field(default_factory=RoiConfig)
    contour: ContourConfig = Field(default_factory=ContourConfig)
    texture: TextureConfig = Field(default_factory=TextureConfig)
    lipprint: LipprintConfig = Field(default_factory=LipprintConfig)
    matching: MatchingConfig = Field(default_factory=MatchingConfig)
    articulator: ArticulatorConfig = Field(default_factory=ArticulatorConfig)
    window: WindowConfig = Field(default_factory=WindowConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.dump_json(), encoding="utf-8")

    def dump_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def merged(self, overrides: dict) -> "Config":
        """Return a copy with nested override values applied."""
        base = self.model_dump()
        for section, values in overrides.items():
            if isinstance(values, dict) and isinstance(base.get(section), dict):
                base[section].update(values)
            else:
                base[section] = values
        return Config.model_validate(base)
