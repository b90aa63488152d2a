"""Window feature assembly, Siamese embedding, and verification.

The per-window feature row concatenates four blocks (static shape,
texture, lip-print motion, articulator) plus four presence flags. A raw
row carries the texture block pre-projection (240 orientation stats);
fitting the feature transform on a training split freezes 30 small PCA
projections and a z-normalization record, producing the 476-value
network input. The twin network (shared weights) is a 1-D convolution,
rectifier, global average pool, and a dense map to a 32-dim embedding,
trained with contrastive loss by plain momentum descent implemented
here with explicit gradients.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .config import NetworkConfig, TrainingConfig
from .errors import (
    DimensionMismatch,
    EmptySet,
    IoFailure,
    NonFiniteLoss,
    NoNegativePairs,
    NoPositivePairs,
    TooFewWindows,
    VersionMismatch,
)
from .texture_features import PcaBasis, pca_fit

# raw row layout: static 8 | texture 6x5x8=240 | lipprint 21 | articulator 383 | flags 4
RAW_STATIC = slice(0, 8)
RAW_TEXTURE = slice(8, 248)
RAW_LIPPRINT = slice(248, 269)
RAW_ARTICULATOR = slice(269, 652)
RAW_FLAGS = slice(652, 656)
RAW_DIM = 656

# assembled layout: static 8 | texture 6x5x2=60 | lipprint 21 | articulator 383 | flags 4
OUT_STATIC = slice(0, 8)
OUT_TEXTURE = slice(8, 68)
OUT_LIPPRINT = slice(68, 89)
OUT_ARTICULATOR = slice(89, 472)
OUT_FLAGS = slice(472, 476)
OUT_DIM = 476

FEATURE_SCHEMA = "raw-windows/656/static-texture-lipprint-articulator-flags/1"


def schema_hash() -> str:
    return hashlib.sha256(FEATURE_SCHEMA.encode()).hexdigest()[:16]


@dataclass
class FeatureTransform:
    """Frozen training-split feature post-processing.

    Thirty PCA bases (region-major, then statistic) reduce each raw
    8-orientation texture vector to 2 components; the normalization
    record z-scores the 472 feature values. Presence flags pass through
    unscaled, and absent blocks are re-zeroed after normalization so
    they contribute nothing to the embedding.
    """

    pca_bases: list[PcaBasis]
    norm_mean: np.ndarray  # (472,)
    norm_std: np.ndarray   # (472,)

    @classmethod
    def fit(cls, raw: np.ndarray) -> "FeatureTransform":
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        if raw.shape[1] != RAW_DIM:
            raise DimensionMismatch(f"raw rows must have {RAW_DIM} values, got {raw.shape[1]}")
        texture = raw[:, RAW_TEXTURE].reshape(-1, 6, 5, 8)
        bases = [pca_fit(texture[:, r, s, :]) for r in range(6) for s in range(5)]
        projected = cls._project(texture, bases)
        feats = np.concatenate(
            [raw[:, RAW_STATIC], projected, raw[:, RAW_LIPPRINT], raw[:, RAW_ARTICULATOR]],
            axis=1,
        )
        mean = feats.mean(axis=0)
        std = feats.std(axis=0)
        std[std == 0] = 1.0
        return cls(pca_bases=bases, norm_mean=mean, norm_std=std)

    @staticmethod
    def _project(texture: np.ndarray, bases: list[PcaBasis]) -> np.ndarray:
        n = texture.shape[0]
        out = np.empty((n, 60), dtype=np.float64)
        k = 0
        for r in range(6):
            for s in range(5):
                basis = bases[k]
                out[:, 2 * k:2 * k + 2] = (texture[:, r, s, :] - basis.mean) @ basis.components.T
                k += 1
        return out

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Raw rows (N, 656) -> normalized network inputs (N, 476)."""
        single = np.asarray(raw).ndim == 1
        raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
        if raw.shape[1] != RAW_DIM:
            raise DimensionMismatch(f"raw rows must have {RAW_DIM} values, got {raw.shape[1]}")
        texture = raw[:, RAW_TEXTURE].reshape(-1, 6, 5, 8)
        feats = np.concatenate(
            [raw[:, RAW_STATIC], self._project(texture, self.pca_bases),
             raw[:, RAW_LIPPRINT], raw[:, RAW_ARTICULATOR]],
            axis=1,
        )
        feats = (feats - self.norm_mean) / self.norm_std
        flags = raw[:, RAW_FLAGS]
        blocks = (OUT_STATIC, OUT_TEXTURE, OUT_LIPPRINT, OUT_ARTICULATOR)
        for b, sl in enumerate(blocks):
            absent = flags[:, b] == 0
            feats[absent, sl] = 0.0
        out = np.concatenate([feats, flags], axis=1)
        return out[0] if single else out


@dataclass
class NetParams:
    """Shared twin weights; a single storage serves both branches."""

    w_conv: np.ndarray  # (channels, kernel)
    b_conv: np.ndarray  # (channels,)
    w_fc: np.ndarray    # (embedding, channels)
    b_fc: np.ndarray    # (embedding,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w_conv": self.w_conv, "b_conv": self.b_conv,
                "w_fc": self.w_fc, "b_fc": self.b_fc}

    def copy(self) -> "NetParams":
        return NetParams(**{k: v.copy() for k, v in self.arrays().items()})


def init_params(config: NetworkConfig, rng: np.random.Generator) -> NetParams:
    k, kern, emb = config.channels, config.kernel, config.embedding_dim
    return NetParams(
        w_conv=rng.normal(0.0, 1.0 / np.sqrt(kern), (k, kern)),
        b_conv=np.zeros(k),
        w_fc=rng.normal(0.0, 1.0 / np.sqrt(k), (emb, k)),
        b_fc=np.zeros(emb),
    )


def _forward(params: NetParams, X: np.ndarray):
    """Batch forward pass; returns embeddings and the backprop cache."""
    kern = params.w_conv.shape[1]
    windows = np.lib.stride_tricks.sliding_window_view(X, kern, axis=1)
    b, t, _ = windows.shape
    flat = windows.reshape(b * t, kern)
    pre = flat @ params.w_conv.T
    pre += params.b_conv
    pre = pre.reshape(b, t, -1)
    mask = pre > 0
    np.maximum(pre, 0.0, out=pre)
    g = pre.mean(axis=1)
    emb = g @ params.w_fc.T + params.b_fc
    return emb, (flat, mask, g)


def embed_batch(params: NetParams, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return _forward(params, X)[0]


def _backward(params: NetParams, cache, d_emb: np.ndarray) -> NetParams:
    flat, mask, g = cache
    d_wfc = d_emb.T @ g
    d_bfc = d_emb.sum(axis=0)
    dg = d_emb @ params.w_fc
    b, t, c = mask.shape
    dg /= t
    dpre = np.where(mask, dg[:, None, :], 0.0)
    dpre_flat = dpre.reshape(b * t, c)
    d_wconv = dpre_flat.T @ flat
    d_bconv = dpre_flat.sum(axis=0)
    return NetParams(w_conv=d_wconv, b_conv=d_bconv, w_fc=d_wfc, b_fc=d_bfc)


def contrastive_loss(d: np.ndarray, y: np.ndarray, margin: float) -> np.ndarray:
    """Per-pair loss: y d^2 + (1-y) max(0, m-d)^2."""
    hinge = np.maximum(0.0, margin - d)
    return y * d * d + (1.0 - y) * hinge * hinge


def loss_and_grads(params: NetParams, x1: np.ndarray, x2: np.ndarray,
                   y: np.ndarray, margin: float) -> tuple[float, NetParams]:
    """Mean contrastive loss over a pair batch and its parameter gradients."""
    b = len(y)
    # one concatenated pass for both twins; the batch-sum in _backward then
    # accumulates the shared-weight gradients of both branches in one go
    emb, cache = _forward(params, np.concatenate([x1, x2], axis=0))
    e1, e2 = emb[:b], emb[b:]
    diff = e1 - e2
    d = np.sqrt((diff * diff).sum(axis=1))
    losses = contrastive_loss(d, y, margin)
    loss = float(losses.mean())

    # dL/d(diff): positive pairs 2*diff; negative pairs -2(m-d)/d * diff inside
    # the margin, zero outside and at d == 0 (hinge subgradient)
    scale = np.zeros(b)
    pos = y == 1
    scale[pos] = 2.0
    neg_active = (~pos) & (d > 0) & (d < margin)
    scale[neg_active] = -2.0 * (margin - d[neg_active]) / d[neg_active]
    d_diff = (scale[:, None] * diff) / b

    return loss, _backward(params, cache, np.concatenate([d_diff, -d_diff], axis=0))


def train_network(x1: np.ndarray, x2: np.ndarray, y: np.ndarray,
                  net: NetworkConfig, training: TrainingConfig,
                  val: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
                  ) -> tuple[NetParams, float, float | None]:
    """Deterministic minibatch momentum descent on contrastive loss.

    Returns the trained parameters with the final-epoch mean train loss
    and, when a validation triple is given, the validation loss.
    """
    y = np.asarray(y, dtype=np.float64)
    if not (y == 1).any():
        raise NoPositivePairs("training pairs contain no same-subject pair")
    if not (y == 0).any():
        raise NoNegativePairs("training pairs contain no different-subject pair")

    rng = np.random.default_rng(training.seed)
    params = init_params(net, rng)
    velocity = NetParams(**{k: np.zeros_like(v) for k, v in params.arrays().items()})
    n = len(y)
    last_epoch_loss = np.inf
    for _ in range(training.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, training.batch_size):
            sel = order[start:start + training.batch_size]
            loss, grads = loss_and_grads(params, x1[sel], x2[sel], y[sel], net.margin)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"training diverged, loss={loss!r}")
            for key, vel in velocity.arrays().items():
                vel *= training.momentum
                vel -= training.learning_rate * grads.arrays()[key]
                params.arrays()[key] += vel
            epoch_losses.append(loss)
        last_epoch_loss = float(np.mean(epoch_losses))
    val_loss = None
    if val is not None:
        vx1, vx2, vy = val
        e1, _ = _forward(params, vx1)
        e2, _ = _forward(params, vx2)
        d = np.sqrt(((e1 - e2) ** 2).sum(axis=1))
        val_loss = float(contrastive_loss(d, np.asarray(vy, float), net.margin).mean())
    return params, last_epoch_loss, val_loss


def distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"embedding shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def choose_threshold(genuine: np.ndarray, impostor: np.ndarray) -> float:
    """Equal-error operating point over candidate thresholds.

    Accept means score <= threshold. The FAR-FRR difference is
    nondecreasing in the threshold; a zero plateau returns its midpoint,
    otherwise the sign flip is linearly interpolated (ties toward the
    lower candidate).
    """
    genuine = np.sort(np.asarray(genuine, dtype=np.float64))
    impostor = np.sort(np.asarray(impostor, dtype=np.float64))
    if genuine.size == 0 or impostor.size == 0:
        raise EmptySet("both genuine and impostor score sets are required")

    candidates = np.unique(np.concatenate([genuine, impostor]))

    def diff(tau: float) -> float:
        far = np.count_nonzero(impostor <= tau) / impostor.size
        frr = np.count_nonzero(genuine > tau) / genuine.size
        return far - frr

    diffs = np.array([diff(c) for c in candidates])

    zero = np.flatnonzero(diffs == 0.0)
    if zero.size:
        first = zero[0]
        later = np.flatnonzero(diffs[first:] != 0.0)
        if later.size:
            return float((candidates[first] + candidates[first + later[0]]) / 2.0)
        return float(candidates[first])

    flip = np.flatnonzero((diffs[:-1] < 0) & (diffs[1:] > 0))
    if flip.size:
        a = flip[0]
        da, db = diffs[a], diffs[a + 1]
        ca, cb = candidates[a], candidates[a + 1]
        if db == da:
            return float(ca)
        return float(ca + (0.0 - da) * (cb - ca) / (db - da))
    # no crossing: every candidate sits on one side; take the closest to zero
    return float(candidates[int(np.argmin(np.abs(diffs)))])


@dataclass
class SiameseModel:
    """Trained verifier: twin weights plus the frozen feature transform."""

    net: NetworkConfig
    params: NetParams
    transform: FeatureTransform
    seed: int
    final_train_loss: float
    final_val_loss: float | None = None

    @property
    def version(self) -> str:
        blob = json.dumps(self.net.model_dump(), sort_keys=True).encode()
        h = hashlib.sha256(blob)
        for arr in self.params.arrays().values():
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def embed(self, assembled: np.ndarray) -> np.ndarray:
        v = np.asarray(assembled, dtype=np.float64)
        single = v.ndim == 1
        v = np.atleast_2d(v)
        if v.shape[1] != OUT_DIM:
            raise DimensionMismatch(f"expected {OUT_DIM}-dim inputs, got {v.shape[1]}")
        out = embed_batch(self.params, v)
        return out[0] if single else out

    def embed_raw(self, raw: np.ndarray) -> np.ndarray:
        return self.embed(self.transform.apply(raw))

    def save(self, path) -> None:
        arrays = dict(self.params.arrays())
        arrays["norm_mean"] = self.transform.norm_mean
        arrays["norm_std"] = self.transform.norm_std
        for i, basis in enumerate(self.transform.pca_bases):
            arrays[f"pca{i:02d}_mean"] = basis.mean
            arrays[f"pca{i:02d}_components"] = basis.components
            arrays[f"pca{i:02d}_variances"] = basis.variances
        header = {
            "kind": "siamese-verifier",
            "format": 1,
            "net": self.net.model_dump(),
            "seed": self.seed,
            "final_train_loss": self.final_train_loss,
            "final_val_loss": self.final_val_loss,
            "schema": FEATURE_SCHEMA,
            "arrays": [[k, list(arrays[k].shape)] for k in sorted(arrays)],
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        body = b"".join(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes()
                        for k in sorted(arrays))
        payload = b"LDYNMDL1" + len(head).to_bytes(4, "little") + head + body
        digest = hashlib.sha256(payload).digest()
        try:
            with open(path, "wb") as fh:
                fh.write(payload + digest)
        except OSError as exc:
            raise IoFailure(f"cannot write model to {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "SiameseModel":
        try:
            blob = open(path, "rb").read()
        except OSError as exc:
            raise IoFailure(f"cannot read model from {path}: {exc}") from exc
        if len(blob) < 44 or blob[:8] != b"LDYNMDL1":
            raise IoFailure(f"{path} is not a verifier model file")
        payload, digest = blob[:-32], blob[-32:]
        if hashlib.sha256(payload).digest() != digest:
            raise IoFailure(f"{path} failed its integrity check")
        hlen = int.from_bytes(payload[8:12], "little")
        header = json.loads(payload[12:12 + hlen].decode("utf-8"))
        if header.get("schema") != FEATURE_SCHEMA:
            raise VersionMismatch(f"model schema {header.get('schema')!r} unsupported")
        offset = 12 + hlen
        arrays = {}
        for name, shape in header["arrays"]:
            size = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(payload, dtype="<f8", count=size, offset=offset)
            arrays[name] = arr.reshape(shape).copy()
            offset += size * 8
        bases = [
            PcaBasis(mean=arrays[f"pca{i:02d}_mean"],
                     components=arrays[f"pca{i:02d}_components"],
                     variances=arrays[f"pca{i:02d}_variances"])
            for i in range(30)
        ]
        transform = FeatureTransform(pca_bases=bases,
                                     norm_mean=arrays["norm_mean"],
                                     norm_std=arrays["norm_std"])
        params = NetParams(w_conv=arrays["w_conv"], b_conv=arrays["b_conv"],
                           w_fc=arrays["w_fc"], b_fc=arrays["b_fc"])
        return cls(net=NetworkConfig(**header["net"]), params=params,
                   transform=transform, seed=header["seed"],
                   final_train_loss=header["final_train_loss"],
                   final_val_loss=header["final_val_loss"])


@dataclass
class Template:
    """An enrolled subject: embedding gallery plus decision threshold."""

    subject: str
    gallery: np.ndarray  # (n, embedding_dim)
    tau: float
    model_version: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.gallery = np.atleast_2d(np.asarray(self.gallery, dtype=np.float64))
        if self.gallery.shape[0] < 1:
            raise ValueError("template gallery must hold at least one embedding")
        if not self.tau > 0:
            raise ValueError("decision threshold must be positive")

    def save(self, path) -> None:
        doc = {
            "kind": "subject-template",
            "format": 1,
            "subject": self.subject,
            "tau": self.tau,
            "model_version": self.model_version,
            "metadata": self.metadata,
            "gallery": [[float(v) for v in row] for row in self.gallery],
        }
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(doc, fh, sort_keys=True, indent=1)
                fh.write("\n")
        except OSError as exc:
            raise IoFailure(f"cannot write template to {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Template":
        try:
            doc = json.loads(open(path, "r", encoding="utf-8").read())
        except OSError as exc:
            raise IoFailure(f"cannot read template from {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise IoFailure(f"{path} is not a template file: {exc.msg}") from exc
        if doc.get("kind") != "subject-template":
            raise IoFailure(f"{path} is not a template file")
        return cls(subject=doc["subject"], gallery=np.array(doc["gallery"]),
                   tau=doc["tau"], model_version=doc["model_version"],
                   metadata=doc.get("metadata", {}))


def enroll(model: SiameseModel, subject_windows: np.ndarray,
           impostor_windows: np.ndarray, subject: str = "subject",
           min_windows: int = 3) -> Template:
    """Enroll a subject from assembled windows, calibrating the threshold.

    Genuine scores are leave-one-out gallery distances; impostor scores
    come from the provided impostor cohort, scored like verification.
    """
    subject_windows = np.atleast_2d(subject_windows)
    if subject_windows.shape[0] < min_windows:
        raise TooFewWindows(
            f"enrollment needs >= {min_windows} windows, got {subject_windows.shape[0]}")
    gallery = model.embed(subject_windows)
    genuine = []
    for i in range(gallery.shape[0]):
        others = np.delete(gallery, i, axis=0)
        genuine.append(np.sqrt(((others - gallery[i]) ** 2).sum(axis=1)).min())
    impostor_windows = np.atleast_2d(impostor_windows)
    if impostor_windows.shape[0] == 0:
        raise EmptySet("enrollment needs impostor windows for threshold calibration")
    probes = model.embed(impostor_windows)
    impostor = [
        float(np.sqrt(((gallery - p) ** 2).sum(axis=1)).min()) for p in probes
    ]
    tau = choose_threshold(np.array(genuine), np.array(impostor))
    if tau <= 0:
        tau = float(np.nextafter(0.0, 1.0))
    return Template(subject=subject, gallery=gallery, tau=tau,
                    model_version=model.version,
                    metadata={"windows": int(subject_windows.shape[0]),
                              "impostors": int(impostor_windows.shape[0])})


def verify(template: Template, window: np.ndarray, model: SiameseModel
           ) -> tuple[bool, float]:
    """Score one assembled window against a template: accept iff score <= tau."""
    if template.model_version != model.version:
        raise VersionMismatch(
            f"template built for model {template.model_version}, got {model.version}")
    emb = model.embed(window)
    score = float(np.sqrt(((template.gallery - emb) ** 2).sum(axis=1)).min())
    return score <= template.tau, score


def verify_stream(template: Template, windows: np.ndarray, model: SiameseModel,
                  smoothing_window: int = 5):
    """Continuous verification: per-window decisions plus a trailing-majority vote."""
    history: list[bool] = []
    for window in np.atleast_2d(windows):
        decision, score = verify(template, window, model)
        history.append(decision)
        recent = history[-smoothing_window:]
        smoothed = sum(recent) * 2 >= len(recent)
        yield decision, score, smoothed
