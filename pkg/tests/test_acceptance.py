"""Release gate: every core guarantee asserted in one place.

Each test prints one PASS line with its measured values (visible under
``pytest -rA``); a failing guarantee fails its own test. The heavy
end-to-end corpus is built once and shared by the separability and
attack legs. Everything here runs from the synthetic generator; no
external landmark tooling is needed.
"""

import math
import time

import cv2
import numpy as np
import pytest
from scipy import ndimage

from lipdyn.articulator_dynamics import TrajectoryMatrix, correlation_matrix
from lipdyn.cli import main
from lipdyn.config import Config, NetworkConfig
from lipdyn.eval_harness import evaluate_corpus, metrics_from_counts
from lipdyn.lipprint_dynamics import (
    LineSegment,
    detect_lines,
    filter_lines,
    link_segments,
)
from lipdyn.texture_features import glcm, glcm_stats, steerable_response
from lipdyn.verifier import (
    contrastive_loss,
    embed_batch,
    init_params,
    loss_and_grads,
)

E2E_SEED = 9
E2E_SUBJECTS = 10
E2E_WINDOWS = 20


# --- oracles, written independently of the implementation ------------------

def glcm_oracle(response, mask, levels, distance):
    vals = response[mask.astype(bool)]
    lo, hi = vals.min(), vals.max()
    h, w = response.shape
    counts = np.zeros((levels, levels))

    def quant(v):
        if hi == lo:
            return 0
        return min(levels - 1, max(0, int((v - lo) / (hi - lo) * levels)))

    for y in range(h):
        for x in range(w - distance):
            if mask[y, x] and mask[y, x + distance]:
                i, j = quant(response[y, x]), quant(response[y, x + distance])
                counts[i, j] += 1
                counts[j, i] += 1
    return counts / counts.sum()


def glcm_stats_oracle(P):
    n = P.shape[0]
    asm = contrast = idm = entropy = 0.0
    mu_i = mu_j = 0.0
    for i in range(n):
        for j in range(n):
            p = P[i, j]
            asm += p * p
            contrast += (i - j) ** 2 * p
            idm += p / (1.0 + (i - j) ** 2)
            mu_i += i * p
            mu_j += j * p
            if p > 0:
                entropy -= p * math.log2(p)
    var_i = var_j = cov = 0.0
    for i in range(n):
        for j in range(n):
            p = P[i, j]
            var_i += (i - mu_i) ** 2 * p
            var_j += (j - mu_j) ** 2 * p
            cov += (i - mu_i) * (j - mu_j) * p
    denom = math.sqrt(var_i * var_j)
    return np.array([asm, contrast, cov / denom if denom > 0 else 0.0,
                     idm, entropy])


def pearson_oracle(a, b):
    am, bm = a - a.mean(), b - b.mean()
    denom = math.sqrt(float((am * am).sum()) * float((bm * bm).sum()))
    if denom == 0.0:
        return 0.0
    return float((am * bm).sum()) / denom


def rotated_kernel(orientation_deg, sigma):
    radius = int(np.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=float)
    g = np.exp(-(t * t) / (2 * sigma * sigma))
    g /= g.sum()
    x, y = np.meshgrid(t, t)
    gauss = np.outer(g, g)
    theta = math.radians(orientation_deg)
    u = x * math.cos(theta) + y * math.sin(theta)
    k = ((u * u) / sigma**4 - 1.0 / sigma**2) * gauss
    return k - k.mean()


# --- feature-math guarantees -----------------------------------------------

def test_glcm_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    started = time.perf_counter()
    worst_matrix = worst_stats = 0.0
    for _ in range(200):
        response = rng.uniform(-3.0, 3.0, (16, 16))
        mask = rng.random((16, 16)) < rng.uniform(0.5, 0.9)
        mask[0, :2] = True  # guarantee at least one co-occurring pair
        got = glcm(response, mask, levels=16, distance=1)
        want = glcm_oracle(response, mask, 16, 1)
        worst_matrix = max(worst_matrix, float(np.abs(got - want).max()))
        worst_stats = max(worst_stats, float(
            np.abs(glcm_stats(got) - glcm_stats_oracle(want)).max()))
    elapsed = time.perf_counter() - started
    assert worst_matrix <= 1e-12
    assert worst_stats <= 1e-12
    assert elapsed < 10.0
    print(f"PASS glcm-oracle: 200 rasters, matrix err {worst_matrix:.2e}, "
          f"stats err {worst_stats:.2e}, {elapsed:.2f}s")


def test_trajectory_correlation_matches_direct_oracle():
    rng = np.random.default_rng(1)
    started = time.perf_counter()
    worst = 0.0
    for trial in range(100):
        x = rng.normal(size=(20, 50))
        y = rng.normal(size=(20, 50))
        if trial % 10 == 0:
            x[3, :] = 1.25          # zero-variance trajectory
            y[7, :] = -0.5
        corr = correlation_matrix(TrajectoryMatrix(x=x, y=y))
        assert np.array_equal(corr.rx, corr.rx.T)
        assert np.array_equal(corr.ry, corr.ry.T)
        for i in range(20):
            for j in range(i, 20):
                worst = max(worst, abs(corr.rx[i, j] - pearson_oracle(x[i], x[j])))
                worst = max(worst, abs(corr.ry[i, j] - pearson_oracle(y[i], y[j])))
    elapsed = time.perf_counter() - started
    assert worst <= 1e-9
    assert elapsed < 5.0
    print(f"PASS correlation-oracle: 100 matrices, max err {worst:.2e}, "
          f"{elapsed:.2f}s")


def test_steerable_zero_linearity_and_steering():
    rng = np.random.default_rng(2)
    for level in (0.0, 17.0, 255.0):
        flat = steerable_response(np.full((32, 32), level), 30.0, sigma=2.0)
        assert np.all(flat == 0.0)
    i1 = rng.uniform(0, 255, (32, 32))
    i2 = rng.uniform(0, 255, (32, 32))
    worst_linear = worst_steer = 0.0
    for orient in (0.0, 30.0, 45.0, 90.0, 137.0):
        lhs = steerable_response(2.5 * i1 - 1.25 * i2, orient)
        rhs = 2.5 * steerable_response(i1, orient) - 1.25 * steerable_response(i2, orient)
        worst_linear = max(worst_linear, float(np.abs(lhs - rhs).max()))
        direct = ndimage.correlate(i1, rotated_kernel(orient, 2.0), mode="reflect")
        got = steerable_response(i1, orient, sigma=2.0)
        worst_steer = max(worst_steer, float(np.abs(got - direct).max()))
    assert worst_linear <= 1e-9
    assert worst_steer <= 1e-9
    print(f"PASS steerable-filter: zero exact, linearity {worst_linear:.2e}, "
          f"steering {worst_steer:.2e}")


def test_hough_segments_respect_length_and_angle_bounds():
    cfg = Config().lipprint
    rng = np.random.default_rng(3)
    kept_total = 0
    for _ in range(50):
        raster = np.zeros((120, 120), dtype=np.uint8)
        for _ in range(rng.integers(3, 7)):
            x0, y0 = rng.integers(10, 110, 2)
            angle = rng.uniform(0, math.pi)
            reach = rng.integers(15, 55)
            x1 = int(np.clip(x0 + reach * math.cos(angle), 0, 119))
            y1 = int(np.clip(y0 + reach * math.sin(angle), 0, 119))
            cv2.line(raster, (int(x0), int(y0)), (x1, y1), 255, 1)
        segments = filter_lines(
            link_segments(detect_lines(raster, config=cfg),
                          cfg.link_gap, cfg.link_angle),
            cfg.min_length, cfg.angle_low, cfg.angle_high)
        for seg in segments:
            assert seg.length > 10.0
            assert 40.0 <= seg.angle <= 140.0
        kept_total += len(segments)
    assert kept_total > 0

    near = [LineSegment(p1=(10.0, 10.0), p2=(30.0, 10.0)),
            LineSegment(p1=(31.0, 10.0), p2=(50.0, 10.0))]
    assert len(link_segments(near, max_gap=2.0, max_angle=10.0)) == 1
    far = [LineSegment(p1=(10.0, 10.0), p2=(30.0, 10.0)),
           LineSegment(p1=(33.0, 10.0), p2=(50.0, 10.0))]
    assert len(link_segments(far, max_gap=2.0, max_angle=10.0)) == 2
    print(f"PASS hough-invariants: {kept_total} kept segments within bounds, "
          "1px gap merges, 3px gap preserved")


def test_network_gradients_match_finite_differences():
    net = NetworkConfig(channels=8, kernel=5, embedding_dim=32, margin=2.0)
    rng = np.random.default_rng(11)
    params = init_params(net, rng)
    dim = 40
    x1 = rng.normal(size=(3, dim))
    x2 = np.vstack([x1[0] + 0.01 * rng.normal(size=dim),
                    rng.normal(size=dim),
                    x1[2] + 50.0])
    y = np.array([1.0, 0.0, 0.0])

    def batch_loss():
        e1, e2 = embed_batch(params, x1), embed_batch(params, x2)
        d = np.sqrt(((e1 - e2) ** 2).sum(axis=1))
        return float(contrastive_loss(d, y, net.margin).mean())

    _, grads = loss_and_grads(params, x1, x2, y, net.margin)
    eps = 1e-4
    worst = 0.0
    checked = 0
    for name, arr in params.arrays().items():
        analytic = grads.arrays()[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + eps
            up = batch_loss()
            arr[idx] = orig - eps
            down = batch_loss()
            arr[idx] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(analytic[idx]), abs(numeric))
            if denom >= 1e-7:
                rel = abs(analytic[idx] - numeric) / denom
                assert rel < 1e-4, (name, idx)
                worst = max(worst, rel)
            checked += 1
    assert checked == 8 * 5 + 8 + 32 * 8 + 32
    print(f"PASS gradient-check: {checked} parameters, worst rel err {worst:.2e}")


# --- whole-system guarantees ------------------------------------------------

@pytest.fixture(scope="module")
def corpus_report():
    started = time.perf_counter()
    report = evaluate_corpus(E2E_SUBJECTS, E2E_WINDOWS, E2E_SEED, Config())
    elapsed = time.perf_counter() - started
    return report, elapsed


def test_end_to_end_separability(corpus_report):
    report, elapsed = corpus_report
    assert report.windows == E2E_SUBJECTS * E2E_WINDOWS
    assert report.core["accuracy"] >= 0.95
    assert report.eer_mean <= 0.05
    assert elapsed < 300.0
    print(f"PASS end-to-end: accuracy {report.core['accuracy']:.4f}, "
          f"EER {report.eer_mean:.4f}, {elapsed:.0f}s")


def test_static_photo_defense(corpus_report):
    report, _ = corpus_report
    genuine = report.attacks["genuine_control"]
    photo = report.attacks["static_photo"]
    assert genuine >= 0.95
    assert photo <= 0.05
    print(f"PASS static-photo: genuine accept {genuine:.4f}, "
          f"photo success {photo:.4f}")


def test_deepfake_swap_detected(corpus_report):
    report, _ = corpus_report
    genuine = report.attacks["genuine_control"]
    deepfake = report.attacks["deepfake_alpha1"]
    assert deepfake < genuine - 0.5
    print(f"PASS deepfake-proxy: swap success {deepfake:.4f} "
          f"vs genuine {genuine:.4f}")


def test_evaluate_cli_is_deterministic(tmp_path):
    outputs = []
    for run in range(2):
        report = tmp_path / f"report{run}.txt"
        points = tmp_path / f"points{run}.txt"
        code = main(["evaluate", "--subjects", "3", "--windows", "10",
                     "--seed", "7", "--report", str(report),
                     "--points", str(points)])
        assert code == 0
        outputs.append((report.read_bytes(), points.read_bytes()))
    assert outputs[0] == outputs[1]
    assert b"seed = 7" in outputs[0][0]
    print(f"PASS determinism: two seed-7 runs byte-identical "
          f"({len(outputs[0][0])} + {len(outputs[0][1])} bytes)")


def test_confusion_ratios_exact():
    core = metrics_from_counts(tp=9, fp=1, tn=9, fn=1)
    assert core["accuracy"] == 0.9
    assert core["precision"] == 0.9
    assert core["recall"] == 0.9
    assert core["f1"] == 0.9
    assert core["far"] == 0.1
    assert core["frr"] == 0.1
    print("PASS metric-arithmetic: 9/1/9/1 gives 0.9 exactly")
