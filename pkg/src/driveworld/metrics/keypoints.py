"""Keypoint detection, matching, and the multiview-consistency (KPM) score.

Deterministic Harris corners with normalized-patch descriptors replace a
learned matcher: keypoints are restricted to the geometric overlap strips of
adjacent views, matched by mutual nearest neighbour under normalized cross
correlation with a ratio test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter

from ..world import CameraRig
from ..world.camera import ground_from_pixels

PATCH = 9                 # descriptor patch side
NMS_RADIUS = 3
NCC_MIN = 0.8
RATIO_TEST = 0.9
MAX_POINTS = 60
HARRIS_K = 0.05
RESPONSE_MIN = 1e-8


@dataclass
class Keypoint:
    x: float
    y: float
    descriptor: np.ndarray          # raw 9x9 patch values, flattened
    mask: np.ndarray | None = None  # per-sample validity (None = all valid)
    ground: tuple[float, float] | None = None  # rig-frame ground point


def _gray(image: np.ndarray) -> np.ndarray:
    if image.ndim == 3:
        r, g, b = image[0], image[1], image[2]
        return 0.299 * r + 0.587 * g + 0.114 * b
    return image


def harris_response(gray: np.ndarray) -> np.ndarray:
    gy, gx = np.gradient(gray.astype(np.float64))
    sxx = gaussian_filter(gx * gx, 1.0)
    syy = gaussian_filter(gy * gy, 1.0)
    sxy = gaussian_filter(gx * gy, 1.0)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - HARRIS_K * trace * trace


def _bilinear(gray: np.ndarray, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    us = np.clip(us, 0.0, w - 1.001)
    vs = np.clip(vs, 0.0, h - 1.001)
    u0 = us.astype(int)
    v0 = vs.astype(int)
    fu = us - u0
    fv = vs - v0
    return ((1 - fu) * (1 - fv) * gray[v0, u0] + fu * (1 - fv) * gray[v0, u0 + 1]
            + (1 - fu) * fv * gray[v0 + 1, u0] + fu * fv * gray[v0 + 1, u0 + 1])


def _subpixel(resp: np.ndarray, x: int, y: int) -> tuple[float, float]:
    """Quadratic peak refinement of the Harris response."""
    h, w = resp.shape

    def refine(c0: float, c1: float, c2: float) -> float:
        denom = c0 - 2.0 * c1 + c2
        if abs(denom) < 1e-12:
            return 0.0
        return float(np.clip(0.5 * (c0 - c2) / denom, -0.5, 0.5))

    dx = refine(resp[y, x - 1], resp[y, x], resp[y, x + 1]) if 0 < x < w - 1 else 0.0
    dy = refine(resp[y - 1, x], resp[y, x], resp[y + 1, x]) if 0 < y < h - 1 else 0.0
    return x + dx, y + dy


def _rectified_descriptor(gray: np.ndarray, u: float, v: float, rig: CameraRig,
                          view: int) -> tuple[np.ndarray, np.ndarray] | None:
    """A 9x9 patch sampled on a rig-frame ground grid around the keypoint's
    ground intersection, plus a validity mask for off-image samples.

    All cameras share one mount point, so adjacent views reconstruct the same
    ground patch; plain image patches shear apart under the 60-degree yaw gap.
    Samples outside the frame are masked; matching correlates co-visible
    support only.
    """
    h, w = gray.shape
    cy = (h - 1) / 2.0
    if v <= cy + 0.5:
        return None
    g = ground_from_pixels(np.array([u]), np.array([v]), rig, view)[0]
    d = float(np.hypot(g[0], g[1]))
    scale = max(0.18, d * 1.1 / rig.focal)
    half = PATCH // 2
    offs = np.arange(-half, half + 1) * scale
    gx = g[0] + offs[None, :].repeat(PATCH, 0)
    gy = g[1] + offs[:, None].repeat(PATCH, 1)
    yaw = rig.yaw_offsets[view]
    c, s = math.cos(yaw), math.sin(yaw)
    fwd = c * gx + s * gy
    left = -s * gx + c * gy
    if (fwd <= 0.2).any():
        return None
    f = rig.focal
    cx = (w - 1) / 2.0
    us = cx + f * (-left) / fwd
    vs = cy + f * rig.mount_height / fwd
    valid = ((us >= 0) & (us <= w - 1) & (vs >= cy) & (vs <= h - 1)).ravel()
    if valid.sum() < PATCH * PATCH // 2:
        return None
    return _bilinear(gray, us, vs).ravel(), valid


def detect_keypoints(image: np.ndarray, columns: tuple[int, int] | None = None,
                     max_points: int = MAX_POINTS,
                     rig: CameraRig | None = None, view: int = 0) -> list[Keypoint]:
    """Top corner responses with non-max suppression; optionally restricted to
    a column strip (the overlap region).

    With a rig, descriptors are ground-rectified (view-invariant); without,
    they are plain image patches.
    """
    gray = _gray(np.asarray(image))
    resp = harris_response(gray)
    h, w = resp.shape
    half = PATCH // 2
    mask = np.zeros_like(resp, dtype=bool)
    c0, c1 = (0, w) if columns is None else columns
    mask[half: h - half, max(c0, half): min(c1, w - half)] = True
    resp = np.where(mask, resp, -np.inf)
    local_max = resp == maximum_filter(resp, size=2 * NMS_RADIUS + 1)
    ys, xs = np.nonzero(local_max & (resp > RESPONSE_MIN))
    if len(xs) == 0:
        return []
    order = np.argsort(-resp[ys, xs], kind="stable")[:max_points]
    out = []
    resp_clean = np.nan_to_num(resp, neginf=0.0)
    for i in order:
        y, x = int(ys[i]), int(xs[i])
        if rig is not None:
            xr, yr = _subpixel(resp_clean, x, y)
            desc = _rectified_descriptor(gray, xr, yr, rig, view)
            if desc is None:
                continue
            g = ground_from_pixels(np.array([xr]), np.array([yr]), rig, view)[0]
            out.append(Keypoint(xr, yr, desc[0], desc[1],
                                ground=(float(g[0]), float(g[1]))))
            continue
        patch = gray[y - half: y + half + 1, x - half: x + half + 1].astype(np.float64)
        patch = patch - patch.mean()
        norm = np.linalg.norm(patch)
        if norm < 1e-9:
            continue
        out.append(Keypoint(float(x), float(y), (patch / norm).ravel()))
    return out


def _ncc_matrix(kps_a: list[Keypoint], kps_b: list[Keypoint]) -> np.ndarray:
    """Pairwise NCC over the co-visible support of each descriptor pair."""
    da = np.stack([k.descriptor for k in kps_a])
    db = np.stack([k.descriptor for k in kps_b])
    dim = da.shape[1]
    full_a = all(k.mask is None for k in kps_a)
    full_b = all(k.mask is None for k in kps_b)
    if full_a and full_b:
        return da @ db.T   # descriptors already normalized
    ma = np.stack([np.ones(dim, bool) if k.mask is None else k.mask for k in kps_a])
    mb = np.stack([np.ones(dim, bool) if k.mask is None else k.mask for k in kps_b])
    sim = np.full((len(kps_a), len(kps_b)), -1.0)
    for i in range(len(kps_a)):
        shared = ma[i][None, :] & mb                  # [m, dim]
        counts = shared.sum(axis=1)
        ok = counts >= int(dim * 0.65)
        if not ok.any():
            continue
        a = np.where(shared, da[i][None, :], 0.0)
        b = np.where(shared, db, 0.0)
        a_mean = a.sum(axis=1) / np.maximum(counts, 1)
        b_mean = b.sum(axis=1) / np.maximum(counts, 1)
        a_c = np.where(shared, a - a_mean[:, None], 0.0)
        b_c = np.where(shared, b - b_mean[:, None], 0.0)
        num = (a_c * b_c).sum(axis=1)
        var_a = (a_c**2).sum(axis=1)
        var_b = (b_c**2).sum(axis=1)
        den = np.sqrt(var_a * var_b)
        # require real texture on the shared support, not amplified flatness
        contrast = (np.sqrt(var_a / np.maximum(counts, 1)) > 0.02) & \
                   (np.sqrt(var_b / np.maximum(counts, 1)) > 0.02)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.where(den > 1e-9, num / den, -1.0)
        sim[i] = np.where(ok & contrast, vals, -1.0)
    return sim


def match_points(kps_a: list[Keypoint], kps_b: list[Keypoint]) -> list[tuple[int, int]]:
    """Mutual-NN matches on NCC with threshold and Lowe-style ratio test."""
    if not kps_a or not kps_b:
        return []
    sim = _ncc_matrix(kps_a, kps_b)
    best_ab = sim.argmax(axis=1)
    best_ba = sim.argmax(axis=0)
    matches = []
    for i, j in enumerate(best_ab):
        if best_ba[j] != i:
            continue
        s = sim[i, j]
        if s < NCC_MIN:
            continue
        # ratio test on descriptor distances d = sqrt(2 - 2 * ncc)
        row = np.delete(sim[i], j)
        if len(row):
            d1 = math.sqrt(max(2.0 - 2.0 * s, 0.0))
            d2 = math.sqrt(max(2.0 - 2.0 * row.max(), 1e-12))
            if d1 > RATIO_TEST * d2:
                continue
        a, b = kps_a[i], kps_b[int(j)]
        if a.ground is not None and b.ground is not None:
            # cameras share a mount: a true correspondence names one ground
            # point in the rig frame from both views
            dist = math.hypot(a.ground[0] - b.ground[0], a.ground[1] - b.ground[1])
            da_ = math.hypot(*a.ground)
            if dist > max(0.4, 0.05 * da_):
                continue
        matches.append((i, int(j)))
    return matches


def overlap_strips(rig: CameraRig) -> tuple[tuple[int, int], tuple[int, int]]:
    """Column ranges of the left/right overlap strips of every view.

    The left strip is shared with the next view CCW (index + 1), the right
    strip with the previous one.
    """
    h, w = rig.image_hw
    f = rig.focal
    cx = (w - 1) / 2.0
    half_fov = rig.fov / 2.0
    overlap = rig.adjacent_overlap()
    if overlap <= 0:
        raise ValueError("rig views do not overlap")
    inner = half_fov - overlap
    u_lo = cx - f * math.tan(half_fov)
    u_hi = cx - f * math.tan(inner)
    left = (max(0, int(math.floor(u_lo))), min(w, int(math.ceil(u_hi)) + 1))
    right = (max(0, int(math.floor(2 * cx - u_hi))), min(w, int(math.ceil(2 * cx - u_lo)) + 1))
    return left, right


@dataclass
class KPMReport:
    """Matched-keypoint counts for generated vs real frames and the ratio."""

    per_image: list[dict] = field(default_factory=list)
    excluded: int = 0
    frames_per_scene: int = 8

    @property
    def ratio(self) -> float:
        ratios = [e["ratio"] for e in self.per_image]
        return float(np.mean(ratios)) if ratios else 0.0


def _pair_matches(frames: np.ndarray, t: int, view: int, rig: CameraRig,
                  left_strip, right_strip) -> int:
    """Matches of (t, view) against both its adjacent views."""
    k = rig.k
    img = frames[t, view]
    count = 0
    # left strip pairs with the (view+1) neighbour's right strip
    kps_l = detect_keypoints(img, left_strip, rig=rig, view=view)
    kps_n = detect_keypoints(frames[t, (view + 1) % k], right_strip, rig=rig,
                             view=(view + 1) % k)
    count += len(match_points(kps_l, kps_n))
    kps_r = detect_keypoints(img, right_strip, rig=rig, view=view)
    kps_p = detect_keypoints(frames[t, (view - 1) % k], left_strip, rig=rig,
                             view=(view - 1) % k)
    count += len(match_points(kps_r, kps_p))
    return count


def kpm_score(generated: list[np.ndarray], real: list[np.ndarray],
              rig: CameraRig, frames_per_scene: int = 8) -> KPMReport:
    """Ratio of matched keypoints, generated over real, averaged per image.

    ``generated`` and ``real`` are same-length lists of [T, K, 3, H, W] scene
    clips covering identical scenes and frames.
    """
    if len(generated) != len(real):
        raise ValueError("generated and real must cover the same scenes")
    if rig.k < 2:
        raise ValueError("KPM needs at least two views")
    left_strip, right_strip = overlap_strips(rig)
    report = KPMReport(frames_per_scene=frames_per_scene)
    for scene_idx, (gen, ref) in enumerate(zip(generated, real)):
        if gen.shape != ref.shape:
            raise ValueError(f"scene {scene_idx}: generated/real shapes differ")
        t_total = gen.shape[0]
        ts = np.unique(np.linspace(0, t_total - 1, min(frames_per_scene, t_total))
                       .round().astype(int))
        for t in ts:
            for view in range(rig.k):
                n_real = _pair_matches(ref, t, view, rig, left_strip, right_strip)
                n_gen = _pair_matches(gen, t, view, rig, left_strip, right_strip)
                if n_real == 0:
                    report.excluded += 1
                    continue
                report.per_image.append({
                    "scene": scene_idx, "t": int(t), "view": view,
                    "real": n_real, "generated": n_gen,
                    "ratio": n_gen / n_real,
                })
    return report
