"""Classical fast-moving-object detector.

A learned detector would predict a truncated distance function directly.
Here the frame-background difference plays that role: it is blurred,
normalised, thresholded at ``epsilon`` and split into connected components,
each of which becomes a square 256x256 crop. The crop's skeleton then gives
a trajectory polyline and a TDF estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from .imgcore import PixelDomain, connected_components, distance_to_polyline, farthest_pair, pixel_graph
from .trajectory import tdf_from_distance

EPSILON = 0.3
CROP_SIZE = 256
BLUR_RADIUS = 2
MIN_AREA = 4
CROP_PAD = 0.3
# skeleton pixels shallower than this fraction of the deepest one are spurs
SKELETON_DEPTH = 0.7
# below this peak difference the frame is treated as empty
RESPONSE_FLOOR = 0.02


class DetectError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    """One connected component of the thresholded response.

    ``bbox`` is the component's (y0, x0, y1, x1) half-open box in frame
    pixels and ``crop_box`` the square (y0, x0, side) region that was
    resampled into the 256x256 crops. ``scale`` maps frame lengths to crop
    lengths and ``radius`` is the estimated object radius in frame pixels.
    """

    bbox: tuple
    crop_box: tuple
    frame: np.ndarray
    background: np.ndarray
    response: np.ndarray
    mask: np.ndarray
    scale: float
    radius: float
    epsilon: float = EPSILON

    def to_frame(self, pts: np.ndarray) -> np.ndarray:
        """Map (x, y) crop coordinates to frame coordinates."""
        y0, x0, _ = self.crop_box
        return (np.asarray(pts, dtype=np.float64) + 0.5) / self.scale - 0.5 + (x0, y0)

    def to_crop(self, pts: np.ndarray) -> np.ndarray:
        y0, x0, _ = self.crop_box
        return (np.asarray(pts, dtype=np.float64) - (x0, y0) + 0.5) * self.scale - 0.5


def delta_response(I: np.ndarray, B: np.ndarray) -> np.ndarray:
    I = np.asarray(I, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if I.shape != B.shape:
        raise DetectError(f"frame {I.shape} and background {B.shape} differ")
    diff = np.abs(I - B)
    if diff.ndim == 3:
        diff = diff.max(axis=2)
    size = 2 * BLUR_RADIUS + 1
    blurred = ndimage.uniform_filter(diff, size=size, mode="constant")
    peak = float(blurred.max())
    if peak < RESPONSE_FLOOR:
        return np.zeros_like(blurred)
    return np.clip(blurred / peak, 0.0, 1.0)


def _square_crop(bbox, domain: PixelDomain):
    y0, x0, y1, x1 = bbox
    h, w = y1 - y0, x1 - x0
    side = int(math.ceil(max(h, w) * (1 + 2 * CROP_PAD)))
    side = max(1, min(side, domain.height, domain.width))
    cy, cx = 0.5 * (y0 + y1), 0.5 * (x0 + x1)
    top = int(round(cy - side / 2))
    left = int(round(cx - side / 2))
    top = min(max(top, 0), domain.height - side)
    left = min(max(left, 0), domain.width - side)
    return top, left, side


def _resample(img: np.ndarray, crop_box, interp=cv2.INTER_LINEAR) -> np.ndarray:
    y0, x0, side = crop_box
    patch = np.ascontiguousarray(img[y0 : y0 + side, x0 : x0 + side], dtype=np.float64)
    if side == CROP_SIZE:
        return patch.copy()
    return cv2.resize(patch, (CROP_SIZE, CROP_SIZE), interpolation=interp)


def minor_axis_radius(mask: np.ndarray) -> float:
    """Half the minor-axis extent of a region, from its second moments."""
    ys, xs = np.nonzero(mask)
    if len(ys) < 2:
        return 0.5
    cov = np.cov(np.stack([xs, ys]).astype(np.float64), bias=True)
    # a uniform ellipse with semi-axis a has variance a^2 / 4 along it
    lam = max(float(np.linalg.eigvalsh(cov)[0]), 1.0 / 12.0)
    return 2.0 * math.sqrt(lam)


def _grouped_regions(binary: np.ndarray) -> list:
    """Components of ``binary`` with fragments folded into nearby larger ones.

    Components are visited by decreasing area. One that lies within the
    estimated radius of an already accepted region joins it; otherwise it
    starts a new region if its area reaches ``MIN_AREA``.
    """
    comps = connected_components(binary, connectivity=8)
    order = sorted(range(comps.count), key=lambda k: (-comps.areas[k], k))
    regions, reach = [], []
    for k in order:
        own = comps.labels == k + 1
        for g, (region, dist) in enumerate(zip(regions, reach)):
            if dist is None:
                dist = ndimage.distance_transform_edt(~region)
                reach[g] = dist
            if dist[own].min() <= minor_axis_radius(region):
                regions[g] = region | own
                break
        else:
            if comps.areas[k] >= MIN_AREA:
                regions.append(own)
                reach.append(None)
    # spatial order keeps the output independent of component areas
    return sorted(regions, key=lambda m: tuple(np.argwhere(m)[0]))


def binarize_and_split(response: np.ndarray, epsilon: float = EPSILON, frame=None, background=None) -> list:
    """Threshold ``response`` at ``epsilon`` and turn each component into a Detection."""
    if not 0.0 < epsilon < 1.0:
        raise DetectError("epsilon must lie in (0, 1)")
    response = np.asarray(response, dtype=np.float64)
    domain = PixelDomain.of(response)
    frame = response if frame is None else np.asarray(frame, dtype=np.float64)
    background = np.zeros_like(frame) if background is None else np.asarray(background, dtype=np.float64)
    out = []
    for own in _grouped_regions(response > epsilon):
        ys, xs = np.nonzero(own)
        box = (ys.min(), xs.min(), ys.max() + 1, xs.max() + 1)
        crop_box = _square_crop(box, domain)
        scale = CROP_SIZE / crop_box[2]
        mask = _resample(own.astype(np.float64), crop_box, cv2.INTER_NEAREST) > 0.5
        out.append(
            Detection(
                bbox=tuple(int(v) for v in box),
                crop_box=tuple(int(v) for v in crop_box),
                frame=_resample(frame, crop_box),
                background=_resample(background, crop_box),
                response=_resample(response, crop_box),
                mask=mask,
                scale=scale,
                radius=minor_axis_radius(own),
                epsilon=epsilon,
            )
        )
    return out


def _longest_path(skel: np.ndarray) -> np.ndarray:
    """Pixels of the longest geodesic path through a skeleton, as (x, y)."""
    from scipy.sparse import csgraph

    coords, graph = pixel_graph(skel)
    if len(coords) == 1:
        return coords[:, ::-1].astype(np.float64)
    a, b, _ = farthest_pair(graph)
    _, pred = csgraph.dijkstra(graph, directed=False, indices=a, return_predecessors=True)
    path = [b]
    while path[-1] != a:
        path.append(pred[path[-1]])
    return coords[path[::-1]][:, ::-1].astype(np.float64)


def skeleton_polyline(det: Detection) -> np.ndarray:
    """Trajectory polyline of a detection in crop (x, y) coordinates."""
    if not det.mask.any():
        raise DetectError("detection mask is empty")
    skel = skeletonize(det.mask)
    if not skel.any():
        raise DetectError("skeleton is empty")
    # drop spurs: keep the part of the skeleton deep inside the region
    depth = ndimage.distance_transform_edt(det.mask)
    deep = skel & (depth >= SKELETON_DEPTH * depth[skel].max())
    if deep.any():
        skel = deep
    # keep the largest skeleton piece; stray fragments are thinning artefacts
    comps = connected_components(skel)
    if comps.count > 1:
        skel = comps.labels == 1 + int(np.argmax(comps.areas))
    return _longest_path(skel)


def estimate_tdf_from_response(det: Detection, polyline: np.ndarray | None = None) -> np.ndarray:
    """TDF on the detection's crop grid from its skeleton and estimated radius."""
    if polyline is None:
        polyline = skeleton_polyline(det)
    r = max(det.radius * det.scale, 0.5)
    dist = distance_to_polyline(PixelDomain(CROP_SIZE, CROP_SIZE), polyline)
    return tdf_from_distance(dist, r)


def detect(I: np.ndarray, B: np.ndarray, epsilon: float = EPSILON, tdf: np.ndarray | None = None) -> list:
    """Detections in a frame; an externally predicted ``tdf`` replaces the difference response."""
    I = np.asarray(I, dtype=np.float64)
    if tdf is None:
        response = delta_response(I, B)
    else:
        response = np.asarray(tdf, dtype=np.float64)
        if response.shape != I.shape[:2]:
            raise DetectError(f"injected TDF {response.shape} does not match frame {I.shape[:2]}")
    return binarize_and_split(response, epsilon, frame=I, background=B)
