"""Detection refinement and greedy track merging.

Pose keypoints separate overlapping players better than raw boxes, so each
pose becomes one detection whose box is the padded keypoint extent. Tracks
are grown by repeatedly merging the globally closest admissible pair of
track ends, measured between neck keypoints.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, replace

import numpy as np

from . import geometry as geo
from .errors import MalformedDetectionError
from .geometry import Camera

DIST_THRESH = 50.0     # pixels
FRAME_WINDOW = 10      # frames
BOX_PADDING = 0.10     # fraction of the keypoint extent, per side
MIN_HEIGHT = 1.0       # meters, lifted-box plausibility
MAX_HEIGHT = 2.5


@dataclass(frozen=True)
class Detection:
    """One player detection in one frame.

    keypoints maps name -> (u, v, confidence); "neck" is required for
    tracking. bbox is (x, y, w, h) in pixels.
    """

    frame: int
    bbox: tuple[float, float, float, float]
    keypoints: dict
    player_id: int | None = None

    def __post_init__(self):
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise ValueError(f"bbox must have positive extent, got {self.bbox}")
        for name, (u, v, c) in self.keypoints.items():
            if not 0.0 <= c <= 1.0:
                raise ValueError(f"keypoint {name!r} confidence {c} outside [0, 1]")

    @property
    def neck(self) -> np.ndarray:
        if "neck" not in self.keypoints:
            raise MalformedDetectionError(self.frame, "detection has no neck keypoint")
        return np.asarray(self.keypoints["neck"][:2], dtype=float)

    def to_dict(self) -> dict:
        d = {"frame": self.frame, "bbox": list(self.bbox),
             "keypoints": {k: list(v) for k, v in self.keypoints.items()}}
        if self.player_id is not None:
            d["player_id"] = self.player_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(d["frame"], tuple(d["bbox"]),
                   {k: tuple(v) for k, v in d["keypoints"].items()},
                   d.get("player_id"))


@dataclass(frozen=True)
class Track:
    """Frame-ordered detections attributed to one player."""

    detections: tuple[Detection, ...]
    id: int

    def __post_init__(self):
        if not self.detections:
            raise ValueError("a track must contain at least one detection")
        frames = [d.frame for d in self.detections]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("track frames must be strictly increasing")

    @property
    def start_frame(self) -> int:
        return self.detections[0].frame

    @property
    def end_frame(self) -> int:
        return self.detections[-1].frame

    def to_dict(self) -> dict:
        return {"id": self.id, "detections": [d.to_dict() for d in self.detections]}

    @classmethod
    def from_dict(cls, d: dict) -> "Track":
        return cls(tuple(Detection.from_dict(x) for x in d["detections"]), d["id"])


def keypoint_bbox(keypoints, pad=0.0):
    """Tight box around keypoint positions, optionally padded per side."""
    pts = np.array([v[:2] for v in keypoints.values()], dtype=float)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    px = (x1 - x0) * pad
    py = (y1 - y0) * pad
    return (x0 - px, y0 - py, (x1 - x0) + 2 * px, (y1 - y0) + 2 * py)


def lifted_height(camera: Camera, bbox) -> float:
    """World height of a bbox lifted onto a vertical plane at its ground point."""
    x, y, w, h = bbox
    bottom = np.array([x + w / 2.0, y + h])
    top = np.array([x + w / 2.0, y])
    ground = geo.ray_ground_intersect(camera, bottom)
    depth = geo.camera_depths(camera, ground)
    top_world = geo.unproject(camera, top, depth)
    return float(top_world[1])


def _clip_bbox(bbox, image_size):
    w, h = image_size
    x0 = max(bbox[0], 0.0)
    y0 = max(bbox[1], 0.0)
    x1 = min(bbox[0] + bbox[2], float(w))
    y1 = min(bbox[1] + bbox[3], float(h))
    return (x0, y0, max(x1 - x0, 1e-6), max(y1 - y0, 1e-6))


def _inside(box, point):
    x, y, w, h = box
    return x <= point[0] <= x + w and y <= point[1] <= y + h


def refine_boxes(boxes, poses, image_size, camera: Camera | None = None,
                 frame: int = 0, pad=BOX_PADDING, min_height=MIN_HEIGHT,
                 max_height=MAX_HEIGHT) -> list[Detection]:
    """Turn detector boxes + pose keypoints into refined detections.

    Each pose is matched to the box containing most of its keypoints (ties
    to the earlier box); matched or not, every pose yields one detection
    whose bbox is the keypoint-tight box padded `pad` per side and clipped
    to the image. When a camera is supplied, detections whose keypoint-tight
    box lifts to an implausible world height are dropped.
    """
    out = []
    for pose in poses:
        pts = [v[:2] for v in pose.values()]
        best, best_count = None, 0
        for i, box in enumerate(boxes):
            count = sum(1 for p in pts if _inside(box, p))
            if count > best_count:
                best, best_count = i, count
        del best  # assignment only separates poses; every pose is kept
        tight = keypoint_bbox(pose)
        if camera is not None:
            try:
                height = lifted_height(camera, tight)
            except Exception:
                continue  # unliftable box (ray misses the ground): implausible
            if not min_height <= height <= max_height:
                continue
        bbox = _clip_bbox(keypoint_bbox(pose, pad), image_size)
        out.append(Detection(frame, bbox, dict(pose)))
    return out


def merge_tracks(detections, dist_thresh=DIST_THRESH,
                 frame_window=FRAME_WINDOW) -> list[Track]:
    """Greedy merge of per-detection tracks by neck-keypoint proximity.

    distance(A, B) = |neck at end of A - neck at start of B| is admissible
    only when 0 < start(B) - end(A) <= frame_window. The globally closest
    admissible pair below dist_thresh merges first; ties break on (earlier
    A end-frame, lower A detection index, lower B detection index). Track
    ids are assigned by first-frame order of the final tracks.

    Raises:
        MalformedDetectionError: a detection lacks a neck keypoint.
    """
    detections = list(detections)
    for det in detections:
        det.neck  # raises with the frame attached
    # Each group is a frame-ordered list of detection indices.
    groups = {i: [i] for i in range(len(detections))}

    def admissible(a, b):
        """Distance of appending group b after group a, or None."""
        end = detections[groups[a][-1]]
        start = detections[groups[b][0]]
        gap = start.frame - end.frame
        if not 0 < gap <= frame_window:
            return None
        dist = float(np.linalg.norm(end.neck - start.neck))
        return dist if dist < dist_thresh else None

    heap = []

    def push(a, b):
        d = admissible(a, b)
        if d is not None:
            ga, gb = groups[a], groups[b]
            heapq.heappush(heap, (d, detections[ga[-1]].frame, ga[-1], gb[0], a, b))

    ids = list(groups)
    for a in ids:
        for b in ids:
            if a != b:
                push(a, b)

    while heap:
        _, _, last_idx, first_idx, a, b = heapq.heappop(heap)
        if a not in groups or b not in groups:
            continue  # a side was already merged away
        if groups[a][-1] != last_idx or groups[b][0] != first_idx:
            continue  # endpoints changed since this pair was scored
        groups[a] = groups[a] + groups[b]
        del groups[b]
        # Only pairs starting at a's (new) end change; (x, a) pairs keep
        # a's unchanged start and stay valid in the heap.
        for b2 in groups:
            if b2 != a:
                push(a, b2)

    merged = sorted(groups.values(),
                    key=lambda g: (detections[g[0]].frame, g[0]))
    tracks = []
    for tid, g in enumerate(merged):
        dets = tuple(replace(detections[i], player_id=tid) for i in g)
        tracks.append(Track(dets, tid))
    return tracks


def detections_to_jsonl(detections) -> str:
    return "\n".join(json.dumps(d.to_dict(), sort_keys=True) for d in detections) + "\n"


def detections_from_jsonl(text: str) -> list[Detection]:
    return [Detection.from_dict(json.loads(line))
            for line in text.splitlines() if line.strip()]


def tracks_to_json(tracks) -> str:
    return json.dumps({"tracks": [t.to_dict() for t in tracks]}, indent=2,
                      sort_keys=True)


def tracks_from_json(text: str) -> list[Track]:
    return [Track.from_dict(d) for d in json.loads(text)["tracks"]]
