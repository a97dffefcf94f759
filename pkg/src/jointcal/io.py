"""File formats: correspondence CSV, calibration/config JSON, KITTI calibration text."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .camera import CameraIntrinsics, PixelPoint, distortion_from_file_order
from .errors import InvalidParameters, MissingKey, NonOrthonormalRotation, ParseError, ValidationError, VersionError
from .geometry import Pose, Quaternion, quat_from_matrix
from .metrics import CalibrationError
from .providers import NoiseSchedule, PerturbationRanges
from .residuals import Correspondence, CorrespondenceSet, ParamBlock
from .solver import SolveOptions

CALIBRATION_SCHEMA = "jointcal.calibration/1"
CONFIG_SCHEMA = "jointcal.config/1"
CSV_HEADER = ("frame_id", "X", "Y", "Z", "u", "v", "weight")


# -- correspondences --------------------------------------------------------

def load_correspondences(path) -> list[Correspondence]:
    """Read a correspondence CSV. Records come back grouped by frame, in
    order of first appearance, keeping file order within each frame."""
    path = Path(path)
    rows: list[Correspondence] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("missing header row", line=1, path=path) from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"header must be {','.join(CSV_HEADER)}", line=1, path=path)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(CSV_HEADER):
                raise ParseError(f"expected {len(CSV_HEADER)} fields, found {len(rec)}", line=lineno, path=path)
            try:
                vals = [float(c) for c in rec[1:]]
            except ValueError as exc:
                raise ParseError(f"non-numeric field ({exc})", line=lineno, path=path) from None
            bad = [name for name, v in zip(CSV_HEADER[1:], vals) if not math.isfinite(v)]
            if bad:
                raise ValidationError(f"non-finite value in {', '.join(bad)}", line=lineno, path=path)
            w = vals[5]
            if not 0.0 <= w <= 1.0:
                raise ValidationError(f"weight {w} outside [0, 1]", line=lineno, path=path)
            rows.append(Correspondence(tuple(vals[:3]), PixelPoint(vals[3], vals[4]), w, rec[0].strip()))
    order: dict[str, int] = {}
    for c in rows:
        order.setdefault(c.frame_id, len(order))
    return sorted(rows, key=lambda c: order[c.frame_id])


def load_correspondence_set(path) -> CorrespondenceSet:
    return CorrespondenceSet.from_list(load_correspondences(path))


def save_correspondences(cs, path) -> None:
    if not isinstance(cs, CorrespondenceSet):
        cs = CorrespondenceSet.from_list(cs)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for fid, p, px, wt in zip(cs.frame_ids, cs.points, cs.pixels, cs.weights):
            w.writerow([fid, *(repr(float(v)) for v in (*p, *px, wt))])


# -- KITTI calibration text --------------------------------------------------

def read_kitti_text(path) -> dict[str, np.ndarray]:
    """``key: v1 v2 ...`` lines to float arrays; non-numeric values (dates) are skipped."""
    data = {}
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line or ":" not in line:
                continue
            key, value = line.split(":", 1)
            try:
                data[key.strip()] = np.array([float(x) for x in value.split()])
            except ValueError:
                pass
    return data


def _need(data: dict, key: str, n: int, path) -> np.ndarray:
    if key not in data:
        raise MissingKey(f"missing key '{key}'", path=path)
    v = data[key]
    if v.size != n:
        raise ParseError(f"key '{key}' has {v.size} values, expected {n}", path=path)
    return v


def load_kitti_calib(path, camera: str = "03", velo_path=None, image_size=None) -> tuple[CameraIntrinsics, Pose]:
    """Camera model and LiDAR-to-camera pose from KITTI calibration files.

    Intrinsics come from ``K_<camera>`` (9 values, row-major), ``D_<camera>``
    (``k1 k2 t1 t2 k3``) and ``S_<camera>`` (width height, or ``image_size``).
    The extrinsic is read from ``R`` (9 values) and ``T`` (3 values) in
    ``velo_path`` if given, else in ``path``.
    """
    data = read_kitti_text(path)
    K = _need(data, f"K_{camera}", 9, path).reshape(3, 3)
    D = distortion_from_file_order(_need(data, f"D_{camera}", 5, path))
    if f"S_{camera}" in data:
        w, h = (int(round(v)) for v in _need(data, f"S_{camera}", 2, path))
    elif image_size is not None:
        w, h = image_size
    else:
        raise MissingKey(f"missing key 'S_{camera}' and no image_size given", path=path)
    try:
        intr = CameraIntrinsics(K[0, 0], K[1, 1], K[0, 2], K[1, 2], *D, width=w, height=h)
    except InvalidParameters as exc:
        raise ValidationError(str(exc), path=path) from None
    ext_path = velo_path if velo_path is not None else path
    ext = read_kitti_text(ext_path) if velo_path is not None else data
    R = _need(ext, "R", 9, ext_path).reshape(3, 3)
    T = _need(ext, "T", 3, ext_path)
    try:
        q = quat_from_matrix(R, tol=1e-6)
    except ValueError as exc:
        raise NonOrthonormalRotation(str(exc), path=ext_path) from None
    return intr, Pose(q, tuple(T))


# -- calibration JSON --------------------------------------------------------

def calibration_to_dict(params: ParamBlock, report=None, trace=None) -> dict:
    k = params.intrinsics
    q = params.extrinsics.rotation
    doc: dict[str, Any] = {
        "schema_version": CALIBRATION_SCHEMA,
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "width": k.width, "height": k.height},
        # file order k1 k2 t1 t2 k3
        "distortion": {"k1": k.k1, "k2": k.k2, "t1": k.t1, "t2": k.t2, "k3": k.k3},
        "extrinsics": {
            "quaternion_wxyz": [q.w, q.x, q.y, q.z],
            "translation_m": list(params.extrinsics.translation),
        },
        "frozen_intrinsics": list(params.frozen_intrinsics),
    }
    if report is not None:
        doc["report"] = report.to_dict() if hasattr(report, "to_dict") else report
    if trace is not None:
        doc["trace"] = trace.summary() if hasattr(trace, "summary") else trace
    return doc


def _field(doc: dict, dotted: str, path):
    cur = doc
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            raise ParseError(f"missing required field '{dotted}'", path=path)
        cur = cur[part]
    return cur


def _number(doc, dotted, path) -> float:
    v = _field(doc, dotted, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"field '{dotted}' must be a finite number", path=path)
    return v


def calibration_from_dict(doc: dict, path=None) -> ParamBlock:
    if not isinstance(doc, dict):
        raise ParseError("calibration document must be a JSON object", path=path)
    version = doc.get("schema_version")
    if version is None:
        raise ParseError("missing required field 'schema_version'", path=path)
    if version != CALIBRATION_SCHEMA:
        raise VersionError(f"unsupported schema_version '{version}' (expected '{CALIBRATION_SCHEMA}')", path=path)
    kv = {n: _number(doc, f"intrinsics.{n}", path) for n in ("fx", "fy", "cx", "cy", "width", "height")}
    dv = {n: _number(doc, f"distortion.{n}", path) for n in ("k1", "k2", "t1", "t2", "k3")}
    q = _field(doc, "extrinsics.quaternion_wxyz", path)
    t = _field(doc, "extrinsics.translation_m", path)
    if not (isinstance(q, list) and len(q) == 4 and isinstance(t, list) and len(t) == 3):
        raise ValidationError("extrinsics need 4 quaternion and 3 translation values", path=path)
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in q + t):
        raise ValidationError("extrinsics contain non-finite values", path=path)
    quat = Quaternion(*q)
    if abs(quat.norm() - 1.0) > 1e-9:
        raise ValidationError(f"quaternion is not unit-norm (|q| = {quat.norm()})", path=path)
    frozen = doc.get("frozen_intrinsics", [False] * 9)
    try:
        intr = CameraIntrinsics(kv["fx"], kv["fy"], kv["cx"], kv["cy"], dv["k1"], dv["k2"], dv["k3"], dv["t1"],
                                dv["t2"], int(kv["width"]), int(kv["height"]))
        return ParamBlock(intr, Pose(quat, tuple(t)), tuple(frozen))
    except (InvalidParameters, ValueError) as exc:
        raise ValidationError(str(exc), path=path) from None


def save_calibration(params: ParamBlock, report=None, path=None, trace=None) -> None:
    """Write a calibration JSON document (lossless float round trip)."""
    if path is None:
        raise ValueError("path is required")
    text = json.dumps(calibration_to_dict(params, report, trace), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def load_calibration(path) -> ParamBlock:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=path) from None
    return calibration_from_dict(doc, path)


def load_camera(path, **kitti_kwargs) -> ParamBlock:
    """Load a calibration from JSON or, for ``.txt`` files, KITTI text."""
    if str(path).lower().endswith(".txt"):
        intr, pose = load_kitti_calib(path, **kitti_kwargs)
        return ParamBlock(intr, pose)
    return load_calibration(path)


def save_error_report(err: CalibrationError, path) -> None:
    Path(path).write_text(err.to_json() + "\n")


# -- run configuration -------------------------------------------------------

@dataclass
class RunConfig:
    schema_version: str = CONFIG_SCHEMA
    #: one CSV per refinement iteration, or a single CSV reused every iteration
    correspondences: list[str] = field(default_factory=list)
    initial: str | None = None
    ground_truth: str | None = None
    principal_point_prior: list[float] | None = None
    output_dir: str = "out"
    seed: int = 0
    n_intr: int = 5
    n_total: int = 11
    solver: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    perturbation: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    remap: dict = field(default_factory=dict)
    n_rays: int = 10_000
    base_dir: str = "."

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def solve_options(self) -> SolveOptions:
        opts = dict(self.solver)
        if opts.get("prior_sigma") in ("inf", "none"):
            opts["prior_sigma"] = None
        return SolveOptions(**opts)

    def noise_schedule(self) -> NoiseSchedule:
        n = dict(self.noise)
        if "per_iteration_pixel_sigma" in n:
            n["per_iteration_pixel_sigma"] = tuple(n["per_iteration_pixel_sigma"])
        return NoiseSchedule(**n)

    def perturbation_ranges(self) -> PerturbationRanges:
        return PerturbationRanges(**self.perturbation)

    def check_paths(self) -> None:
        for p in [*self.correspondences, self.initial, self.ground_truth]:
            if p is not None and not self.resolve(p).exists():
                raise ValidationError(f"referenced path does not exist: {p}")


def load_config(path, check_paths: bool = True) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=path) from None
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object", path=path)
    if "schema_version" not in doc:
        raise ParseError("missing required field 'schema_version'", path=path)
    if doc["schema_version"] != CONFIG_SCHEMA:
        raise VersionError(f"unsupported schema_version '{doc['schema_version']}'", path=path)
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown config fields: {', '.join(sorted(unknown))}", path=path)
    if isinstance(doc.get("correspondences"), str):
        doc["correspondences"] = [doc["correspondences"]]
    cfg = RunConfig(**doc, base_dir=str(path.parent))
    if check_paths:
        cfg.check_paths()
    return cfg


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d.pop("base_dir")
    return d
