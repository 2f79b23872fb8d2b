"""Annotation data model, YOLO-format text I/O, and bounding-box geometry."""

from __future__ import annotations

from dataclasses import dataclass

COORD_DECIMALS = 6


class AnnotationError(ValueError):
    """Malformed annotation or prediction text."""


class RegistryError(ValueError):
    """Unknown class id or conflicting registry entries."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized center/size coordinates.

    cx, cy are fractions of image width/height in [0, 1]; w, h are
    fractions in (0, 1]. A box may extend past the unit square (e.g.
    cx=0.95, w=0.2) until a clipping operation trims it.
    """

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center out of [0,1]: ({self.cx}, {self.cy})")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size out of (0,1]: ({self.w}, {self.h})")

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> BoundingBox:
        if x2 <= x1 or y2 <= y1:
            raise ValueError(f"degenerate corners: ({x1}, {y1}, {x2}, {y2})")
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)


@dataclass(frozen=True)
class ClassLabel:
    id: int
    name: str

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError(f"class id must be non-negative: {self.id}")
        if not self.name or any(c.isspace() for c in self.name):
            raise ValueError(f"class name must be non-empty and whitespace-free: {self.name!r}")


class ClassRegistry:
    """Immutable id <-> name table for annotation classes."""

    def __init__(self, labels):
        labels = tuple(labels)
        ids = [lab.id for lab in labels]
        names = [lab.name for lab in labels]
        if len(set(ids)) != len(ids):
            raise RegistryError(f"duplicate class ids: {sorted(ids)}")
        if len(set(names)) != len(names):
            raise RegistryError(f"duplicate class names: {sorted(names)}")
        self._labels = labels
        self._by_id = {lab.id: lab for lab in labels}
        self._by_name = {lab.name: lab for lab in labels}

    @classmethod
    def from_text(cls, text: str) -> ClassRegistry:
        """Parse `<id> <name>` lines into a registry."""
        labels = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise RegistryError(f"line {lineno}: expected '<id> <name>', got {line!r}")
            try:
                class_id = int(parts[0])
            except ValueError:
                raise RegistryError(f"line {lineno}: class id is not an integer: {parts[0]!r}") from None
            labels.append(ClassLabel(class_id, parts[1]))
        return cls(labels)

    def to_text(self) -> str:
        return "".join(f"{lab.id} {lab.name}\n" for lab in self._labels)

    @property
    def labels(self) -> tuple[ClassLabel, ...]:
        return self._labels

    def ids(self) -> tuple[int, ...]:
        return tuple(sorted(self._by_id))

    def name_of(self, class_id: int) -> str:
        try:
            return self._by_id[class_id].name
        except KeyError:
            raise RegistryError(f"unknown class id: {class_id}") from None

    def id_of(self, name: str) -> int:
        try:
            return self._by_name[name].id
        except KeyError:
            raise RegistryError(f"unknown class name: {name!r}") from None

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._by_id

    def __len__(self) -> int:
        return len(self._labels)


@dataclass(frozen=True)
class GroundTruthObject:
    label: int
    box: BoundingBox


@dataclass(frozen=True)
class Detection:
    label: int
    box: BoundingBox
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of [0,1]: {self.confidence}")


@dataclass(frozen=True)
class AnnotatedImage:
    image_id: str
    width_px: int
    height_px: int
    objects: tuple[GroundTruthObject, ...]

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError(f"image size must be positive: {self.width_px}x{self.height_px}")


def _parse_fields(line: str, lineno: int, n_fields: int) -> tuple[int, list[float]]:
    parts = line.split()
    if len(parts) != n_fields:
        raise AnnotationError(f"line {lineno}: expected {n_fields} fields, got {len(parts)}")
    try:
        class_id = int(parts[0])
    except ValueError:
        raise AnnotationError(f"line {lineno}: class id is not an integer: {parts[0]!r}") from None
    values = []
    for raw in parts[1:]:
        try:
            values.append(float(raw))
        except ValueError:
            raise AnnotationError(f"line {lineno}: not a number: {raw!r}") from None
    return class_id, values


def _box_from_values(values: list[float], lineno: int) -> BoundingBox:
    cx, cy, w, h = values
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise AnnotationError(f"line {lineno}: box center out of [0,1]: ({cx}, {cy})")
    if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
        raise AnnotationError(f"line {lineno}: box size out of (0,1]: ({w}, {h})")
    return BoundingBox(cx, cy, w, h)


def _check_label(class_id: int, registry: ClassRegistry | None, lineno: int) -> None:
    if registry is not None and class_id not in registry:
        raise RegistryError(f"line {lineno}: unknown class id {class_id}")


def parse_yolo_annotation(text: str, registry: ClassRegistry | None = None) -> list[GroundTruthObject]:
    """Parse `class_id cx cy w h` lines; values are kept exactly as parsed."""
    objects = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        class_id, values = _parse_fields(line, lineno, 5)
        _check_label(class_id, registry, lineno)
        objects.append(GroundTruthObject(class_id, _box_from_values(values, lineno)))
    return objects


def parse_yolo_prediction(text: str, registry: ClassRegistry | None = None) -> list[Detection]:
    """Parse `class_id cx cy w h confidence` lines."""
    detections = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        class_id, values = _parse_fields(line, lineno, 6)
        _check_label(class_id, registry, lineno)
        box = _box_from_values(values[:4], lineno)
        conf = values[4]
        if not (0.0 <= conf <= 1.0):
            raise AnnotationError(f"line {lineno}: confidence out of [0,1]: {conf}")
        detections.append(Detection(class_id, box, conf))
    return detections


def format_yolo_annotation(objects) -> str:
    """Serialize ground-truth objects, one per line, 6-decimal coordinates."""
    lines = []
    for obj in objects:
        b = obj.box
        lines.append(f"{obj.label} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}\n")
    return "".join(lines)


def format_yolo_prediction(detections) -> str:
    lines = []
    for det in detections:
        b = det.box
        lines.append(
            f"{det.label} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f} {det.confidence:.6f}\n"
        )
    return "".join(lines)


def _corners(box: BoundingBox) -> tuple[float, float, float, float]:
    return box.x1, box.y1, box.x2, box.y2


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 when disjoint.

    Areas are taken from the same corner representation as the intersection,
    which pins the result inside [0, 1] (min/max and subtraction are
    monotone, so the intersection can never exceed either area).
    """
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: BoundingBox, b: BoundingBox) -> float:
    """Generalized IoU: IoU minus the enclosing-box area not covered by the union.

    Ranges over (-1, 1]; equals IoU when the enclosing box is fully covered,
    and goes negative for well-separated boxes.
    """
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    inter = iw * ih if (iw > 0.0 and ih > 0.0) else 0.0
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    cw = max(ax2, bx2) - min(ax1, bx1)
    ch = max(ay2, by2) - min(ay1, by1)
    c_area = cw * ch
    base = inter / union if union > 0.0 else 0.0
    if c_area <= 0.0:
        return base
    # rounding can put c_area an ulp under the union; clamp so giou <= iou
    # holds exactly
    return base - max(0.0, (c_area - union) / c_area)
