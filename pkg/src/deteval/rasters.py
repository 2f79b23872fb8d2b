"""Optional pixel-raster adapter. The annotation-geometry pipeline never
needs image data; these helpers exist so the tile command can also read raw
image dimensions and write cropped tiles when rasters are on disk."""

from __future__ import annotations

from pathlib import Path


def _require_pillow():
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - environment dependent
        raise RuntimeError(
            "raster support needs Pillow (pip install deteval[raster])"
        ) from exc
    return Image


def image_size(path: Path) -> tuple[int, int]:
    """(width, height) of an image file, read via Pillow."""
    Image = _require_pillow()
    with Image.open(path) as img:
        return img.width, img.height


def write_tile_crops(path: Path, tiles, tile_ids, out_dir: Path, suffix: str = ".png") -> list[Path]:
    """Crop each tile rectangle out of the source raster and write it as
    <tile_id><suffix> under out_dir. Tiles extending past the image edge
    (pad policy) come out padded with black."""
    Image = _require_pillow()
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with Image.open(path) as img:
        for tile, tile_id in zip(tiles, tile_ids):
            crop = img.crop((tile.x0, tile.y0, tile.x0 + tile.w, tile.y0 + tile.h))
            target = out_dir / f"{tile_id}{suffix}"
            crop.save(target)
            written.append(target)
    return written
