"""Dataset persistence: one raster/raw file per image plus a JSON manifest."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image as PilImage

from .core import DataError, Ensemble, Image

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1

_PNG = "png"
_RAW = "f64"


def _is_uint8_valued(ensemble: Ensemble) -> bool:
    for im in ensemble.images:
        d = im.data
        if d.min() < 0 or d.max() > 255 or not np.array_equal(d, np.round(d)):
            return False
    return True


def save_ensemble(ensemble: Ensemble, path: str | Path,
                  image_format: str = "auto") -> Path:
    """Write an ensemble to a directory.

    8-bit-valued ensembles are stored as lossless grayscale PNG; anything else
    as headerless little-endian float64 (one `.f64` file per image). `auto`
    picks PNG when every pixel is an integer in [0, 255].
    """
    if not ensemble.images:
        raise DataError("cannot save an empty ensemble")
    if image_format == "auto":
        image_format = _PNG if _is_uint8_valued(ensemble) else _RAW
    if image_format not in (_PNG, _RAW):
        raise DataError(f"unknown image format {image_format!r}")

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    height, width = ensemble.dims
    for i, im in enumerate(ensemble.images):
        name = f"img_{i:06d}.{image_format}"
        if image_format == _PNG:
            PilImage.fromarray(im.data.astype(np.uint8), mode="L").save(path / name)
        else:
            im.data.astype("<f8").tofile(path / name)

    pitch = ensemble.images[0].pixel_pitch
    manifest: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "image_format": image_format,
        "count": len(ensemble),
        "width": width,
        "height": height,
        "pixel_pitch": pitch,
        "labels": list(ensemble.labels),
        "provenance": ensemble.manifest,
    }
    with open(path / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def load_ensemble(path: str | Path) -> Ensemble:
    """Read an ensemble written by save_ensemble; inverse on its own output."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(f"missing manifest: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)

    for key in ("image_format", "count", "width", "height", "labels"):
        if key not in manifest:
            raise DataError(f"manifest missing field {key!r}")
    fmt = manifest["image_format"]
    count = manifest["count"]
    width, height = manifest["width"], manifest["height"]
    pitch = manifest.get("pixel_pitch")
    labels = manifest["labels"]
    if len(labels) != count:
        raise DataError(f"manifest lists {count} images but {len(labels)} labels")

    files = sorted(path.glob(f"img_*.{fmt}"))
    if len(files) != count:
        raise DataError(
            f"manifest declares {count} images, found {len(files)} files"
        )

    images = []
    for fp in files:
        if fmt == _PNG:
            arr = np.asarray(PilImage.open(fp), dtype=np.float64)
        else:
            arr = np.fromfile(fp, dtype="<f8")
            if arr.size != width * height:
                raise DataError(
                    f"{fp.name}: expected {width * height} values, got {arr.size}"
                )
            arr = arr.reshape(height, width)
        if arr.shape != (height, width):
            raise DataError(
                f"{fp.name}: shape {arr.shape} does not match manifest "
                f"({height}, {width})"
            )
        images.append(Image(arr, pitch))

    return Ensemble(images, list(labels), dict(manifest.get("provenance", {})))
