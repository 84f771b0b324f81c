"""File formats: PGM images, saved network models, run reports."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from ..covmodel import BlockPartition, read_matrix, write_matrix
from ..sdt import FusionCenter, NetworkModel, SecondDegreeSensor


def read_image(path) -> np.ndarray:
    """Grayscale image scaled to ``[0, 1]``; PGM (P2/P5) or delimited text."""
    path = Path(path)
    if path.suffix.lower() in (".csv", ".txt"):
        A = read_matrix(path)
        hi = A.max()
        return A / hi if hi > 1 else A
    with Image.open(path) as im:
        A = np.asarray(im.convert("L"), dtype=np.float64)
    return A / 255.0


def write_pgm(path, A) -> None:
    """Write ``A`` (values in ``[0, 1]``, clipped) as binary 8-bit PGM."""
    img = np.clip(np.rint(np.asarray(A) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img, mode="L").save(Path(path), format="PPM")


def synthetic_image(size: int = 64) -> np.ndarray:
    """Deterministic test scene: shaded background, a disc, a bar and a ramp."""
    t = np.linspace(0.0, 1.0, size)
    yy, xx = np.meshgrid(t, t, indexing="ij")
    img = 0.25 + 0.35 * xx * (1 - 0.5 * yy)
    disc = (xx - 0.35) ** 2 + (yy - 0.4) ** 2 < 0.04
    img[disc] = 0.9 - 0.3 * yy[disc]
    bar = (np.abs(xx - 0.72) < 0.06) & (yy > 0.2) & (yy < 0.85)
    img[bar] = 0.1
    img += 0.08 * np.sin(6 * np.pi * xx) * np.cos(4 * np.pi * yy)
    return np.clip(img, 0.0, 1.0)


def save_model(model: NetworkModel, directory, variant: str = "orthonormal") -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    part = model.partition
    meta = {
        "n": list(part.n), "r": list(part.r), "m": part.m,
        "m_split": list(part.m_split), "lifting": part.lifting, "variant": variant,
    }
    with open(d / "model.yaml", "w") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)
    for j, (T, sensor) in enumerate(zip(model.fusion.blocks, model.sensors), start=1):
        if part.r[j - 1] == 0:  # nothing transmitted; load_model rebuilds empty blocks
            continue
        write_matrix(d / f"T_{j}.csv", T)
        write_matrix(d / f"S_{j}.csv", sensor.S)
    return d


def load_model(directory) -> NetworkModel:
    d = Path(directory)
    with open(d / "model.yaml") as fh:
        meta = yaml.safe_load(fh)
    part = BlockPartition(n=tuple(meta["n"]), r=tuple(meta["r"]), m=meta["m"],
                          m_split=tuple(meta["m_split"]), lifting=meta["lifting"])
    T, sensors = [], []
    for j in range(part.p):
        if part.r[j] == 0:
            T.append(np.zeros((part.m, 0)))
            S = np.zeros((0, part.widths[j]))
        else:
            T.append(read_matrix(d / f"T_{j + 1}.csv").reshape(part.m, part.r[j]))
            S = read_matrix(d / f"S_{j + 1}.csv").reshape(part.r[j], part.widths[j])
        sensors.append(SecondDegreeSensor.from_block(S, part.n[j], part.lifting))
    return NetworkModel(sensors=tuple(sensors), fusion=FusionCenter(tuple(T)), partition=part)


def write_report_csv(path, rows) -> None:
    """``rows``: iterable of ``(method, mse, iterations, converged)``."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mse", "iterations", "converged"])
        for method, mse, iters, conv in rows:
            w.writerow([method, repr(float(mse)), int(iters), str(bool(conv)).lower()])
