"""Field exports: CSV samples on a grid and 8-bit grayscale rasters."""

from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from app.models.field import FieldTree
from app.models.geometry import Domain, MatrixPair
from app.models.scenario import Scenario
from app.services.scenario_service import config_at
from core.exceptions import ExportException
from core.logging import get_logger

logger = get_logger(__name__)

RASTER_COMPONENTS = ("du_norm", "branch_label", "graph_gap")
RASTER_SIZE = 256
# a one-dimensional field is drawn as a strip this many pixels high
STRIP_HEIGHT = 16


def _grid_points(Omega: Domain, grid: int) -> np.ndarray:
    """Points of a `grid`^n lattice over the bounding box that lie in the closed domain, row-major."""
    if grid < 2:
        raise ExportException(f"Grid needs at least 2 points per axis, got {grid}")
    box = Omega.bounding_box
    axes = [np.linspace(lo, hi, grid) for lo, hi in zip(box.lo, box.hi)]
    points = np.array(np.meshgrid(*axes, indexing="ij")).reshape(box.n, -1).T
    return points[Omega.contains(points, closed=True)]


def _header(n: int, m: int) -> list[str]:
    columns = [f"x_{j}" for j in range(1, n + 1)]
    columns += [f"u_{a}" for a in range(1, m + 1)]
    columns += [f"Du_{a}{j}" for a in range(1, m + 1) for j in range(1, n + 1)]
    columns += [f"V_{a}{j}" for a in range(1, m + 1) for j in range(1, n + 1)]
    return columns + ["graph_gap"]


def export_field(s: Scenario, tree: FieldTree, Omega: Domain, grid: int, path) -> Path:
    """
    Write x, u, Du, V and |σ(Du) − V| at grid points of Ω as CSV.

    Values carry 17 significant digits, so re-evaluating the field at the
    written points reproduces the file exactly.
    """
    path = Path(path)
    X = _grid_points(Omega, grid)
    u, Du, V = tree.evaluate(X)
    k = len(X)
    m, n = tree.shape
    gap = np.linalg.norm((s.sigma_of(Du) - V).reshape(k, -1), axis=1)
    table = np.hstack([X, u, Du.reshape(k, -1), V.reshape(k, -1), gap[:, None]])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join(_header(n, m)), comments="")
    except OSError as exc:
        raise ExportException(f"Cannot write {path}: {exc}", data={"path": str(path)}) from exc
    logger.info(f"Exported {k} field samples to {path}")
    return path


def _component(s: Optional[Scenario], tree: FieldTree, X: np.ndarray, component: str) -> np.ndarray:
    _, Du, V = tree.evaluate(X)
    k = len(X)
    if component == "du_norm":
        return np.linalg.norm(Du.reshape(k, -1), axis=1)
    if s is None:
        raise ExportException(f"Component {component} needs a scenario")
    if component == "graph_gap":
        return np.linalg.norm((s.sigma_of(Du) - V).reshape(k, -1), axis=1)
    # nearest corner gradient of the configuration at ρ = 0
    corners = np.array([xi.first.ravel() for xi in config_at(s, MatrixPair.zeros(s.m, s.n)).xis])
    distances = np.linalg.norm(Du.reshape(k, 1, -1) - corners[None, :, :], axis=2)
    return np.argmin(distances, axis=1).astype(float) + 1.0


def export_raster(
    tree: FieldTree,
    Omega: Domain,
    component: str,
    path,
    s: Optional[Scenario] = None,
    resolution: int = RASTER_SIZE,
) -> Path:
    """
    Write one component as an 8-bit binary PGM (P5) with a min/max sidecar.

    Pixels are round(255·(v − min)/(max − min)), 0 for a constant image;
    pixels outside Ω are 0. Rows run from the top of the bounding box down.
    """
    if component not in RASTER_COMPONENTS:
        raise ExportException(f"Unknown raster component {component!r}", data={"allowed": list(RASTER_COMPONENTS)})
    n = Omega.n
    if n not in (1, 2):
        raise ExportException(f"Rasters need n = 1 or 2, got n = {n}")
    box = Omega.bounding_box
    xs = box.lo[0] + (np.arange(resolution) + 0.5) * (2.0 * box.radii[0] / resolution)
    if n == 2:
        ys = box.hi[1] - (np.arange(resolution) + 0.5) * (2.0 * box.radii[1] / resolution)
        grid_x, grid_y = np.meshgrid(xs, ys)
        X = np.column_stack([grid_x.ravel(), grid_y.ravel()])
        shape = (resolution, resolution)
    else:
        X = xs[:, None]
        shape = (1, resolution)

    inside = Omega.contains(X)
    values = np.zeros(len(X))
    if np.any(inside):
        values[inside] = _component(s, tree, X[inside], component)
    low = float(values[inside].min()) if np.any(inside) else 0.0
    high = float(values[inside].max()) if np.any(inside) else 0.0
    pixels = np.zeros(len(X), dtype=np.uint8)
    if high > low:
        pixels[inside] = np.rint(255.0 * (values[inside] - low) / (high - low)).astype(np.uint8)
    image = pixels.reshape(shape)
    if n == 1:
        image = np.repeat(image, STRIP_HEIGHT, axis=0)

    path = Path(path)
    sidecar = path.with_suffix(path.suffix + ".txt")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(image).save(path, format="PPM")
        sidecar.write_text(
            f"component {component}\nmin {low:.17g}\nmax {high:.17g}\n"
            "pixel = round(255 * (value - min) / (max - min)), 0 when max == min or outside the domain\n"
        )
    except OSError as exc:
        raise ExportException(f"Cannot write {path}: {exc}", data={"path": str(path)}) from exc
    logger.info(f"Exported {component} raster {image.shape[1]}x{image.shape[0]} to {path}")
    return path
