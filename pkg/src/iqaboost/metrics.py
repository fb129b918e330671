"""Native quality metrics, external score ingestion and feature assembly."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import correlate2d

from .errors import CompletenessError, ParseError, RegistryError, ShapeError

PSNR_CAP = 100.0
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

# The eleven published estimators, in their customary column order.
DEFAULT_REGISTRY = (
    "PSNR", "PSNR-HA", "PSNR-HMA", "SSIM", "MS-SSIM", "CW-SSIM",
    "IW-SSIM", "SR-SIM", "FSIMc", "PerSIM", "UNIQUE",
)
NATIVE_METRICS = ("PSNR", "SSIM", "MS-SSIM")


class GrayImage:
    """Single-channel image with samples in ``[0, dynamic_range]``."""

    def __init__(self, samples, dynamic_range=255.0):
        arr = np.array(samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"expected a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite samples")
        if arr.min() < 0 or arr.max() > dynamic_range:
            raise ValueError(f"samples outside [0, {dynamic_range}]")
        arr.setflags(write=False)
        self.samples = arr
        self.dynamic_range = float(dynamic_range)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def shape(self):
        return self.samples.shape


@dataclass(frozen=True)
class SSIMParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    @property
    def c1(self):
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self):
        return (self.k2 * self.dynamic_range) ** 2


@dataclass(frozen=True)
class MetricDescriptor:
    metric_id: str
    source: str = "external"  # native | external
    polarity: str = "higher-is-better"


def default_registry() -> list[MetricDescriptor]:
    return [
        MetricDescriptor(mid, "native" if mid in NATIVE_METRICS else "external")
        for mid in DEFAULT_REGISTRY
    ]


def registry_from_ids(metric_ids) -> list[MetricDescriptor]:
    """Descriptors for the given ids; ids outside the default list are allowed."""
    metric_ids = list(metric_ids)
    dupes = sorted({m for m in metric_ids if metric_ids.count(m) > 1})
    if dupes:
        raise RegistryError(f"duplicate metric ids in registry: {dupes}")
    return [MetricDescriptor(mid, "native" if mid in NATIVE_METRICS else "external")
            for mid in metric_ids]


def _check_pair(ref: GrayImage, dist: GrayImage):
    if ref.shape != dist.shape:
        raise ShapeError(f"image dimensions differ: {ref.shape} vs {dist.shape}")
    if ref.dynamic_range != dist.dynamic_range:
        raise ShapeError("images have different dynamic ranges")


def compute_psnr(ref: GrayImage, dist: GrayImage, cap: float = PSNR_CAP) -> float:
    _check_pair(ref, dist)
    mse = float(np.mean((ref.samples - dist.samples) ** 2))
    if mse == 0.0:
        return cap
    return 10.0 * math.log10(ref.dynamic_range ** 2 / mse)


def gaussian_window(size=11, sigma=1.5) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_maps(x: np.ndarray, y: np.ndarray, params: SSIMParams):
    """Return the (ssim, contrast-structure) maps over all full windows."""
    win = gaussian_window(params.window, params.sigma)

    def filt(a):
        return correlate2d(a, win, mode="valid")

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x ** 2
    syy = filt(y * y) - mu_y ** 2
    sxy = filt(x * y) - mu_x * mu_y
    c1, c2 = params.c1, params.c2
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    lum = (2.0 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    return lum * cs, cs


def _ssim_params_for(ref, params):
    if params is None:
        params = SSIMParams(dynamic_range=ref.dynamic_range)
    return params


def compute_ssim(ref: GrayImage, dist: GrayImage, params: SSIMParams | None = None) -> float:
    """Mean SSIM over all 11x11 Gaussian-weighted windows."""
    _check_pair(ref, dist)
    params = _ssim_params_for(ref, params)
    if ref.height < params.window or ref.width < params.window:
        raise ShapeError(
            f"image {ref.width}x{ref.height} smaller than {params.window}x{params.window} window"
        )
    smap, _ = ssim_maps(ref.samples, dist.samples, params)
    return float(smap.mean())


def downsample2(a: np.ndarray) -> np.ndarray:
    """2x2 mean filter followed by decimation; odd trailing rows/cols dropped."""
    h, w = (a.shape[0] // 2) * 2, (a.shape[1] // 2) * 2
    a = a[:h, :w]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def ms_ssim_min_size(window=11, scales=5) -> int:
    return window * 2 ** (scales - 1)


def compute_ms_ssim(ref: GrayImage, dist: GrayImage, params: SSIMParams | None = None,
                    weights=MS_SSIM_WEIGHTS) -> float:
    """Five-scale MS-SSIM.

    Contrast-structure means are used at the four finer scales and the full
    SSIM mean at the coarsest. A negative per-scale mean is clamped to zero
    so that the fractional powers stay real.
    """
    _check_pair(ref, dist)
    params = _ssim_params_for(ref, params)
    min_size = ms_ssim_min_size(params.window, len(weights))
    if ref.height < min_size or ref.width < min_size:
        raise ShapeError(
            f"MS-SSIM needs images of at least {min_size}x{min_size}, got {ref.width}x{ref.height}"
        )
    x, y = ref.samples, dist.samples
    result = 1.0
    last = len(weights) - 1
    for j, wgt in enumerate(weights):
        smap, cs = ssim_maps(x, y, params)
        term = float(smap.mean()) if j == last else float(cs.mean())
        result *= max(term, 0.0) ** wgt
        if j < last:
            x, y = downsample2(x), downsample2(y)
    return result


NATIVE_FUNCTIONS = {
    "PSNR": compute_psnr,
    "SSIM": compute_ssim,
    "MS-SSIM": compute_ms_ssim,
}


# -- image decoding ---------------------------------------------------------

_ALLOWED_FORMATS = {"PNG", "PPM"}  # Pillow reports PGM files as PPM


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """ITU-R BT.601 luma."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def load_gray_image(path) -> GrayImage:
    from PIL import Image

    with Image.open(path) as im:
        if im.format not in _ALLOWED_FORMATS:
            raise ValueError(f"{path}: unsupported image format {im.format}")
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)
        elif im.mode == "RGB":
            arr = rgb_to_gray(np.asarray(im))
        else:
            raise ValueError(f"{path}: unsupported mode {im.mode}, need 8-bit L or RGB")
    return GrayImage(arr, 255.0)


# -- score tables -----------------------------------------------------------

@dataclass(frozen=True)
class ScoreTable:
    stimulus_ids: tuple
    metric_ids: tuple
    scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "stimulus_ids", tuple(self.stimulus_ids))
        object.__setattr__(self, "metric_ids", tuple(self.metric_ids))
        arr = np.array(self.scores, dtype=np.float64)
        if arr.shape != (len(self.stimulus_ids), len(self.metric_ids)):
            raise ShapeError(
                f"score matrix {arr.shape} does not match "
                f"{len(self.stimulus_ids)} stimuli x {len(self.metric_ids)} metrics"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("score table contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)

    def get(self, stimulus_id, metric_id) -> float:
        i = self.stimulus_ids.index(stimulus_id)
        j = self.metric_ids.index(metric_id)
        return float(self.scores[i, j])

    def to_fragment(self) -> dict:
        return {(s, m): float(self.scores[i, j])
                for i, s in enumerate(self.stimulus_ids)
                for j, m in enumerate(self.metric_ids)}

    @classmethod
    def from_fragment(cls, fragment: dict, stimulus_ids=None, metric_ids=None) -> "ScoreTable":
        """Assemble a complete table; first-seen order unless ids are given."""
        if stimulus_ids is None:
            stimulus_ids = list(dict.fromkeys(s for s, _ in fragment))
        if metric_ids is None:
            metric_ids = list(dict.fromkeys(m for _, m in fragment))
        scores = np.empty((len(stimulus_ids), len(metric_ids)))
        for i, s in enumerate(stimulus_ids):
            for j, m in enumerate(metric_ids):
                try:
                    scores[i, j] = fragment[(s, m)]
                except KeyError:
                    raise CompletenessError(f"missing score for stimulus {s!r}, metric {m!r}") from None
        return cls(tuple(stimulus_ids), tuple(metric_ids), scores)


def parse_scores(text: str, registry=None) -> dict:
    """Parse ``stimulus_id,metric_id,score`` rows into a {(sid, mid): score} map."""
    known = None if registry is None else {d.metric_id for d in registry}
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return {}
    if [h.strip() for h in header] != ["stimulus_id", "metric_id", "score"]:
        raise ParseError(f"bad header {header!r}", row=1)
    out = {}
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", row=row_no)
        sid, mid, text_val = row
        if known is not None and mid not in known:
            raise RegistryError(f"row {row_no}: metric {mid!r} not in registry")
        try:
            val = float(text_val)
        except ValueError:
            raise ParseError(f"non-numeric score {text_val!r}", row=row_no) from None
        if not math.isfinite(val):
            raise ParseError(f"non-finite score {text_val!r}", row=row_no)
        if (sid, mid) in out:
            raise ParseError(f"duplicate entry for ({sid}, {mid})", row=row_no)
        out[(sid, mid)] = val
    return out


def ingest_external_scores(path, registry) -> dict:
    return parse_scores(Path(path).read_text(encoding="utf-8"), registry)


def merge_fragments(*fragments) -> dict:
    merged = {}
    for frag in fragments:
        for key, val in frag.items():
            if key in merged and merged[key] != val:
                raise ValueError(f"conflicting scores for {key}")
            merged[key] = val
    return merged


def format_scores(fragment: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stimulus_id", "metric_id", "score"])
    for (sid, mid), val in fragment.items():
        w.writerow([sid, mid, repr(float(val))])
    return buf.getvalue()


def write_scores(fragment: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_scores(fragment))


def build_feature_matrix(db, table: ScoreTable, selected):
    """Rows follow database order, columns follow ``selected``."""
    row_of = {s: i for i, s in enumerate(table.stimulus_ids)}
    col_of = {m: j for j, m in enumerate(table.metric_ids)}
    selected = list(selected)
    for rec in db.records:
        for m in selected:
            if rec.stimulus_id not in row_of or m not in col_of:
                raise CompletenessError(
                    f"missing score for stimulus {rec.stimulus_id!r}, metric {m!r}"
                )
    rows = [row_of[r.stimulus_id] for r in db.records]
    cols = [col_of[m] for m in selected]
    X = table.scores[np.ix_(rows, cols)].copy()
    y = np.array(db.subjective_scores, dtype=np.float64)
    return X, y


def score_record(record, metric_ids=NATIVE_METRICS, manifest_path=None) -> dict:
    """Decode one record's image pair and compute the requested native metrics."""
    from .dataset import resolve_path

    ref = load_gray_image(resolve_path(record.reference_path, manifest_path))
    dist = load_gray_image(resolve_path(record.distorted_path, manifest_path))
    return {(record.stimulus_id, m): NATIVE_FUNCTIONS[m](ref, dist) for m in metric_ids}
