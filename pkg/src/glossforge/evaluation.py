"""Consistency of gloss scans taken at four painting orientations."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateError, ShapeMismatchError

ROTATIONS = (0, 90, 180, 270)
HIST_EDGES = np.arange(-40.0, 40.0 + 0.5, 1.0)


@dataclass(frozen=True)
class PairStats:
    label: str
    n: int
    mean: float  # percent of the maximum possible difference
    std: float
    laplace_mu: float
    laplace_b: float
    masked_n: int
    masked_mean: float  # statistics of absolute differences
    masked_std: float
    unmasked_n: int
    unmasked_mean: float
    unmasked_std: float
    unmasked_signed_std: float
    hist_counts: tuple
    boxplot: dict = field(default_factory=dict)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("hist_counts")
        return d


@dataclass
class ConsistencyReport:
    scale_min: float
    scale_max: float
    pairs: list = field(default_factory=list)
    offsets: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scale": [self.scale_min, self.scale_max],
            "offsets": {str(k): list(v) for k, v in sorted(self.offsets.items())},
            "pairs": [p.summary() for p in self.pairs],
            "histogram_edges": HIST_EDGES.tolist(),
        }


def _shift(arr, dx, dy):
    """Integer translation with edge padding: out[y, x] = arr[y - dy, x - dx]."""
    h, w = arr.shape[:2]
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return arr[ys][:, xs]


def ncc_offset(ref, img, window: int = 8):
    """Integer (dx, dy) such that shifting ``img`` by it best matches ``ref``.

    Normalized cross-correlation is evaluated on the interior region that
    stays valid for every candidate shift.
    """
    ref = np.asarray(ref, dtype=float)
    img = np.asarray(img, dtype=float)
    if ref.shape != img.shape:
        raise ShapeMismatchError(f"{ref.shape} vs {img.shape}")
    h, w = ref.shape
    if h <= 2 * window + 2 or w <= 2 * window + 2:
        raise DegenerateError("rasters too small for the alignment window")
    core = (slice(window, h - window), slice(window, w - window))
    r = ref[core] - ref[core].mean()
    rn = np.sqrt(np.sum(r * r))
    best, best_v = (0, 0), -np.inf
    for dy in range(-window, window + 1):
        for dx in range(-window, window + 1):
            s = img[window - dy:h - window - dy, window - dx:w - window - dx]
            s = s - s.mean()
            den = rn * np.sqrt(np.sum(s * s))
            v = np.sum(r * s) / den if den > 0 else -np.inf
            # ties go to the smaller shift
            if v > best_v + 1e-12 or (abs(v - best_v) <= 1e-12 and dx * dx + dy * dy < best[0] ** 2 + best[1] ** 2):
                best, best_v = (dx, dy), v
    return best


def align_rotations(maps, rotations=ROTATIONS, align: bool = False, window: int = 8, masks=None):
    """Rotate each scan back into the frame of the first one.

    ``maps[i]`` is the scan of the painting turned counter-clockwise by
    ``rotations[i]`` degrees. Returns ``(aligned_maps, aligned_masks, offsets)``;
    offsets are the residual integer shifts found by cross-correlation (zero
    when ``align`` is False).
    """
    if len(maps) != len(rotations):
        raise ValueError("one rotation per map required")
    out, out_masks, offsets = [], [], {}
    for i, (m, rot) in enumerate(zip(maps, rotations)):
        if rot % 90:
            raise ValueError(f"rotation {rot} is not a multiple of 90 degrees")
        k = (rot // 90) % 4
        back = np.rot90(np.asarray(m), -k)
        mk = np.rot90(np.asarray(masks[i]), -k) if masks is not None else None
        out.append(back)
        out_masks.append(mk)
    shape = out[0].shape
    for rot, m in zip(rotations, out):
        if m.shape != shape:
            raise ShapeMismatchError(f"scan at {rot} deg has shape {m.shape} after rotation, expected {shape}")
    for i, rot in enumerate(rotations):
        off = (0, 0)
        if align and i > 0:
            off = ncc_offset(out[0], out[i], window)
            out[i] = _shift(out[i], *off)
            if out_masks[i] is not None:
                out_masks[i] = _shift(out_masks[i], *off)
        offsets[rot] = off
    return out, out_masks, offsets


def joint_scale(maps) -> tuple[float, float]:
    lo = min(float(np.min(m)) for m in maps)
    hi = max(float(np.max(m)) for m in maps)
    if not hi > lo:
        raise DegenerateError("all scans are constant; no joint scale")
    return lo, hi


def laplace_fit(d) -> tuple[float, float]:
    """Maximum-likelihood Laplace location (median) and scale (mean |d - median|)."""
    d = np.asarray(d, dtype=float).ravel()
    mu = float(np.median(d))
    return mu, float(np.mean(np.abs(d - mu)))


def _box(v) -> dict:
    if v.size == 0:
        return {"median": 0.0, "q1": 0.0, "q3": 0.0}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {"median": float(med), "q1": float(q1), "q3": float(q3)}


def difference_map(a, b, scale) -> np.ndarray:
    lo, hi = scale
    return (np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) * 100.0 / (hi - lo)


def difference_stats(a, b, mask_a=None, mask_b=None, scale=None, label: str = "a-b") -> PairStats:
    """Statistics of a - b in percent of the joint gloss range.

    Masked pixels are the union of both masks; masked and unmasked summaries
    use absolute differences.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{a.shape} vs {b.shape}")
    scale = scale or joint_scale([a, b])
    d = difference_map(a, b, scale)
    masked = np.zeros(a.shape, dtype=bool)
    for m in (mask_a, mask_b):
        if m is not None:
            masked |= np.asarray(m, dtype=bool)
    if masked.all():
        raise DegenerateError("no unmasked pixels to compare")
    mu_l, b_l = laplace_fit(d)
    ad = np.abs(d)
    dm, du = ad[masked], ad[~masked]
    counts, _ = np.histogram(d, bins=HIST_EDGES)
    return PairStats(
        label=label,
        n=int(d.size),
        mean=float(d.mean()),
        std=float(d.std(ddof=1)) if d.size > 1 else 0.0,
        laplace_mu=mu_l,
        laplace_b=b_l,
        masked_n=int(dm.size),
        masked_mean=float(dm.mean()) if dm.size else 0.0,
        masked_std=float(dm.std(ddof=1)) if dm.size > 1 else 0.0,
        unmasked_n=int(du.size),
        unmasked_mean=float(du.mean()),
        unmasked_std=float(du.std(ddof=1)) if du.size > 1 else 0.0,
        unmasked_signed_std=float(d[~masked].std(ddof=1)) if du.size > 1 else 0.0,
        hist_counts=tuple(int(c) for c in counts),
        boxplot={"masked": _box(dm), "unmasked": _box(du)},
    )


def consistency_report(maps, masks=None, rotations=ROTATIONS, align: bool = False, window: int = 8,
                       scale=None) -> ConsistencyReport:
    """Compare every rotated scan against the unrotated one.

    Differences are expressed against ``scale``. Normalized ``GlossMap``
    inputs already share one joint range, so their scale is (0, 1);
    otherwise the joint min and max of the given maps is used.
    """
    if scale is None and all(getattr(m, "normalized", False) for m in maps):
        scale = (0.0, 1.0)
    arrays = [getattr(m, "values", m) for m in maps]
    aligned, amasks, offsets = align_rotations(arrays, rotations, align, window, masks)
    scale = scale or joint_scale(aligned)
    report = ConsistencyReport(scale[0], scale[1], offsets=offsets)
    for i in range(1, len(aligned)):
        label = f"I{rotations[i]}-I{rotations[0]}"
        report.pairs.append(difference_stats(aligned[i], aligned[0], amasks[i], amasks[0], scale, label))
    return report


def write_histogram_csv(path, stats: PairStats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "laplace_expected"])
        lo_edges, hi_edges = HIST_EDGES[:-1], HIST_EDGES[1:]
        b = max(stats.laplace_b, 1e-12)
        def cdf(x):
            z = (x - stats.laplace_mu) / b
            return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0.0)), 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0)))

        expected = stats.n * (cdf(hi_edges) - cdf(lo_edges))
        for lo, hi, c, e in zip(lo_edges, hi_edges, stats.hist_counts, expected):
            w.writerow([f"{lo:g}", f"{hi:g}", c, f"{e:.6g}"])


def plot_data(report: ConsistencyReport) -> dict:
    """Series for difference histograms, fitted Laplace curves and boxplots."""
    centers = (0.5 * (HIST_EDGES[:-1] + HIST_EDGES[1:])).tolist()
    series = []
    for p in report.pairs:
        b = max(p.laplace_b, 1e-12)
        density = (np.exp(-np.abs(np.asarray(centers) - p.laplace_mu) / b) / (2 * b) * p.n).tolist()
        series.append({"label": p.label, "bin_centers": centers, "counts": list(p.hist_counts),
                       "laplace_fit": density, "boxplot": p.boxplot})
    return {"pairs": series}
