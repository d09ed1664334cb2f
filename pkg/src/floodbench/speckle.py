"""Speckle filtering of linear-intensity SAR rasters.

The observed intensity is modeled as the true backscatter times a
unit-mean multiplicative noise term whose variance is the reciprocal of
the number of looks. All filters operate on linear intensities, preserve
geometry and nodata placement, and return freshly allocated rasters.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateError, GeometryError, InputError
from .raster import (BinaryMask, FLOODED, Raster, local_stats, read_raster,
                     require_intensity, require_same_grid)

TABLE_WINDOW_SIDES = (3, 5, 7)
TABLE_XI = (0.7, 0.8, 0.9)
TABLE_ALPHA = (1.0, 2.0, 3.0)

FILTER_METHODS = ("none", "median", "lee", "lee_sigma", "frost", "external")


@dataclass(frozen=True)
class SpeckleModel:
    """Unit-mean multiplicative noise with variance 1/looks."""

    looks: float = 1.0

    def __post_init__(self):
        if not self.looks > 0:
            raise InputError("number of looks must be positive")

    @property
    def mean_s(self) -> float:
        return 1.0

    @property
    def var_s(self) -> float:
        return 0.0 if math.isinf(self.looks) else 1.0 / self.looks


@dataclass(frozen=True)
class FilterConfig:
    """One speckle-filtering configuration.

    Parameters must be present exactly when the method requires them:
    ``k`` (window half-size) for median/lee/lee_sigma/frost, ``xi`` for
    lee_sigma, ``alpha`` for frost, ``path`` for external. Window sides are
    restricted to the standard {3, 5, 7} grid unless ``any_window`` is set.
    """

    method: str
    k: int | None = None
    xi: float | None = None
    alpha: float | None = None
    path: str | None = None
    any_window: bool = False

    def __post_init__(self):
        if self.method not in FILTER_METHODS:
            raise InputError("unknown filter method %r" % self.method)
        needs_k = self.method in ("median", "lee", "lee_sigma", "frost")
        if needs_k:
            if self.k is None:
                raise InputError("%s filter requires a window size" % self.method)
            side = 2 * self.k + 1
            if not self.any_window and side not in TABLE_WINDOW_SIDES:
                raise InputError("window side %d outside the standard grid %r"
                                 % (side, TABLE_WINDOW_SIDES))
        elif self.k is not None:
            raise InputError("%s filter takes no window size" % self.method)
        if self.method == "lee_sigma":
            if self.xi is None:
                raise InputError("lee_sigma requires xi")
            if not self.any_window and self.xi not in TABLE_XI:
                raise InputError("xi %r outside the standard grid" % self.xi)
            if not 0 < self.xi <= 1:
                raise InputError("xi must lie in (0, 1]")
        elif self.xi is not None:
            raise InputError("xi only applies to lee_sigma")
        if self.method == "frost":
            if self.alpha is None:
                raise InputError("frost requires a damping factor")
            if not self.any_window and self.alpha not in TABLE_ALPHA:
                raise InputError("alpha %r outside the standard grid" % self.alpha)
            if not self.alpha > 0:
                raise InputError("damping factor must be positive")
        elif self.alpha is not None:
            raise InputError("alpha only applies to frost")
        if self.method == "external" and not self.path:
            raise InputError("external filter requires a raster path")
        if self.method != "external" and self.path is not None:
            raise InputError("path only applies to the external method")

    def describe(self) -> str:
        if self.method in ("median", "lee"):
            return "%s(w=%d)" % (self.method, 2 * self.k + 1)
        if self.method == "lee_sigma":
            return "lee_sigma(w=%d,xi=%g)" % (2 * self.k + 1, self.xi)
        if self.method == "frost":
            return "frost(w=%d,alpha=%g)" % (2 * self.k + 1, self.alpha)
        if self.method == "external":
            return "external(%s)" % self.path
        return "none"


def _window_view(values: np.ndarray, k: int) -> np.ndarray:
    """(H, W, side*side) reflect-padded sliding windows, row-major order."""
    side = 2 * k + 1
    padded = np.pad(values, k, mode="symmetric")
    view = np.lib.stride_tricks.sliding_window_view(padded, (side, side))
    return view.reshape(values.shape[0], values.shape[1], side * side)


def median_filter(raster: Raster, k: int) -> Raster:
    """Replace each cell by the median of its reflected window.

    Nodata cells are dropped from the window sample; an even surviving
    count takes the mean of the two central order statistics.
    """
    if k < 0:
        raise InputError("window half-size must be non-negative")
    if k == 0:
        return raster.like(raster.values)
    fin = raster.finite
    if fin.all():
        out = ndimage.median_filter(raster.values, size=2 * k + 1,
                                    mode="reflect")
    else:
        stack = _window_view(np.where(fin, raster.values, np.nan), k)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            out = np.nanmedian(stack, axis=-1)
        out = np.where(np.isnan(out), raster.nodata, out)
        out = np.where(fin, out, raster.nodata)
    return raster.like(out)


def lee_filter(raster: Raster, k: int, model: SpeckleModel) -> Raster:
    """Minimum mean-square estimate of the backscatter from local statistics.

    The estimate is mean + g*(I - mean) with gain g = Var(R)/Var(I) and
    Var(R) = (Var(I) - mean^2*var_S) / (var_S + 1), clamped to [0, 1].
    Cells whose window variance is zero return the window mean. With
    var_S = 0 the formula reduces to the identity and the input is
    returned unchanged.
    """
    if k < 0:
        raise InputError("window half-size must be non-negative")
    var_s = model.var_s
    if var_s == 0.0:
        return raster.like(raster.values)
    mean_r, var_r = local_stats(raster, k)
    fin = raster.finite
    mean = mean_r.values
    var = var_r.values
    with np.errstate(invalid="ignore", divide="ignore"):
        var_true = (var - mean * mean * var_s) / (var_s + 1.0)
        gain = np.where(var > 0, var_true / np.where(var > 0, var, 1.0), 0.0)
    gain = np.clip(gain, 0.0, 1.0)
    out = mean + gain * (raster.values - mean)
    out = np.where(fin, out, raster.nodata)
    return raster.like(out)


def _sigma_select(win: np.ndarray, xi: float) -> np.ndarray:
    """Vectorized improved-sigma interval selection.

    ``win`` is (P, n) with the window samples per pixel in row-major window
    order (center at n//2). For each pixel, the contiguous run of
    m = ceil(xi*n) sorted samples whose mean is closest to the full window
    mean is selected; ties prefer a run covering the center value's rank,
    then the lowest run start. Returns the selected run means.
    """
    p, n = win.shape
    m = min(max(int(math.ceil(xi * n)), 1), n)
    runs = n - m + 1
    s = np.sort(win, axis=1)
    csum = np.zeros((p, n + 1))
    np.cumsum(s, axis=1, out=csum[:, 1:])
    run_mean = (csum[:, m:m + runs] - csum[:, :runs]) / m
    full_mean = csum[:, n] / n
    score = np.abs(run_mean - full_mean[:, None])
    best = score.min(axis=1)
    tied = score == best[:, None]
    center = win[:, n // 2]
    rank = np.sum(win < center[:, None], axis=1)
    starts = np.arange(runs)[None, :]
    covers = (starts <= rank[:, None]) & (rank[:, None] <= starts + m - 1)
    preferred = tied & covers
    has_pref = preferred.any(axis=1)
    j = np.where(has_pref, preferred.argmax(axis=1), tied.argmax(axis=1))
    return run_mean[np.arange(p), j]


def lee_sigma_filter(raster: Raster, k: int, xi: float,
                     row_chunk: int = 64) -> Raster:
    """Mean of the sigma-interval sample of each reflected window.

    The interval is the contiguous run of the sorted window sample holding
    a fraction xi of the pixels whose mean best matches the full window
    mean. The center pixel is always part of the candidate sample.
    """
    if k < 0:
        raise InputError("window half-size must be non-negative")
    if not 0 < xi <= 1:
        raise InputError("xi must lie in (0, 1]")
    if k == 0:
        return raster.like(raster.values)
    fin = raster.finite
    h, w = raster.values.shape
    if fin.all():
        out = np.empty((h, w))
        padded = np.pad(raster.values, k, mode="symmetric")
        side = 2 * k + 1
        view = np.lib.stride_tricks.sliding_window_view(padded, (side, side))
        for lo in range(0, h, row_chunk):
            hi = min(lo + row_chunk, h)
            block = view[lo:hi].reshape(-1, side * side)
            out[lo:hi] = _sigma_select(block, xi).reshape(hi - lo, w)
        return raster.like(out)
    return _lee_sigma_masked(raster, k, xi)


def _lee_sigma_masked(raster: Raster, k: int, xi: float) -> Raster:
    # slow path for rasters with nodata: per-pixel selection over the
    # finite window members only
    fin = raster.finite
    stack = _window_view(np.where(fin, raster.values, np.nan), k)
    out = np.full(raster.values.shape, raster.nodata)
    rows, cols = np.nonzero(fin)
    n_full = stack.shape[-1]
    for r, c in zip(rows.tolist(), cols.tolist()):
        sample = stack[r, c]
        good = sample[~np.isnan(sample)]
        if good.size == 0:
            continue
        m = min(max(int(math.ceil(xi * good.size)), 1), good.size)
        runs = good.size - m + 1
        srt = np.sort(good)
        csum = np.concatenate([[0.0], np.cumsum(srt)])
        run_mean = (csum[m:m + runs] - csum[:runs]) / m
        score = np.abs(run_mean - good.mean())
        tied = score == score.min()
        rank = int(np.sum(good < sample[n_full // 2]))
        starts = np.arange(runs)
        covers = (starts <= rank) & (rank <= starts + m - 1)
        pref = tied & covers
        j = int(np.argmax(pref)) if pref.any() else int(np.argmax(tied))
        out[r, c] = run_mean[j]
    return raster.like(out)


def frost_filter(raster: Raster, k: int, alpha: float) -> Raster:
    """Exponentially distance-weighted window mean, e^(-alpha*d) weights.

    d is the Euclidean offset of each window member from the center, in
    pixels. Weights are renormalized over the non-nodata members.
    """
    if k < 0:
        raise InputError("window half-size must be non-negative")
    if not alpha > 0:
        raise InputError("damping factor must be positive")
    off = np.arange(-k, k + 1, dtype=np.float64)
    dist = np.hypot(off[:, None], off[None, :])
    weights = np.exp(-alpha * dist)
    fin = raster.finite
    if fin.all():
        out = ndimage.correlate(raster.values, weights / weights.sum(),
                                mode="reflect")
    else:
        v0 = np.where(fin, raster.values, 0.0)
        num = ndimage.correlate(v0, weights, mode="reflect")
        den = ndimage.correlate(fin.astype(np.float64), weights, mode="reflect")
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(den > 0, num / np.where(den > 0, den, 1.0),
                           raster.nodata)
        out = np.where(fin, out, raster.nodata)
    return raster.like(out)


def enl(raster: Raster, region: BinaryMask) -> float:
    """Equivalent number of looks (mean^2 / variance) over a region.

    The region should be quasi-homogeneous; a constant region has no
    defined ENL and raises DegenerateError.
    """
    require_same_grid(raster, region, "raster and ENL region")
    sel = (region.values == FLOODED) & raster.finite
    vals = raster.values[sel]
    if vals.size < 2:
        raise InputError("ENL region needs at least 2 finite pixels")
    mean = float(vals.mean())
    var = float(vals.var())
    if var == 0.0:
        raise DegenerateError("degenerate homogeneous region")
    return mean * mean / var


def apply_filter_config(raster: Raster, config: FilterConfig,
                        model: SpeckleModel | None = None) -> Raster:
    """Dispatch a filter configuration against a linear-intensity raster."""
    require_intensity(raster)
    model = model or SpeckleModel()
    if config.method == "none":
        return raster
    if config.method == "median":
        return median_filter(raster, config.k)
    if config.method == "lee":
        return lee_filter(raster, config.k, model)
    if config.method == "lee_sigma":
        return lee_sigma_filter(raster, config.k, config.xi)
    if config.method == "frost":
        return frost_filter(raster, config.k, config.alpha)
    if config.method == "external":
        ext = read_raster(config.path)
        if ext.geometry != raster.geometry:
            raise GeometryError(
                "external raster geometry mismatch: %r vs %r"
                % (ext.geometry, raster.geometry))
        require_intensity(ext)
        return ext
    raise InputError("unknown filter method %r" % config.method)
