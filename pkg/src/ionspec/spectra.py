"""Delay-grid signals, frequency-domain spectra, peaks, and grid I/O.

The one-sided transform approximates ``S(W) = int_0^inf dt S(t) e^{-iWt}``
per scanned axis with the Riemann measure ``dt``, after exponential
apodization and zero padding.  Frequency axes are two-sided and centered.
With this kernel a coherence ``e^{-i w t}`` peaks at ``W = -w``; the
``flip_axes`` display option negates the axes so excitation energies appear
at positive frequencies.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.ndimage


@dataclass(frozen=True)
class Axis:
    """Uniformly spaced named axis."""

    name: str
    start: float
    step: float
    count: int

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"axis {self.name!r} needs at least 2 points")

    @property
    def values(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)


def _check_values(axes, values):
    shape = tuple(ax.count for ax in axes)
    values = np.asarray(values)
    if values.shape != shape:
        raise ValueError(f"values shape {values.shape} != axes shape {shape}")
    return values


@dataclass(frozen=True)
class SignalGrid:
    """Complex signal on a time-delay grid."""

    axes: tuple[Axis, ...]
    values: np.ndarray
    fixed: dict[str, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "values",
                           _check_values(self.axes, self.values).astype(complex))

    def axis(self, name: str) -> tuple[int, Axis]:
        for i, ax in enumerate(self.axes):
            if ax.name == name:
                return i, ax
        raise KeyError(f"no axis named {name!r}")


@dataclass(frozen=True)
class SpectrumGrid:
    """Complex spectrum on centered two-sided frequency axes."""

    axes: tuple[Axis, ...]
    values: np.ndarray
    scaling: str = "linear"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        vals = _check_values(self.axes, self.values)
        object.__setattr__(self, "values", vals.astype(complex))

    def axis(self, name: str) -> tuple[int, Axis]:
        for i, ax in enumerate(self.axes):
            if ax.name == name:
                return i, ax
        raise KeyError(f"no axis named {name!r}")


@dataclass(frozen=True)
class Peak:
    """Local maximum of a spectrum's magnitude."""

    position: tuple[float, ...]
    amplitude: complex
    prominence: float


def frequency_axis_name(time_name: str) -> str:
    if time_name.startswith("t") and time_name[1:].isdigit():
        return "omega" + time_name[1:]
    return "omega_" + time_name


def fourier_nd(grid: SignalGrid, axes=None, apodization=0.0,
               zero_pad: int = 4, flip_axes: bool = False) -> SpectrumGrid:
    """One-sided Fourier transform of the named scanned axes.

    ``apodization`` is an exponential rate (per axis when given as a dict);
    ``zero_pad`` multiplies each transformed axis length.  When ``flip_axes``
    is set, the transformed axes are negated (data reversed accordingly).
    """
    if not isinstance(grid, SignalGrid):
        raise TypeError("fourier_nd expects a time-domain SignalGrid")
    names = [ax.name for ax in grid.axes] if axes is None else list(axes)
    if zero_pad < 1:
        raise ValueError("zero_pad factor must be >= 1")
    if np.isscalar(apodization):
        apod = {name: float(apodization) for name in names}
    else:
        apod = {name: float(apodization.get(name, 0.0)) for name in names}
    for name, eta in apod.items():
        if eta < 0:
            raise ValueError(f"apodization rate for {name!r} must be >= 0")

    values = np.array(grid.values, dtype=complex)
    out_axes = list(grid.axes)
    for name in names:
        k, ax = grid.axis(name)
        window = np.exp(-apod[name] * ax.values)
        shape = [1] * values.ndim
        shape[k] = ax.count
        values = values * window.reshape(shape)
        n_pad = ax.count * zero_pad
        values = np.fft.fft(values, n=n_pad, axis=k) * ax.step
        freqs = 2 * np.pi * np.fft.fftfreq(n_pad, d=ax.step)
        order = np.argsort(freqs)
        values = np.take(values, order, axis=k)
        freqs = freqs[order]
        # phase correction for grids that do not start at t = 0
        if ax.start != 0.0:
            phase = np.exp(-1j * freqs * ax.start)
            values = values * phase.reshape([n_pad if i == k else 1
                                             for i in range(values.ndim)])
        if flip_axes:
            values = np.flip(values, axis=k)
            freqs = -freqs[::-1]
        out_axes[k] = Axis(frequency_axis_name(name), float(freqs[0]),
                           float(freqs[1] - freqs[0]), n_pad)

    meta = dict(grid.metadata)
    meta["transform"] = {
        "axes": names,
        "apodization": apod,
        "zero_pad": zero_pad,
        "flip_axes": flip_axes,
    }
    return SpectrumGrid(tuple(out_axes), values, "linear", meta)


def flip_spectrum(spectrum: SpectrumGrid, axes=None) -> SpectrumGrid:
    """Negate the named frequency axes; an involution on the data."""
    names = [ax.name for ax in spectrum.axes] if axes is None else list(axes)
    values = np.array(spectrum.values)
    out_axes = list(spectrum.axes)
    for name in names:
        k, ax = spectrum.axis(name)
        values = np.flip(values, axis=k)
        out_axes[k] = Axis(ax.name, -ax.stop, ax.step, ax.count)
    return replace(spectrum, axes=tuple(out_axes), values=values)


def arcsinh_scale(spectrum: SpectrumGrid) -> SpectrumGrid:
    """Elementwise ``arcsinh|S|`` for display; tags the scaling as such."""
    if spectrum.scaling == "arcsinh":
        raise ValueError("spectrum is already arcsinh-scaled")
    vals = np.arcsinh(np.abs(spectrum.values))
    meta = dict(spectrum.metadata)
    meta["scaling"] = "arcsinh"
    return SpectrumGrid(spectrum.axes, vals, "arcsinh", meta)


def find_peaks(spectrum: SpectrumGrid, threshold: float = 0.05,
               prominence_radius: int = 2) -> list[Peak]:
    """Local maxima of ``|values|`` above ``threshold * max``.

    Positions are refined by per-axis quadratic interpolation; prominence is
    measured against the strongest value on the boundary of a
    ``(2r+1)``-sized window.  Peaks come back sorted by amplitude.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must be a fraction in (0, 1)")
    mag = np.abs(spectrum.values)
    top = mag.max()
    if top == 0:
        return []
    footprint = scipy.ndimage.maximum_filter(mag, size=3, mode="nearest")
    mask = (mag >= footprint) & (mag > threshold * top)
    peaks = []
    axes_vals = [ax.values for ax in spectrum.axes]
    for idx in np.argwhere(mask):
        idx = tuple(int(i) for i in idx)
        pos = []
        for k, ax in enumerate(spectrum.axes):
            i = idx[k]
            x = axes_vals[k][i]
            if 0 < i < ax.count - 1:
                lo = mag[idx[:k] + (i - 1,) + idx[k + 1:]]
                hi = mag[idx[:k] + (i + 1,) + idx[k + 1:]]
                denom = lo - 2 * mag[idx] + hi
                if denom < 0:
                    x += 0.5 * (lo - hi) / denom * ax.step
            pos.append(float(x))
        r = prominence_radius
        window = tuple(slice(max(0, i - r), min(n, i + r + 1))
                       for i, n in zip(idx, mag.shape))
        patch = mag[window].copy()
        inner = tuple(slice(1, -1) for _ in idx)
        if all(s > 2 for s in patch.shape):
            patch[inner] = -np.inf
            border_max = patch.max()
        else:
            border_max = 0.0
        prominence = float(mag[idx] - max(border_max, 0.0))
        peaks.append(Peak(tuple(pos), complex(spectrum.values[idx]), prominence))
    peaks.sort(key=lambda p: -abs(p.amplitude))
    return peaks


def difference_signal(a: SignalGrid, b: SignalGrid) -> SignalGrid:
    """Elementwise ``a - b`` after checking the grids coincide."""
    if len(a.axes) != len(b.axes):
        raise ValueError("grids have different dimensionality")
    for ax_a, ax_b in zip(a.axes, b.axes):
        same = (ax_a.name == ax_b.name and ax_a.count == ax_b.count
                and np.isclose(ax_a.start, ax_b.start)
                and np.isclose(ax_a.step, ax_b.step))
        if not same:
            raise ValueError(f"axes {ax_a} and {ax_b} do not match")
    meta = {"difference_of": [a.metadata.get("protocol_hash"),
                              b.metadata.get("protocol_hash")],
            **{k: v for k, v in a.metadata.items() if k != "protocol_hash"}}
    return SignalGrid(a.axes, a.values - b.values, dict(a.fixed), meta)


# ---------------------------------------------------------------------------
# CSV + JSON sidecar serialization
# ---------------------------------------------------------------------------

_FMT = "{:.17g}"


def _grid_payload(grid) -> dict:
    kind = "spectrum" if isinstance(grid, SpectrumGrid) else "signal"
    payload = {
        "grid_type": kind,
        "axes": [
            {"name": ax.name, "start": ax.start, "step": ax.step, "count": ax.count}
            for ax in grid.axes
        ],
        "metadata": grid.metadata,
    }
    if kind == "signal":
        payload["fixed"] = grid.fixed
    else:
        payload["scaling"] = grid.scaling
    return payload


def write_grid(grid, basepath) -> list[str]:
    """Write ``<base>.csv`` (one row per grid point) and ``<base>.meta.json``.

    Values are written with 17 significant digits; bit-exactness across
    platforms is not promised.
    """
    basepath = str(basepath)
    csv_path = basepath + ".csv"
    meta_path = basepath + ".meta.json"
    axes_vals = [ax.values for ax in grid.axes]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([ax.name for ax in grid.axes] + ["re", "im"])
        for idx in np.ndindex(grid.values.shape):
            v = grid.values[idx]
            row = [_FMT.format(axes_vals[k][i]) for k, i in enumerate(idx)]
            writer.writerow(row + [_FMT.format(v.real), _FMT.format(v.imag)])
    with open(meta_path, "w") as fh:
        json.dump(_grid_payload(grid), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [csv_path, meta_path]


def read_grid(meta_path):
    """Load a grid written by :func:`write_grid` from its sidecar path."""
    meta_path = str(meta_path)
    with open(meta_path) as fh:
        payload = json.load(fh)
    axes = tuple(Axis(a["name"], a["start"], a["step"], a["count"])
                 for a in payload["axes"])
    shape = tuple(ax.count for ax in axes)
    csv_path = meta_path[:-len(".meta.json")] + ".csv"
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    values = (data[:, -2] + 1j * data[:, -1]).reshape(shape)
    if payload["grid_type"] == "signal":
        return SignalGrid(axes, values, payload.get("fixed", {}),
                          payload.get("metadata", {}))
    return SpectrumGrid(axes, values, payload.get("scaling", "linear"),
                        payload.get("metadata", {}))
