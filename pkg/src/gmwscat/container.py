"""Self-describing binary containers and CSV exports.

All containers share a little-endian framing: 4 magic bytes, a u16 format
version, then type-specific fields.  Float payloads are raw 64-bit rows.
Magics: GMWB (filter bank), STNC (scattering output), PCAM (PCA model),
GLMC (lasso-GLM model).
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import DataError
from .features import FeatureLayout, PcaModel
from .filters import FilterBank, FilterFamily, GmwParams
from .scattering import ScatteringConfig, ScatteringOutput

VERSION = 1

MAGIC_BANK = b"GMWB"
MAGIC_SCATTER = b"STNC"
MAGIC_PCA = b"PCAM"
MAGIC_GLM = b"GLMC"

_FAMILY_CODE = {FilterFamily.GMW: 0, FilterFamily.MORLET: 1}
_FAMILY_FROM_CODE = {v: k for k, v in _FAMILY_CODE.items()}


def _read_exact(fh, count, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise DataError(f"truncated container while reading {what}")
    return buf


def _expect_magic(fh, magic):
    got = _read_exact(fh, 4, "magic")
    if got != magic:
        raise DataError(f"bad magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
    if version != VERSION:
        raise DataError(f"unsupported container version {version}")


def write_filter_bank(bank: FilterBank, path) -> None:
    """GMWB: family u8, then N, Q, J, beta, gamma as f64, then (J+2) x N f64
    rows (the J+1 filters followed by the lowpass).  For a Morlet bank the
    beta slot carries the center frequency and gamma is 0."""
    if bank.family is FilterFamily.GMW:
        beta, gamma = bank.params.beta, bank.params.gamma
    else:
        beta, gamma = bank.center, 0.0
    with open(path, "wb") as fh:
        fh.write(MAGIC_BANK)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<B", _FAMILY_CODE[bank.family]))
        fh.write(struct.pack("<5d", float(bank.signal_len), bank.quality,
                             float(bank.j_max), beta, gamma))
        fh.write(np.ascontiguousarray(bank.filters, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bank.lowpass, dtype="<f8").tobytes())


def read_filter_bank(path) -> FilterBank:
    with open(path, "rb") as fh:
        _expect_magic(fh, MAGIC_BANK)
        (code,) = struct.unpack("<B", _read_exact(fh, 1, "family"))
        if code not in _FAMILY_FROM_CODE:
            raise DataError(f"unknown filter family code {code}")
        family = _FAMILY_FROM_CODE[code]
        n_f, quality, j_f, beta, gamma = struct.unpack("<5d", _read_exact(fh, 40, "header"))
        n, j_max = int(n_f), int(j_f)
        rows = np.frombuffer(_read_exact(fh, (j_max + 2) * n * 8, "matrix"),
                             dtype="<f8").reshape(j_max + 2, n)
    scales = tuple((j - j_max) / quality for j in range(j_max + 1))
    filters = rows[:-1].copy()
    lowpass = rows[-1].copy()
    filters.flags.writeable = False
    lowpass.flags.writeable = False
    return FilterBank(family=family, signal_len=n, quality=quality, j_max=j_max,
                      scales=scales, filters=filters, lowpass=lowpass,
                      params=GmwParams(beta, gamma) if family is FilterFamily.GMW else None,
                      center=beta if family is FilterFamily.MORLET else None)


def bank_to_csv(bank: FilterBank, path) -> None:
    """One row per filter (lowpass last), columns = DFT bins."""
    labels = [f"j{j}" for j in range(bank.num_filters)] + ["lowpass"]
    data = np.vstack([bank.filters, bank.lowpass])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# filter bank, family=%s, N=%d, Q=%g, J=%d\n"
                 % (bank.family.value, bank.signal_len, bank.quality, bank.j_max))
        fh.write("row," + ",".join(f"bin{k}" for k in range(bank.signal_len)) + "\n")
        for label, row in zip(labels, data):
            fh.write(label + "," + ",".join(repr(float(v)) for v in row) + "\n")


def write_scattering(out: ScatteringOutput, path) -> None:
    """STNC: u16 depth, u64 input length, then per order a u8 rank, u64 dims,
    and the f64 tensor in C order (order 0 first)."""
    arrays = [out.layer0] + list(out.layers)
    with open(path, "wb") as fh:
        fh.write(MAGIC_SCATTER)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<HQ", len(out.layers), out.input_len))
        for arr in arrays:
            arr = np.asarray(arr, dtype="<f8")
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def read_scattering(path, cfg: ScatteringConfig | None = None) -> ScatteringOutput:
    with open(path, "rb") as fh:
        _expect_magic(fh, MAGIC_SCATTER)
        depth, input_len = struct.unpack("<HQ", _read_exact(fh, 10, "header"))
        arrays = []
        for _ in range(depth + 1):
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "rank"))
            shape = struct.unpack(f"<{ndim}Q", _read_exact(fh, 8 * ndim, "shape"))
            count = int(np.prod(shape))
            arr = np.frombuffer(_read_exact(fh, count * 8, "tensor"),
                                dtype="<f8").reshape(shape)
            arrays.append(arr)
    return ScatteringOutput(layer0=arrays[0], layers=arrays[1:],
                            config=cfg, input_len=int(input_len))


def scattering_to_csv(out: ScatteringOutput, path, clamp: bool = True) -> None:
    """Single flattened row with a header naming each position (m, path, t).

    Values are clamped at zero on write-out, removing the tiny negative
    lowpass ringing that in-memory tensors may carry.
    """
    shapes = {0: out.layer0.shape}
    for m, arr in enumerate(out.layers, start=1):
        shapes[m] = arr.shape
    layout = FeatureLayout(shapes)
    values = np.concatenate([np.asarray(out.layer0).ravel()]
                            + [np.asarray(a).ravel() for a in out.layers])
    if clamp:
        values = np.maximum(values, 0.0)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(layout.column_names()) + "\n")
        fh.write(",".join(repr(float(v)) for v in values) + "\n")


def write_pca(model: PcaModel, path) -> None:
    """PCAM: u64 k and d, then mean (d), singular values (k), components (k x d)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC_PCA)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<QQ", model.k, model.dim))
        fh.write(np.ascontiguousarray(model.mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.singular_values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.components, dtype="<f8").tobytes())


def read_pca(path) -> PcaModel:
    with open(path, "rb") as fh:
        _expect_magic(fh, MAGIC_PCA)
        k, d = struct.unpack("<QQ", _read_exact(fh, 16, "dims"))
        mean = np.frombuffer(_read_exact(fh, d * 8, "mean"), dtype="<f8").copy()
        sing = np.frombuffer(_read_exact(fh, k * 8, "singular values"), dtype="<f8").copy()
        comps = np.frombuffer(_read_exact(fh, k * d * 8, "components"),
                              dtype="<f8").reshape(k, d).copy()
    return PcaModel(mean=mean, components=comps, singular_values=sing)


def write_glm(classes, intercept, coef, lambda_, scale_mu, scale_sd, path) -> None:
    """GLMC: u64 C and d, f64 lambda, class names as a u32-length UTF-8 blob
    (newline separated), then intercept (C), coef (C x d), mu (d), sd (d)."""
    names = "\n".join(str(c) for c in classes).encode("utf-8")
    coef = np.asarray(coef, dtype="<f8")
    ncls, d = coef.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC_GLM)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<QQd", ncls, d, float(lambda_)))
        fh.write(struct.pack("<I", len(names)))
        fh.write(names)
        fh.write(np.ascontiguousarray(intercept, dtype="<f8").tobytes())
        fh.write(coef.tobytes())
        fh.write(np.ascontiguousarray(scale_mu, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(scale_sd, dtype="<f8").tobytes())


def read_glm(path):
    """Returns (classes, intercept, coef, lambda_, scale_mu, scale_sd)."""
    with open(path, "rb") as fh:
        _expect_magic(fh, MAGIC_GLM)
        ncls, d, lambda_ = struct.unpack("<QQd", _read_exact(fh, 24, "dims"))
        (blob_len,) = struct.unpack("<I", _read_exact(fh, 4, "class names"))
        classes = _read_exact(fh, blob_len, "class names").decode("utf-8").split("\n")
        intercept = np.frombuffer(_read_exact(fh, ncls * 8, "intercept"), dtype="<f8").copy()
        coef = np.frombuffer(_read_exact(fh, ncls * d * 8, "coef"),
                             dtype="<f8").reshape(ncls, d).copy()
        mu = np.frombuffer(_read_exact(fh, d * 8, "mu"), dtype="<f8").copy()
        sd = np.frombuffer(_read_exact(fh, d * 8, "sd"), dtype="<f8").copy()
    return classes, intercept, coef, lambda_, mu, sd
