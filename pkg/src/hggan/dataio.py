"""Subject records, matrix file formats, Pearson FC and the synthetic cohort.

Matrix files come in two flavours:

* CSV: a header line ``"rows cols kind"`` followed by ``rows`` lines of
  comma-separated values.
* Binary: a 16-byte header (8-byte magic ``HGGANMAT``, uint32 rows, uint32
  cols, little-endian) followed by row-major little-endian float64 data.

Vectors are stored as ``rows x 1`` matrices.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateFeatureError, DimensionError, InputError, ManifestError

__all__ = [
    "SubjectRecord",
    "SynthConfig",
    "write_matrix",
    "read_matrix",
    "read_matrix_kind",
    "pearson_fc",
    "synth_cohort",
    "planted_nodes",
    "save_manifest",
    "load_manifest",
]

MAGIC = b"HGGANMAT"
_HEADER = struct.Struct("<8sII")
MANIFEST_VERSION = 1
GROUPS = ("NC", "EMCI", "LMCI", "AD", "A", "B")


# -- matrix files -----------------------------------------------------------

def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionError(f"expected a matrix or vector, got shape {x.shape}")
    return x


def _fmt(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".bin", ".mat64", ".f64"):
        return "bin"
    raise InputError(f"cannot infer matrix format from {path!s}; use .csv or .bin")


def write_matrix(path, x, kind: str = "MAT", fmt: str | None = None) -> Path:
    path = Path(path)
    x = _as_matrix(x)
    fmt = fmt or _fmt(path)
    rows, cols = x.shape
    if fmt == "csv":
        if not kind or any(c.isspace() for c in kind):
            raise InputError(f"matrix kind must be a single token, got {kind!r}")
        lines = [f"{rows} {cols} {kind}"]
        lines.extend(",".join(repr(float(v)) for v in row) for row in x)
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, rows, cols))
            fh.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
    else:
        raise InputError(f"unknown matrix format {fmt!r}")
    return path


def read_matrix_kind(path) -> tuple[np.ndarray, str | None]:
    """Read a matrix file; returns ``(matrix, kind)`` (kind is None for binary files)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"matrix file not found: {path}")
    if _fmt(path) == "csv":
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if not lines:
            raise InputError(f"{path}: empty file")
        head = lines[0].split()
        if len(head) != 3:
            raise InputError(f"{path}: header must be 'rows cols kind'")
        rows, cols, kind = int(head[0]), int(head[1]), head[2]
        try:
            data = np.array([[float(t) for t in ln.split(",")] for ln in lines[1:]], dtype=float)
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
        if data.size == 0:
            data = data.reshape(0, cols)
        if data.shape != (rows, cols):
            raise InputError(f"{path}: header says {rows}x{cols}, body is {data.shape}")
        return data, kind
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise InputError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise InputError(f"{path}: expected {rows}x{cols} float64 values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).copy(), None


def read_matrix(path) -> np.ndarray:
    return read_matrix_kind(path)[0]


# -- records ----------------------------------------------------------------

@dataclass
class SubjectRecord:
    id: str
    group: str
    bold: np.ndarray
    sc: np.ndarray
    fc: np.ndarray

    def __post_init__(self):
        self.bold = np.asarray(self.bold, dtype=float)
        self.sc = np.asarray(self.sc, dtype=float)
        self.fc = np.asarray(self.fc, dtype=float)
        if self.group not in GROUPS:
            raise InputError(f"subject {self.id}: group {self.group!r} not in {GROUPS}")
        n = self.bold.shape[0]
        if self.bold.ndim != 2 or self.bold.shape[1] < 8:
            raise DimensionError(f"subject {self.id}: time series must be n x d with d >= 8, got {self.bold.shape}")
        for name, mat in (("sc", self.sc), ("fc", self.fc)):
            if mat.shape != (n, n):
                raise DimensionError(f"subject {self.id}: {name} has shape {mat.shape}, expected {(n, n)}")
        if (self.sc < 0).any():
            raise InputError(f"subject {self.id}: structural connectivity has negative entries")
        if np.abs(self.fc).max() > 1 + 1e-12 or not np.allclose(np.diag(self.fc), 1.0):
            raise InputError(f"subject {self.id}: FC must lie in [-1, 1] with unit diagonal")

    @property
    def n(self) -> int:
        return self.bold.shape[0]


def pearson_fc(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[1] < 2:
        raise DimensionError(f"time series must be n x d with d >= 2, got {b.shape}")
    centered = b - b.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered**2).sum(axis=1))
    scale = np.maximum(1.0, np.abs(b).max(axis=1))
    flat = np.flatnonzero(norms <= 1e-12 * scale)
    if flat.size:
        raise DegenerateFeatureError(f"zero-variance time series in row(s) {flat.tolist()}")
    z = centered / norms[:, None]
    fc = np.clip(z @ z.T, -1.0, 1.0)
    fc = 0.5 * (fc + fc.T)
    np.fill_diagonal(fc, 1.0)
    return fc


# -- synthetic cohort -------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    n: int = 12
    d: int = 130
    subjects_per_group: int = 20
    block_count: int = 4
    group_effect: float = 0.5
    noise_sd: float = 0.5
    seed: int = 0
    within_corr: float = 0.6
    subject_jitter: float = 0.1

    def __post_init__(self):
        if min(self.n, self.d, self.subjects_per_group, self.block_count) <= 0 or self.noise_sd <= 0:
            raise ConfigError("n, d, subjects_per_group, block_count and noise_sd must be positive")
        if not 0.0 <= self.group_effect <= 1.0:
            raise ConfigError("group_effect must lie in [0, 1]")
        if self.block_count < 2 or self.block_count > self.n:
            raise ConfigError("block_count must lie in 2..n")
        if self.d < 8:
            raise ConfigError("d must be at least 8")


def _blocks(cfg: SynthConfig) -> list[np.ndarray]:
    return np.array_split(np.arange(cfg.n), cfg.block_count)


def _perturbed_pair(cfg: SynthConfig) -> tuple[int, int]:
    rng = np.random.default_rng([cfg.seed, 7919])
    a, b = sorted(rng.choice(cfg.block_count, size=2, replace=False))
    return int(a), int(b)


def planted_nodes(cfg: SynthConfig) -> np.ndarray:
    """0-based indices of the nodes in the two blocks whose link group B perturbs."""
    blocks = _blocks(cfg)
    a, b = _perturbed_pair(cfg)
    return np.sort(np.concatenate([blocks[a], blocks[b]]))


def _latent_cov(cfg: SynthConfig, rho: float, effect: float) -> np.ndarray:
    blocks = _blocks(cfg)
    cov = np.zeros((cfg.n, cfg.n))
    for blk in blocks:
        cov[np.ix_(blk, blk)] = rho
    a, b = _perturbed_pair(cfg)
    cross = effect * rho
    cov[np.ix_(blocks[a], blocks[b])] = cross
    cov[np.ix_(blocks[b], blocks[a])] = cross
    np.fill_diagonal(cov, 1.0)
    return cov


def synth_cohort(cfg: SynthConfig = SynthConfig()) -> list[SubjectRecord]:
    """Two groups (A, B) with block-structured latent covariance.

    Group B adds correlation ``group_effect * rho`` between one seeded pair
    of blocks.  Subject ``i`` of each group uses the same random stream, so
    with ``group_effect = 0`` the groups are identical draw for draw.
    """
    records = []
    for group, effect in (("A", 0.0), ("B", cfg.group_effect)):
        for i in range(cfg.subjects_per_group):
            rng = np.random.default_rng([cfg.seed, i])
            rho = cfg.within_corr + rng.uniform(-cfg.subject_jitter, cfg.subject_jitter)
            cov = _latent_cov(cfg, rho, effect)
            evals, evecs = np.linalg.eigh(cov)
            if evals.min() < -1e-10:
                raise ConfigError(f"planted covariance is not PSD (min eigenvalue {evals.min():.3g})")
            root = evecs * np.sqrt(np.clip(evals, 0.0, None))
            bold = root @ rng.standard_normal((cfg.n, cfg.d)) + cfg.noise_sd * rng.standard_normal((cfg.n, cfg.d))
            noise = rng.standard_normal((cfg.n, cfg.n))
            noise = (noise + noise.T) / np.sqrt(2.0)
            sc = 50.0 * (np.abs(cov) + 0.05) * np.exp(cfg.noise_sd * noise)
            np.fill_diagonal(sc, 0.0)
            records.append(SubjectRecord(f"{group}_{i:03d}", group, bold, sc, pearson_fc(bold)))
    return records


# -- manifests --------------------------------------------------------------

def save_manifest(records, directory, fmt: str = "bin", include_fc: bool = True) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = list(records)
    if not records:
        raise ManifestError("no records to save")
    ext = {"bin": ".bin", "csv": ".csv"}[fmt]
    entries = []
    for r in records:
        entry = {"id": r.id, "group": r.group}
        for key, mat, kind in (("bold", r.bold, "BOLD"), ("sc", r.sc, "SC"), ("fc", r.fc, "FC")):
            if key == "fc" and not include_fc:
                continue
            name = f"{r.id}_{key}{ext}"
            write_matrix(directory / name, mat, kind=kind)
            entry[f"{key}_path"] = name
        entries.append(entry)
    manifest = {"version": MANIFEST_VERSION, "n": records[0].n, "subjects": entries}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_manifest(path) -> list[SubjectRecord]:
    """Load subjects listed in a manifest; relative paths resolve against its directory.

    A missing ``fc_path`` is filled in with :func:`pearson_fc` of the time series.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON ({exc})") from None
    for key in ("version", "n", "subjects"):
        if key not in manifest:
            raise ManifestError(f"{path}: missing key {key!r}")
    n = int(manifest["n"])
    base = path.parent
    records = []
    for entry in manifest["subjects"]:
        sid = str(entry.get("id", "?"))

        def load(key):
            p = base / entry[key]
            if not p.exists():
                raise ManifestError(f"subject {sid}: file not found: {p}")
            return read_matrix(p)

        try:
            bold = load("bold_path")
            sc = load("sc_path")
            fc = load("fc_path") if entry.get("fc_path") else pearson_fc(bold)
        except KeyError as exc:
            raise ManifestError(f"subject {sid}: missing key {exc}") from None
        if bold.shape[0] != n or sc.shape != (n, n) or fc.shape != (n, n):
            raise ManifestError(
                f"subject {sid}: shapes bold {bold.shape}, sc {sc.shape}, fc {fc.shape} inconsistent with n={n}"
            )
        try:
            records.append(SubjectRecord(sid, str(entry["group"]), bold, sc, fc))
        except (DimensionError, InputError) as exc:
            raise ManifestError(f"subject {sid}: {exc}") from None
    return records
