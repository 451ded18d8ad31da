"""Data containers, CSV ingestion and the on-disk draw archive."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

MISSING_TOKENS = ("", "NA")
HYPER_NAMES = ("a_mu1", "a_mu2", "a_gamma1", "a_gamma2", "nu_gamma")


class ValidationError(ValueError):
    """Raised for malformed inputs (bad files, dimension mismatches, bad configs)."""


class NumericalError(RuntimeError):
    """Raised when a linear-algebra step breaks down during sampling."""


@dataclass(frozen=True)
class FunctionalDataset:
    """Curves observed on a common grid together with the scalar design.

    ``Y`` holds NaN at unobserved cells; ``observed`` is the authoritative mask.
    """

    Y: np.ndarray
    observed: np.ndarray
    tau: np.ndarray
    X: np.ndarray
    predictor_names: tuple = ()

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        obs = np.array(self.observed, dtype=bool)
        tau = np.array(self.tau, dtype=float)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim != 2 or obs.shape != Y.shape:
            raise ValidationError("Y and observed mask must be matching n x m matrices")
        n, m = Y.shape
        if n < 2 or m < 2:
            raise ValidationError(f"need n >= 2 and m >= 2, got n={n}, m={m}")
        if tau.shape != (m,):
            raise ValidationError(f"tau has length {tau.size}, expected {m}")
        if not np.all(np.isfinite(tau)) or np.any(np.diff(tau) <= 0):
            raise ValidationError("tau must be finite and strictly increasing")
        if X.shape[0] != n:
            raise ValidationError(f"design has {X.shape[0]} rows but there are {n} curves")
        if not np.all(np.isfinite(X)):
            raise ValidationError("design contains non-finite entries")
        empty = np.flatnonzero(~obs.any(axis=1))
        if empty.size:
            raise ValidationError(f"subject has no observations (row {empty[0]})")
        if not np.all(np.isfinite(Y[obs])):
            raise ValidationError("observed cells must be finite")
        Y[~obs] = np.nan
        names = tuple(self.predictor_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValidationError("predictor_names length does not match design columns")
        for name, arr in (("Y", Y), ("observed", obs), ("tau", tau), ("X", X)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "predictor_names", names)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def _parse_cell(cell: str, where: str) -> float:
    cell = cell.strip()
    if cell in MISSING_TOKENS:
        return math.nan
    try:
        return float(cell)
    except ValueError:
        raise ValidationError(f"non-numeric cell {cell!r} at {where}") from None


def load_design(design_path) -> tuple[list[str], np.ndarray]:
    """Read a design CSV (header of predictor names, one row per subject)."""
    with open(design_path, newline="") as fh:
        drows = [r for r in csv.reader(fh) if r]
    if not drows:
        raise ValidationError("design file is empty")
    names, dbody = drows[0], drows[1:]
    X = np.empty((len(dbody), len(names)))
    for i, row in enumerate(dbody):
        if len(row) != len(names):
            raise ValidationError(f"design row {i} has {len(row)} cells, expected {len(names)}")
        for j, c in enumerate(row):
            v = _parse_cell(c, f"design row {i}, column {j}")
            if math.isnan(v):
                raise ValidationError(f"missing design value at row {i}, column {j}")
            X[i, j] = v
    return [n.strip() for n in names], X


def load_dataset(curves_path, design_path) -> FunctionalDataset:
    """Read a wide curve CSV and a design CSV into a validated dataset.

    The curve file's header row carries the grid points; if any header cell is
    non-numeric the grid defaults to equally spaced points on [0, 1]. Empty
    cells and ``NA`` mark missing observations.
    """
    with open(curves_path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise ValidationError("curves file needs a header row and at least one curve")
    header, body = rows[0], rows[1:]
    m = len(header)
    try:
        tau = np.array([float(h) for h in header])
    except ValueError:
        tau = np.linspace(0.0, 1.0, m)
    Y = np.empty((len(body), m))
    for i, row in enumerate(body):
        if len(row) != m:
            raise ValidationError(f"curve row {i} has {len(row)} cells, expected {m}")
        Y[i] = [_parse_cell(c, f"curve row {i}, column {j}") for j, c in enumerate(row)]

    names, X = load_design(design_path)
    if X.shape[0] != Y.shape[0]:
        raise ValidationError(
            f"dimension mismatch: {Y.shape[0]} curves but {X.shape[0]} design rows"
        )
    return FunctionalDataset(Y=Y, observed=~np.isnan(Y), tau=tau, X=X,
                             predictor_names=tuple(n.strip() for n in names))


def write_dataset(data: FunctionalDataset, curves_path, design_path) -> None:
    """Inverse of :func:`load_dataset`; floats are written with ``repr`` so they round-trip."""
    with open(curves_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([repr(float(t)) for t in data.tau])
        for y, o in zip(data.Y, data.observed):
            w.writerow([repr(float(v)) if ok else "" for v, ok in zip(y, o)])
    with open(design_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(data.predictor_names)
        for x in data.X:
            w.writerow([repr(float(v)) for v in x])


@dataclass(frozen=True)
class Standardization:
    """Column centering/scaling applied to the design, kept to map coefficients back."""

    center: np.ndarray
    scale: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.center) / self.scale

    def coefficients_to_raw(self, coef: np.ndarray, intercept=None):
        """Map coefficients fitted on the standardized design back to the raw scale.

        ``coef`` has predictors on its last axis. If ``intercept`` is given
        (same leading shape as ``coef`` minus the last axis) the adjusted raw
        intercept is returned as well.
        """
        raw = np.asarray(coef) / self.scale
        if intercept is None:
            return raw
        return raw, np.asarray(intercept) - raw @ self.center

    @classmethod
    def identity(cls, p: int) -> "Standardization":
        return cls(np.zeros(p), np.ones(p))


def standardize_design(X) -> tuple[np.ndarray, Standardization]:
    """Center each column to mean 0 and scale to unit (population) standard deviation."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError("design must be a matrix")
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    bad = np.flatnonzero(scale <= 1e-12 * np.maximum(1.0, np.abs(center)))
    if bad.size:
        raise ValidationError(f"zero-variance column(s) {bad.tolist()} in design")
    rec = Standardization(center, scale)
    return rec.apply(X), rec


@dataclass
class McmcConfig:
    K: int = 6
    n_iter: int = 8000
    burn_in: int = 2000
    thin: int = 3
    seed: int = 0
    fix_basis: bool = False
    fixed_hypers: Optional[dict] = None
    num_knots: Optional[int] = None
    standardize: bool = True
    # Proper Gamma(shape, rate) prior on 1/sigma_eps^2; None keeps the Jeffreys prior.
    sigma_eps_prior: Optional[tuple] = None
    progress: bool = False

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValidationError("K must be at least 1")
        if int(self.n_iter) < 1 or int(self.thin) < 1 or int(self.burn_in) < 0:
            raise ValidationError("n_iter and thin must be positive, burn_in non-negative")
        if self.burn_in >= self.n_iter:
            raise ValidationError("burn_in must be smaller than n_iter")
        if self.n_saved < 1:
            raise ValidationError("no draws would be retained; lower burn_in or thin")
        if self.fixed_hypers is not None:
            unknown = set(self.fixed_hypers) - set(HYPER_NAMES)
            if unknown:
                raise ValidationError(f"unknown hyperparameters {sorted(unknown)}")
            nu = self.fixed_hypers.get("nu_gamma")
            if nu is not None and not 2 <= nu <= 128:
                raise ValidationError("nu_gamma must lie in [2, 128]")
            if any(v <= 0 for v in self.fixed_hypers.values()):
                raise ValidationError("fixed hyperparameters must be positive")
        if self.sigma_eps_prior is not None:
            self.sigma_eps_prior = tuple(float(v) for v in self.sigma_eps_prior)

    @property
    def n_saved(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "McmcConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "McmcConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


ARCHIVE_FIELDS = ("F", "mu", "A", "Gamma", "sigma_eps", "sigma_gamma", "Y_imputed")


@dataclass
class DrawArchive:
    """Retained MCMC draws.

    Shapes (S retained draws): F (S, m, K), mu (S, K), A (S, K, p) on the
    standardized design scale, Gamma (S, K, n), sigma_eps (S,),
    sigma_gamma (S, K, n), Y_imputed (S, n_missing) in row-major order of the
    missing cells. ``iter_seconds`` holds the wall time of every iteration.
    """

    F: np.ndarray
    mu: np.ndarray
    A: np.ndarray
    Gamma: np.ndarray
    sigma_eps: np.ndarray
    sigma_gamma: np.ndarray
    Y_imputed: np.ndarray
    iter_seconds: np.ndarray
    tau: np.ndarray
    missing_index: np.ndarray
    standardization: Standardization
    predictor_names: tuple
    seed: int
    thin: int
    burn_in: int
    n_iter: int
    flags: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.F.shape[0]

    @property
    def dims(self) -> dict:
        S, m, K = self.F.shape
        return {"S": S, "m": m, "K": K, "p": self.A.shape[2], "n": self.Gamma.shape[2],
                "n_missing": self.Y_imputed.shape[1]}

    def coefficient_functions(self, raw: bool = True) -> np.ndarray:
        """Draws of the coefficient functions, shape (S, p, m)."""
        alpha = np.einsum("smk,skp->spm", self.F, self.A)
        if raw:
            alpha = alpha / self.standardization.scale[None, :, None]
        return alpha

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        arrays = {name: getattr(self, name) for name in ARCHIVE_FIELDS}
        arrays["iter_seconds"] = self.iter_seconds
        layout = []
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            arr.tofile(d / f"{name}.f64")
            layout.append({"name": name, "shape": list(arr.shape), "file": f"{name}.f64"})
        manifest = {
            "format": "fosr-draw-archive/1",
            "dtype": "<f8",
            "order": "C",
            "fields": layout,
            "dims": self.dims,
            "seed": int(self.seed),
            "thin": int(self.thin),
            "burn_in": int(self.burn_in),
            "n_iter": int(self.n_iter),
            "tau": [float(t) for t in self.tau],
            "missing_index": [int(i) for i in self.missing_index],
            "center": [float(c) for c in self.standardization.center],
            "scale": [float(s) for s in self.standardization.scale],
            "predictor_names": list(self.predictor_names),
            "flags": self.flags,
        }
        with open(d / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
        return d

    @classmethod
    def load(cls, directory) -> "DrawArchive":
        d = Path(directory)
        with open(d / "manifest.json") as fh:
            man = json.load(fh)
        arrays = {
            f["name"]: np.fromfile(d / f["file"], dtype="<f8").reshape(f["shape"])
            for f in man["fields"]
        }
        return cls(
            **{name: arrays[name] for name in ARCHIVE_FIELDS},
            iter_seconds=arrays["iter_seconds"],
            tau=np.array(man["tau"]),
            missing_index=np.array(man["missing_index"], dtype=int),
            standardization=Standardization(np.array(man["center"]), np.array(man["scale"])),
            predictor_names=tuple(man["predictor_names"]),
            seed=man["seed"],
            thin=man["thin"],
            burn_in=man["burn_in"],
            n_iter=man["n_iter"],
            flags=man.get("flags", {}),
        )

    @classmethod
    def concatenate(cls, archives: Sequence["DrawArchive"]) -> "DrawArchive":
        """Pool draws from several chains fitted to the same data."""
        first = archives[0]
        cat = {name: np.concatenate([getattr(a, name) for a in archives]) for name in ARCHIVE_FIELDS}
        return cls(
            **cat,
            iter_seconds=np.concatenate([a.iter_seconds for a in archives]),
            tau=first.tau,
            missing_index=first.missing_index,
            standardization=first.standardization,
            predictor_names=first.predictor_names,
            seed=first.seed,
            thin=first.thin,
            burn_in=first.burn_in,
            n_iter=first.n_iter,
            flags={"chains": len(archives)},
        )
