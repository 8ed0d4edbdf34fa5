"""Readers and writers for parameter files, polynomial literals, simulated paths and run manifests.

Binary path files are little-endian: a packed header (magic ``SMPB``, version, n_paths,
n_times, d, flags, seed), the ``n_times`` float64 grid, then one float64 row per
(path, time) in row-major order holding ``mu_1..mu_d`` (flag 1), ``Sigma`` (flag 2) and
``S_1..S_d`` (flag 4).
"""
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional
import datetime
import json
import logging

import numpy as np
import pandas as pd

from .exceptions import DataIOError
from .model_params import (
    AdmissibleSimplexParameterSet,
    TotalCapParams,
    ValidationReport,
    Violation,
    VSMSpec,
    check_simplex_params,
    vsm_to_params,
)
from .sde_sim import PathBundle
from .simplex_poly import SimplexPolynomial, polynomial_from_dict, polynomial_to_dict

BINARY_MAGIC = b"SMPB"
BINARY_VERSION = 1
BINARY_THRESHOLD = 1_000_000
FLAG_WEIGHTS, FLAG_SIGMA, FLAG_CAPS = 1, 2, 4

_HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u4"),
        ("n_paths", "<u8"),
        ("n_times", "<u8"),
        ("d", "<u8"),
        ("flags", "<u4"),
        ("seed", "<u8"),
    ]
)


def read_json(path: Path) -> Any:
    try:
        with open(path, "r") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataIOError(f"cannot read {path}: {e}", {"path": str(path)}) from e


def write_json(path: Path, obj: Any):
    try:
        with open(path, "w") as f:
            json.dump(obj, f, indent=2)
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}", {"path": str(path)}) from e


@dataclass(frozen=True)
class ModelFile:
    """Contents of a parameter file; ``totalcap`` and ``vsm`` are optional."""

    simplex: AdmissibleSimplexParameterSet
    totalcap: Optional[TotalCapParams] = None
    vsm: Optional[VSMSpec] = None


def _totalcap_from_dict(tc: Dict[str, Any]) -> TotalCapParams:
    return TotalCapParams(
        kappa=float(tc.get("kappa", 0.0)),
        phi=float(tc.get("phi", 0.0)),
        lam=float(tc.get("lambda", 0.0)),
        sigma=float(tc.get("sigma", 0.0)),
    )


def _report_for(obj: Dict[str, Any]) -> ValidationReport:
    try:
        report = check_simplex_params(obj["beta"], obj["B"], obj["gamma"])
        if "d" in obj and report.ok and int(obj["d"]) != len(obj["beta"]):
            report.add(Violation.SHAPE_MISMATCH, value=float(obj["d"]))
        if obj.get("totalcap") is not None:
            report.violations.extend(_totalcap_from_dict(obj["totalcap"]).check().violations)
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise DataIOError(f"malformed parameter file: {e!r}") from e
    return report


def params_from_dict(obj: Dict[str, Any]) -> ModelFile:
    """Parses and validates ``{"d", "beta", "B", "gamma"[, "totalcap"]}`` or ``{"vsm": {"alpha", "d"}}``.

    Raises:
        ParameterValidationError: The parameters violate admissibility
        DataIOError: The object does not have the expected structure
    """
    if "vsm" in obj:
        try:
            vsm = VSMSpec(alpha=float(obj["vsm"]["alpha"]), d=int(obj["vsm"]["d"]))
        except (KeyError, TypeError, ValueError) as e:
            raise DataIOError(f"malformed vsm shorthand: {e!r}") from e
        joint = vsm_to_params(vsm)
        return ModelFile(joint.simplex, joint.totalcap, vsm)

    _report_for(obj).raise_if_invalid()
    totalcap = _totalcap_from_dict(obj["totalcap"]) if obj.get("totalcap") is not None else None
    return ModelFile(AdmissibleSimplexParameterSet(obj["beta"], obj["B"], obj["gamma"]), totalcap)


def check_params_file(path: Path) -> ValidationReport:
    """The full admissibility report of a parameter file without raising on violations."""
    obj = read_json(path)
    if "vsm" in obj:
        params_from_dict(obj)
        return ValidationReport()
    return _report_for(obj)


def load_params(path: Path) -> ModelFile:
    logging.info(f"Loading parameters from {path}")
    return params_from_dict(read_json(path))


def params_to_dict(simplex: AdmissibleSimplexParameterSet, totalcap: TotalCapParams = None) -> dict:
    obj = simplex.to_dict()
    if totalcap is not None:
        obj["totalcap"] = totalcap.to_dict()
    return obj


def dump_params(path: Path, simplex: AdmissibleSimplexParameterSet, totalcap: TotalCapParams = None):
    write_json(path, params_to_dict(simplex, totalcap))


def load_polynomial(path: Path) -> SimplexPolynomial:
    return polynomial_from_dict(read_json(path))


def dump_polynomial(path: Path, p: SimplexPolynomial):
    write_json(path, polynomial_to_dict(p))


def _flags(bundle: PathBundle) -> int:
    flags = 0
    if bundle.weights is not None:
        flags |= FLAG_WEIGHTS
    if bundle.sigma is not None:
        flags |= FLAG_SIGMA
    if bundle.caps is not None:
        flags |= FLAG_CAPS
    return flags


def _rows(bundle: PathBundle) -> np.ndarray:
    blocks = []
    if bundle.weights is not None:
        blocks.append(bundle.weights)
    if bundle.sigma is not None:
        blocks.append(bundle.sigma[..., None])
    if bundle.caps is not None:
        blocks.append(bundle.caps)
    return np.concatenate(blocks, axis=2)


def _column_names(flags: int, d: int) -> List[str]:
    names = []
    if flags & FLAG_WEIGHTS:
        names += [f"mu_{i + 1}" for i in range(d)]
    if flags & FLAG_SIGMA:
        names.append("Sigma")
    if flags & FLAG_CAPS:
        names += [f"S_{i + 1}" for i in range(d)]
    return names


def _dimension(bundle: PathBundle) -> int:
    if bundle.weights is not None:
        return bundle.weights.shape[2]
    return bundle.caps.shape[2] if bundle.caps is not None else 0


def bundle_to_frame(bundle: PathBundle) -> pd.DataFrame:
    rows = _rows(bundle)
    n_paths, n_times, _ = rows.shape
    frame = pd.DataFrame(rows.reshape(n_paths * n_times, -1), columns=_column_names(_flags(bundle), _dimension(bundle)))
    frame.insert(0, "time", np.tile(bundle.times, n_paths))
    frame.insert(0, "step", np.tile(np.arange(n_times), n_paths))
    frame.insert(0, "path", np.repeat(np.arange(n_paths), n_times))
    return frame


def write_paths_csv(path: Path, bundle: PathBundle):
    try:
        bundle_to_frame(bundle).to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}", {"path": str(path)}) from e


def write_paths_binary(path: Path, bundle: PathBundle):
    rows = _rows(bundle)
    header = np.zeros(1, dtype=_HEADER)
    header[0] = (
        BINARY_MAGIC,
        BINARY_VERSION,
        rows.shape[0],
        rows.shape[1],
        _dimension(bundle),
        _flags(bundle),
        bundle.seed or 0,
    )
    try:
        with open(path, "wb") as f:
            f.write(header.tobytes())
            f.write(np.ascontiguousarray(bundle.times, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}", {"path": str(path)}) from e


def read_paths_binary(path: Path) -> PathBundle:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataIOError(f"cannot read {path}: {e}", {"path": str(path)}) from e
    header = np.frombuffer(raw[: _HEADER.itemsize], dtype=_HEADER)
    if header.size != 1 or header["magic"][0] != BINARY_MAGIC or header["version"][0] != BINARY_VERSION:
        raise DataIOError(f"{path} is not a version {BINARY_VERSION} path file")
    n_paths, n_times, d = (int(header[k][0]) for k in ("n_paths", "n_times", "d"))
    flags = int(header["flags"][0])
    width = len(_column_names(flags, d))
    body = np.frombuffer(raw[_HEADER.itemsize :], dtype="<f8")
    if body.size != n_times + n_paths * n_times * width:
        raise DataIOError(f"{path} is truncated", {"expected": n_times + n_paths * n_times * width, "got": body.size})
    times = body[:n_times].copy()
    rows = body[n_times:].reshape(n_paths, n_times, width)

    offset = 0
    weights = sigma = caps = None
    if flags & FLAG_WEIGHTS:
        weights, offset = rows[:, :, :d].copy(), d
    if flags & FLAG_SIGMA:
        sigma, offset = rows[:, :, offset].copy(), offset + 1
    if flags & FLAG_CAPS:
        caps = rows[:, :, offset : offset + d].copy()
    return PathBundle(times=times, weights=weights, sigma=sigma, caps=caps, sigma_floor=0.0, seed=int(header["seed"][0]))


def write_paths(path: Path, bundle: PathBundle, fmt: str = "auto") -> Path:
    """Writes paths as CSV or binary; "auto" picks binary above ``BINARY_THRESHOLD`` values."""
    if fmt == "auto":
        fmt = "binary" if _rows(bundle).size > BINARY_THRESHOLD else "csv"
    path = Path(path).with_suffix(".bin" if fmt == "binary" else ".csv")
    if fmt == "binary":
        write_paths_binary(path, bundle)
    else:
        write_paths_csv(path, bundle)
    logging.info(f"Wrote {bundle.n_paths} path(s) to {path}")
    return path


def package_version() -> str:
    try:
        return metadata.version("simplex_market")
    except metadata.PackageNotFoundError:
        return "unknown"


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    artifacts: List[str] = field(default_factory=list)
    version: str = field(default_factory=package_version)
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    elapsed_seconds: Optional[float] = None

    def finish(self, elapsed_seconds: float):
        self.finished = _now()
        self.elapsed_seconds = elapsed_seconds

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "manifest.json"
        write_json(path, asdict(self))
        return path


def write_table(path: Path, frame: pd.DataFrame) -> Path:
    try:
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise DataIOError(f"cannot write {path}: {e}", {"path": str(path)}) from e
    return Path(path)
