"""Persistence: externally supplied state-space plants and reduced-model
caching.

All containers are NumPy ``.npz`` archives carrying a JSON metadata record
and a schema version; loading a file written by a newer schema fails closed.
Matrices round-trip at full binary precision.  See ``docs/formats.md``.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .romgen import ModeInfo, ReducedOrderModel

PLANT_SCHEMA_VERSION = 1
ROM_SCHEMA_VERSION = 1


class PlantIOError(ValueError):
    """Raised for schema violations, dimension mismatches and bad data."""


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class ExternalPlantBundle:
    """User-supplied linear plant with an optional per-state polynomial
    nonlinearity f_i(x) = quad_i x_i^2 + cubic_i x_i^3.

    The bundle exposes the same simulation interface as a reduced model so it
    can be dropped into the integrators directly."""

    A: np.ndarray  # (n, n)
    B_c: np.ndarray  # (n, m)
    B_g: np.ndarray  # (n, p)
    C_out: np.ndarray  # (q, n)
    output_labels: tuple[str, ...]
    name: str = "external"
    provenance_hash: str = ""
    stable: bool = True
    quad: np.ndarray | None = None  # (n,) quadratic coefficients
    cubic: np.ndarray | None = None  # (n,) cubic coefficients

    def __post_init__(self):
        n = self.A.shape[0]
        checks = [
            ("A", self.A.shape, (n, n)),
            ("B_c", self.B_c.shape[:1], (n,)),
            ("B_g", self.B_g.shape[:1], (n,)),
            ("C_out", self.C_out.shape[1:], (n,)),
        ]
        for name, got, want in checks:
            if got != want:
                raise PlantIOError(f"field '{name}': shape {got} incompatible with n = {n}")
        if len(self.output_labels) != self.C_out.shape[0]:
            raise PlantIOError(
                f"field 'output_labels': {len(self.output_labels)} labels for "
                f"{self.C_out.shape[0]} output rows"
            )
        for name in ("A", "B_c", "B_g", "C_out", "quad", "cubic"):
            M = getattr(self, name)
            if M is not None and not np.isfinite(M).all():
                raise PlantIOError(f"field '{name}': non-finite entries")
        for name in ("quad", "cubic"):
            M = getattr(self, name)
            if M is not None and M.shape != (n,):
                raise PlantIOError(f"field '{name}': expected shape ({n},), got {M.shape}")
        is_stable = bool(np.linalg.eigvals(self.A).real.max() < 0.0)
        if is_stable != self.stable:
            raise PlantIOError(
                f"field 'stable': declared {self.stable} but eigenvalue check "
                f"gives {is_stable}"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def eval_f_nr(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.n)
        if self.quad is not None:
            out += self.quad * x**2
        if self.cubic is not None:
            out += self.cubic * x**3
        return out

    def rhs(self, x, u_c, u_d, nonlinear: bool = True):
        dx = self.A @ x + self.B_c @ np.atleast_1d(u_c) + self.B_g @ np.atleast_1d(u_d)
        if nonlinear and (self.quad is not None or self.cubic is not None):
            dx = dx + self.eval_f_nr(x)
        return dx


def save_plant(bundle: ExternalPlantBundle, path) -> None:
    meta = {
        "schema_version": PLANT_SCHEMA_VERSION,
        "kind": "plant-bundle",
        "name": bundle.name,
        "provenance_hash": bundle.provenance_hash,
        "stable": bundle.stable,
        "output_labels": list(bundle.output_labels),
        "has_quad": bundle.quad is not None,
        "has_cubic": bundle.cubic is not None,
    }
    arrays = {
        "A": bundle.A, "B_c": bundle.B_c, "B_g": bundle.B_g, "C_out": bundle.C_out,
        "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
    }
    if bundle.quad is not None:
        arrays["quad"] = bundle.quad
    if bundle.cubic is not None:
        arrays["cubic"] = bundle.cubic
    np.savez(path, **arrays)


def _read_meta(data, path, expected_kind: str, current_version: int) -> dict:
    if "meta" not in data:
        raise PlantIOError(f"{path}: missing metadata record")
    try:
        meta = json.loads(bytes(data["meta"]).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PlantIOError(f"{path}: corrupt metadata record: {exc}") from exc
    if meta.get("kind") != expected_kind:
        raise PlantIOError(f"{path}: expected a {expected_kind} file, got {meta.get('kind')!r}")
    version = meta.get("schema_version")
    if not isinstance(version, int) or version > current_version:
        raise PlantIOError(
            f"{path}: schema version {version} is newer than supported "
            f"version {current_version}"
        )
    return meta


def load_plant(path) -> ExternalPlantBundle:
    path = Path(path)
    if not path.exists():
        raise PlantIOError(f"plant bundle not found: {path}")
    with np.load(path) as data:
        meta = _read_meta(data, path, "plant-bundle", PLANT_SCHEMA_VERSION)
        for name in ("A", "B_c", "B_g", "C_out"):
            if name not in data:
                raise PlantIOError(f"{path}: missing matrix block '{name}'")
        return ExternalPlantBundle(
            A=data["A"], B_c=data["B_c"], B_g=data["B_g"], C_out=data["C_out"],
            output_labels=tuple(meta["output_labels"]),
            name=meta.get("name", "external"),
            provenance_hash=meta.get("provenance_hash", ""),
            stable=bool(meta.get("stable", True)),
            quad=data["quad"] if meta.get("has_quad") else None,
            cubic=data["cubic"] if meta.get("has_cubic") else None,
        )


def save_rom(rom: ReducedOrderModel, path) -> None:
    meta = {
        "schema_version": ROM_SCHEMA_VERSION,
        "kind": "rom",
        "n": rom.n,
        "source_hash": rom.source_hash,
        "output_labels": list(rom.output_labels),
        "mode_kinds": [m.kind for m in rom.modes],
    }
    np.savez(
        path,
        A=rom.A, B_c=rom.B_c, B_g=rom.B_g, Phi=rom.Phi, Psi=rom.Psi, C_out=rom.C_out,
        eigenvalues=np.array([m.eigenvalue for m in rom.modes]),
        participation=np.array([m.gust_participation for m in rom.modes]),
        meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
    )


def load_rom(path, f_nl_full=None, source_path=None) -> ReducedOrderModel:
    """Reload a cached reduced model.

    ``f_nl_full`` reattaches the full-order nonlinearity (it is code, not
    data); ``source_path`` triggers a staleness warning when the stored source
    hash no longer matches the parameter file."""
    path = Path(path)
    if not path.exists():
        raise PlantIOError(f"reduced model not found: {path}")
    with np.load(path) as data:
        meta = _read_meta(data, path, "rom", ROM_SCHEMA_VERSION)
        required = ("A", "B_c", "B_g", "Phi", "Psi", "C_out", "eigenvalues", "participation")
        for name in required:
            if name not in data:
                raise PlantIOError(f"{path}: missing matrix block '{name}'")
        arrays = {name: data[name] for name in required}
    for name in ("A", "B_c", "B_g", "Phi", "Psi", "C_out"):
        if not np.isfinite(arrays[name]).all():
            raise PlantIOError(f"{path}: corrupt matrix block '{name}' (non-finite)")
    if source_path is not None and meta.get("source_hash"):
        if file_sha256(source_path) != meta["source_hash"]:
            warnings.warn(
                f"{path} is stale: parameter file {source_path} has changed "
                "since the reduced model was built",
                stacklevel=2,
            )
    eigs = arrays["eigenvalues"]
    modes = tuple(
        ModeInfo(
            eigenvalue=complex(lam),
            frequency=abs(lam.imag),
            damping_ratio=float(-lam.real / abs(lam)) if abs(lam) > 0 else 0.0,
            kind=kind,
            gust_participation=float(pp),
        )
        for lam, kind, pp in zip(eigs, meta["mode_kinds"], arrays["participation"])
    )
    return ReducedOrderModel(
        n=int(meta["n"]),
        A=arrays["A"], B_c=arrays["B_c"], B_g=arrays["B_g"],
        Phi=arrays["Phi"], Psi=arrays["Psi"], C_out=arrays["C_out"],
        modes=modes,
        output_labels=tuple(meta["output_labels"]),
        f_nl_full=f_nl_full,
        source_hash=meta.get("source_hash", ""),
    )
