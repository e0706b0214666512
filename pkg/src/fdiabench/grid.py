"""DC grid cases, measurement Jacobians and synthetic measurement corpora.

Bus and branch numbers are 1-based everywhere a user can see them (case
files, measurement labels); arrays are 0-based internally.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import ObservabilityError, ParseError, ProtocolError, TopologyError, ValidationError

logger = logging.getLogger(__name__)

CASE_FIELDS = {"name", "n_buses", "reference_bus", "base_mva", "branches", "injections", "measurements"}


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    x: float


@dataclass(frozen=True)
class MeasurementSpec:
    """One row of H: a branch flow (metered at the from or to end) or a bus injection."""

    kind: str
    id: int
    side: str = "from"

    @property
    def label(self) -> str:
        if self.kind == "injection":
            return f"P_inj[{self.id}]"
        return f"P_flow[{self.id}{'' if self.side == 'from' else ',to'}]"


@dataclass(frozen=True)
class GridCase:
    n_buses: int
    reference_bus: int
    branches: tuple
    base_injections: np.ndarray
    measurements: tuple
    base_mva: float = 100.0
    name: str = "case"

    def __post_init__(self):
        validate_case(self)

    @property
    def n_branches(self) -> int:
        return len(self.branches)


@dataclass(frozen=True)
class MeasurementModel:
    """Linear DC measurement model z = H x + e with e ~ N(0, R)."""

    H: np.ndarray
    R: np.ndarray
    labels: tuple

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def N(self) -> int:
        return self.H.shape[1] + 1

    @property
    def n_states(self) -> int:
        return self.H.shape[1]

    def with_noise(self, noise_sigma: float) -> "MeasurementModel":
        return MeasurementModel(self.H, noise_sigma**2 * np.eye(self.M), self.labels)


@dataclass(frozen=True)
class Corpus:
    Z: np.ndarray
    C_real: np.ndarray
    X_true: np.ndarray
    bias: np.ndarray
    t: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.t is None:
            object.__setattr__(self, "t", np.arange(len(self.Z)))

    def __len__(self):
        return len(self.Z)

    def slice(self, start, stop) -> "Corpus":
        return Corpus(self.Z[start:stop], self.C_real[start:stop], self.X_true[start:stop], self.bias, self.t[start:stop])


def validate_case(case: GridCase) -> None:
    n = case.n_buses
    if n < 2:
        raise ValidationError("a case needs at least two buses")
    if not 1 <= case.reference_bus <= n:
        raise ValidationError(f"reference bus {case.reference_bus} is not in 1..{n}")
    if len(case.base_injections) != n:
        raise ValidationError(f"expected {n} injections, got {len(case.base_injections)}")
    for k, br in enumerate(case.branches, start=1):
        for bus in (br.from_bus, br.to_bus):
            if not 1 <= bus <= n:
                raise ValidationError(f"branch {k} references unknown bus {bus}")
        if br.from_bus == br.to_bus:
            raise ValidationError(f"branch {k} is a self-loop")
        if not br.x > 0:
            raise ValidationError(f"branch {k} has non-positive reactance {br.x}")
    for m in case.measurements:
        if m.kind == "flow":
            if not 1 <= m.id <= len(case.branches):
                raise ValidationError(f"flow measurement references unknown branch {m.id}")
            if m.side not in ("from", "to"):
                raise ValidationError(f"flow side must be 'from' or 'to', got {m.side!r}")
        elif m.kind == "injection":
            if not 1 <= m.id <= n:
                raise ValidationError(f"injection measurement references unknown bus {m.id}")
        else:
            raise ValidationError(f"unknown measurement type {m.kind!r}")
    # connectivity by union-find
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for br in case.branches:
        parent[find(br.from_bus - 1)] = find(br.to_bus - 1)
    roots = {find(i) for i in range(n)}
    if len(roots) > 1:
        raise ValidationError(f"bus graph is disconnected ({len(roots)} islands)")


def default_measurements(n_buses: int, n_branches: int, target_m: int | None = None) -> tuple:
    """Forward flows, then every bus injection, then to-end flows; trimmed to ``target_m``."""
    specs = [MeasurementSpec("flow", k) for k in range(1, n_branches + 1)]
    specs += [MeasurementSpec("injection", i) for i in range(1, n_buses + 1)]
    specs += [MeasurementSpec("flow", k, "to") for k in range(1, n_branches + 1)]
    if target_m is None:
        target_m = n_branches + n_buses
    return tuple(specs[:target_m])


def _case_from_mapping(data: dict) -> GridCase:
    unknown = set(data) - CASE_FIELDS
    if unknown:
        logger.warning("ignoring unknown case fields: %s", ", ".join(sorted(unknown)))
    try:
        n = int(data["n_buses"])
        branches = tuple(Branch(int(b["from"]), int(b["to"]), float(b["x"])) for b in data["branches"])
        injections = np.asarray(data.get("injections", [0.0] * n), dtype=float)
        if "measurements" in data:
            meas = tuple(MeasurementSpec(m["type"], int(m["id"]), m.get("side", "from")) for m in data["measurements"])
        else:
            meas = default_measurements(n, len(branches))
        return GridCase(
            n_buses=n,
            reference_bus=int(data.get("reference_bus", 1)),
            branches=branches,
            base_injections=injections,
            measurements=meas,
            base_mva=float(data.get("base_mva", 100.0)),
            name=str(data.get("name", "case")),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing or malformed case field: {exc}") from exc


_MATRIX_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*\[")
_SCALAR_RE = re.compile(r"^\s*mpc\.(\w+)\s*=\s*([^\[;]+);")


def _parse_matpower(text: str) -> GridCase:
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    scalars: dict[str, str] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if current is None:
            m = _MATRIX_RE.match(line)
            if m:
                current = m.group(1)
                tables[current] = []
                line = line[m.end():]
            else:
                s = _SCALAR_RE.match(line)
                if s:
                    scalars[s.group(1)] = s.group(2).strip()
                continue
        closing = "]" in line
        body = line.split("]", 1)[0]
        for row in body.split(";"):
            row = row.strip()
            if not row:
                continue
            try:
                tables[current].append((lineno, [float(tok) for tok in row.replace(",", " ").split()]))
            except ValueError as exc:
                raise ParseError(f"non-numeric entry in mpc.{current}: {row!r}", lineno) from exc
        if closing:
            current = None
    if current is not None:
        raise ParseError(f"unterminated matrix mpc.{current}")
    for name in ("bus", "branch"):
        if name not in tables:
            raise ParseError(f"case has no mpc.{name} table")
    for name in tables:
        if name not in ("bus", "gen", "branch"):
            logger.warning("ignoring unsupported MATPOWER table mpc.%s", name)

    bus_rows = tables["bus"]
    for lineno, row in bus_rows:
        if len(row) < 3:
            raise ParseError("bus row needs at least bus_i, type, Pd", lineno)
    numbers = [int(row[0]) for _, row in bus_rows]
    index = {b: i + 1 for i, b in enumerate(numbers)}
    n = len(numbers)
    refs = [index[int(row[0])] for _, row in bus_rows if int(row[1]) == 3]
    if len(refs) != 1:
        raise ValidationError(f"expected exactly one reference (type 3) bus, found {len(refs)}")
    injections = np.array([-row[2] for _, row in bus_rows])
    for lineno, row in tables.get("gen", []):
        if len(row) < 2:
            raise ParseError("gen row needs at least bus, Pg", lineno)
        status = row[7] if len(row) > 7 else 1
        if status > 0:
            injections[index[int(row[0])] - 1] += row[1]
    branches = []
    for lineno, row in tables["branch"]:
        if len(row) < 4:
            raise ParseError("branch row needs at least fbus, tbus, r, x", lineno)
        if len(row) > 10 and row[10] <= 0:
            continue
        try:
            branches.append(Branch(index[int(row[0])], index[int(row[1])], float(row[3])))
        except KeyError as exc:
            raise ParseError(f"branch references unknown bus {exc}", lineno) from exc
    base = float(scalars.get("baseMVA", 100.0))
    return GridCase(n, refs[0], tuple(branches), injections, default_measurements(n, len(branches)), base)


def parse_case(text: str) -> GridCase:
    """Parse a case from JSON (primary schema) or a MATPOWER bus/gen/branch subset."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno) from exc
        return _case_from_mapping(data)
    return _parse_matpower(text)


def load_case(path_or_name: str | Path) -> GridCase:
    """Load a case file, or a bundled case by name (``ieee14``, ``ieee30``, ``case14``)."""
    p = Path(path_or_name)
    if p.exists():
        return parse_case(p.read_text())
    name = str(path_or_name)
    for candidate in (f"{name}.json", f"{name}.m", name):
        res = resources.files("fdiabench.data").joinpath(candidate)
        if res.is_file():
            return parse_case(res.read_text())
    raise FileNotFoundError(f"no case file or bundled case named {name!r}")


def case_to_json(case: GridCase) -> str:
    data = {
        "name": case.name,
        "n_buses": case.n_buses,
        "reference_bus": case.reference_bus,
        "base_mva": case.base_mva,
        "branches": [{"from": b.from_bus, "to": b.to_bus, "x": b.x} for b in case.branches],
        "injections": [float(v) for v in case.base_injections],
        "measurements": [
            {"type": m.kind, "id": m.id} | ({"side": m.side} if m.kind == "flow" and m.side != "from" else {})
            for m in case.measurements
        ],
    }
    return json.dumps(data, indent=1)


def _incidence(case: GridCase) -> tuple[np.ndarray, np.ndarray]:
    """Branch-bus incidence A (rows +1 at from, -1 at to) and branch susceptances."""
    A = np.zeros((case.n_branches, case.n_buses))
    for k, br in enumerate(case.branches):
        A[k, br.from_bus - 1] = 1.0
        A[k, br.to_bus - 1] = -1.0
    b = np.array([1.0 / br.x for br in case.branches])
    return A, b


def susceptance_matrix(case: GridCase) -> np.ndarray:
    A, b = _incidence(case)
    return A.T @ (b[:, None] * A)


def build_measurement_model(case: GridCase, noise_sigma: float = 0.01) -> MeasurementModel:
    A, b = _incidence(case)
    flows = b[:, None] * A
    B = A.T @ flows
    rows = []
    for m in case.measurements:
        if m.kind == "flow":
            row = flows[m.id - 1]
            rows.append(row if m.side == "from" else -row)
        else:
            rows.append(B[m.id - 1])
    keep = [i for i in range(case.n_buses) if i != case.reference_bus - 1]
    H = np.asarray(rows)[:, keep]
    rank = np.linalg.matrix_rank(H)
    if rank < case.n_buses - 1:
        deficiency = case.n_buses - 1 - rank
        raise ObservabilityError(
            f"measurement set is unobservable: rank {rank} < {case.n_buses - 1} (deficient by {deficiency})",
            deficiency,
        )
    return MeasurementModel(H, noise_sigma**2 * np.eye(len(rows)), tuple(m.label for m in case.measurements))


def synthesize_corpus(
    model: MeasurementModel,
    case: GridCase,
    n: int,
    noise_sigma: float = 0.01,
    load_spread: float = 0.2,
    bias_sigma: float | None = None,
    attack_mean_scale: float = 0.05,
    attack_sigma: float = 0.02,
    rng_seed: int = 42,
) -> Corpus:
    """Draw a chronologically indexed corpus of clean measurements and stealthy injections.

    States come from per-bus multiplicative load perturbations pushed through the
    reduced DC susceptance system. A sensor offset vector is drawn once and added
    to every clean measurement; ``bias_sigma=None`` means 5% of mean |z|.
    Injections are ``H @ delta`` with ``delta ~ N(attack_mean_scale * 1, attack_sigma^2 I)``.
    """
    if n < 10:
        raise ValueError("corpus needs at least 10 samples")
    for name, val in [("noise_sigma", noise_sigma), ("load_spread", load_spread), ("attack_sigma", attack_sigma)]:
        if val < 0:
            raise ValueError(f"{name} must be non-negative")
    if bias_sigma is not None and bias_sigma < 0:
        raise ValueError("bias_sigma must be non-negative")
    rng = np.random.default_rng(rng_seed)
    keep = [i for i in range(case.n_buses) if i != case.reference_bus - 1]
    B_red = susceptance_matrix(case)[np.ix_(keep, keep)]
    if np.linalg.cond(B_red) > 1e12:
        raise TopologyError("reduced susceptance matrix is singular")
    p_base = case.base_injections[keep] / case.base_mva
    factors = rng.uniform(1.0 - load_spread, 1.0 + load_spread, size=(n, len(keep)))
    X = np.linalg.solve(B_red, (factors * p_base).T).T
    clean = X @ model.H.T
    if bias_sigma is None:
        bias_sigma = 0.05 * float(np.mean(np.abs(clean)))
    bias = rng.normal(0.0, bias_sigma, size=model.M) if bias_sigma > 0 else np.zeros(model.M)
    noise = rng.normal(0.0, noise_sigma, size=clean.shape) if noise_sigma > 0 else np.zeros_like(clean)
    Z = clean + bias + noise
    delta = attack_mean_scale + attack_sigma * rng.standard_normal((n, model.n_states))
    C = delta @ model.H.T
    return Corpus(Z=Z, C_real=C, X_true=X, bias=bias, t=np.arange(n))


def chronological_split(corpus: Corpus, fractions: Sequence[float] = (0.6, 0.2, 0.2)) -> tuple[Corpus, Corpus, Corpus]:
    """Contiguous, order-preserving generation/detection/evaluation slices."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ProtocolError(f"split fractions must be three values summing to 1, got {fractions}")
    if np.any(np.diff(corpus.t) <= 0):
        raise ProtocolError("corpus index is not strictly increasing")
    n = len(corpus)
    n_gen = int(np.floor(fractions[0] * n + 1e-9))
    n_det = int(np.floor(fractions[1] * n + 1e-9))
    parts = (corpus.slice(0, n_gen), corpus.slice(n_gen, n_gen + n_det), corpus.slice(n_gen + n_det, n))
    if any(len(p) == 0 for p in parts):
        raise ProtocolError(f"split of {n} rows leaves an empty slice")
    return parts


def write_corpus_csv(corpus: Corpus, path: str | Path) -> None:
    M = corpus.Z.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"z_{i}" for i in range(1, M + 1)] + [f"c_{i}" for i in range(1, M + 1)])
        for t, z, c in zip(corpus.t, corpus.Z, corpus.C_real):
            w.writerow([int(t)] + [repr(float(v)) for v in z] + [repr(float(v)) for v in c])


def read_corpus_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(t, Z, C)`` from a corpus CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    M = (data.shape[1] - 1) // 2
    return data[:, 0].astype(int), data[:, 1 : 1 + M], data[:, 1 + M :]
