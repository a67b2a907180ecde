"""Grid case files, sidecar configuration and report serialization.

Two table layouts are understood.  The compact layout is the one the bundled
cases use::

    reference = 1;          % optional, defaults to the first bus
    shed_cost = 100;        % optional scalar, or a [bus cost] table
    bus    = [ id load_MW; ... ];
    branch = [ from to x_pu rateA_MW; ... ];
    gen    = [ bus Pmin Pmax cost_per_MWh; ... ];

Files written for MATPOWER (``mpc.bus = [...]`` etc.) are read through the
standard MATPOWER column positions.  Out-of-service rows are dropped there,
and a zero ``rateA`` means "unlimited" as in MATPOWER.  In both layouts branch
ids are assigned 1, 2, ... in row order.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

DEFAULT_SHED_COST = 100.0


class CaseFormatError(ValueError):
    """Syntax error in a case file."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CaseValidationError(ValueError):
    """A parsed case violates one of the GridCase invariants."""

    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


@dataclass(frozen=True)
class Bus:
    id: int
    load: float


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    x: float
    f_max: float


@dataclass(frozen=True)
class Generator:
    bus: int
    g_min: float
    g_max: float
    cost: float


@dataclass(frozen=True)
class GridCase:
    """Static grid description.  Construction validates every invariant."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    shed_costs: tuple[float, ...]
    reference_bus: int
    name: str = ""

    def __post_init__(self):
        _validate(self)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @cached_property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def _bus_pos(self) -> dict[int, int]:
        return {b: i for i, b in enumerate(self.bus_ids)}

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._bus_pos[bus_id]
        except KeyError:
            raise KeyError(f"no bus with id {bus_id}") from None

    def branch(self, branch_id: int) -> Branch:
        if not 1 <= branch_id <= self.n_branch:
            raise KeyError(f"no branch with id {branch_id} (case has {self.n_branch})")
        return self.branches[branch_id - 1]

    @property
    def ref_index(self) -> int:
        return self.bus_index(self.reference_bus)

    @cached_property
    def from_idx(self) -> np.ndarray:
        return np.array([self._bus_pos[br.from_bus] for br in self.branches], dtype=int)

    @cached_property
    def to_idx(self) -> np.ndarray:
        return np.array([self._bus_pos[br.to_bus] for br in self.branches], dtype=int)

    @cached_property
    def reactances(self) -> np.ndarray:
        return np.array([br.x for br in self.branches])

    @cached_property
    def f_max(self) -> np.ndarray:
        return np.array([br.f_max for br in self.branches])

    @cached_property
    def loads(self) -> np.ndarray:
        return np.array([b.load for b in self.buses])

    @cached_property
    def gen_bus_idx(self) -> np.ndarray:
        return np.array([self._bus_pos[g.bus] for g in self.generators], dtype=int)

    def with_loads(self, loads: Sequence[float]) -> "GridCase":
        if len(loads) != self.n_bus:
            raise ValueError(f"expected {self.n_bus} loads, got {len(loads)}")
        buses = tuple(Bus(b.id, float(l)) for b, l in zip(self.buses, loads))
        return replace(self, buses=buses)

    def with_shed_cost(self, cost: float | Sequence[float]) -> "GridCase":
        if np.isscalar(cost):
            costs = (float(cost),) * self.n_bus
        else:
            costs = tuple(float(c) for c in cost)
        return replace(self, shed_costs=costs)


def _validate(case: GridCase) -> None:
    def fail(inv, msg):
        raise CaseValidationError(inv, msg)

    if not case.buses:
        fail("nonempty", "case has no buses")
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        fail("unique-bus-ids", "duplicate bus id")
    known = set(ids)
    for b in case.buses:
        if not math.isfinite(b.load) or b.load < 0:
            fail("load-nonnegative", f"bus {b.id} has load {b.load}")
    for k, br in enumerate(case.branches, start=1):
        if br.id != k:
            fail("branch-ids", f"branch at position {k} carries id {br.id}")
        for end in (br.from_bus, br.to_bus):
            if end not in known:
                fail("branch-endpoint", f"branch {br.id} references unknown bus {end}")
        if br.from_bus == br.to_bus:
            fail("no-self-loop", f"branch {br.id} connects bus {br.from_bus} to itself")
        if not (br.x > 0 and math.isfinite(br.x)):
            fail("reactance-positive", f"branch {br.id} has reactance {br.x}")
        if not br.f_max > 0:
            fail("flow-limit-positive", f"branch {br.id} has flow limit {br.f_max}")
    for g in case.generators:
        if g.bus not in known:
            fail("generator-bus", f"generator references unknown bus {g.bus}")
        if not (math.isfinite(g.g_min) and math.isfinite(g.g_max) and math.isfinite(g.cost)):
            fail("generator-finite", f"generator at bus {g.bus} has non-finite data")
        if g.g_min > g.g_max:
            fail("gmin-le-gmax", f"generator at bus {g.bus}: g_min {g.g_min} > g_max {g.g_max}")
    if case.reference_bus not in known:
        fail("reference-bus", f"reference bus {case.reference_bus} does not exist")
    if len(case.shed_costs) != len(case.buses):
        fail("shed-costs", f"{len(case.shed_costs)} shed costs for {len(case.buses)} buses")
    max_gen_cost = max((g.cost for g in case.generators), default=-math.inf)
    for b, c in zip(case.buses, case.shed_costs):
        if not (math.isfinite(c) and c > max_gen_cost):
            fail("shed-cost-dominates",
                 f"shed cost {c} at bus {b.id} must exceed every generator cost ({max_gen_cost})")
    cap = sum(g.g_max for g in case.generators)
    load = sum(b.load for b in case.buses)
    if cap < load:
        fail("capacity-covers-load",
             f"total generation capacity {cap:g} MW is below total load {load:g} MW")
    # connectivity by union-find over bus ids
    parent = {b: b for b in ids}

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for br in case.branches:
        parent[find(br.from_bus)] = find(br.to_bus)
    roots = {find(b) for b in ids}
    if len(roots) > 1:
        fail("connected", f"branch graph has {len(roots)} islands (disconnected graph)")


# ----------------------------------------------------------------------------
# parsing

_ASSIGN = re.compile(r"([A-Za-z_][\w.]*)\s*=\s*")
_TABLE_WIDTH = {"bus": 2, "branch": 4, "gen": 4, "shed_cost": 2}


def _strip_comment(line: str) -> str:
    for mark in ("%", "#"):
        k = line.find(mark)
        if k >= 0:
            line = line[:k]
    return line


def _scan(text: str) -> tuple[dict[str, tuple[int, str]], dict[str, tuple[int, list[list[tuple[float, int, int]]]]]]:
    """Split text into scalar assignments and numeric tables.

    Table cells keep their (line, column) so validation errors can point at
    them.
    """
    scalars: dict[str, tuple[int, str]] = {}
    tables: dict[str, tuple[int, list]] = {}
    block: str | None = None
    block_line = 0
    rows: list = []
    current: list = []

    def flush():
        if current:
            rows.append(list(current))
            current.clear()

    def eat_cells(chunk: str, lineno: int, offset: int):
        # chunk holds numbers separated by whitespace/commas and ';' row breaks
        for m in re.finditer(r"[^\s,;]+|;", chunk):
            tok = m.group()
            col = offset + m.start() + 1
            if tok == ";":
                flush()
                continue
            try:
                val = float(tok)
            except ValueError:
                raise CaseFormatError(f"expected a number, found {tok!r}", lineno, col) from None
            current.append((val, lineno, col))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if block is not None:
            k = line.find("]")
            body = line if k < 0 else line[:k]
            eat_cells(body, lineno, 0)
            flush()
            if k >= 0:
                tail = line[k + 1:].strip()
                if tail not in ("", ";"):
                    raise CaseFormatError(f"unexpected text after ']': {tail!r}", lineno, k + 2)
                tables[block] = (block_line, rows)
                block, rows = None, []
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("function"):
            continue
        m = _ASSIGN.match(line, len(line) - len(line.lstrip()))
        if not m:
            col = len(line) - len(line.lstrip()) + 1
            raise CaseFormatError(f"expected 'name = value', found {stripped!r}", lineno, col)
        name = m.group(1)
        rest = line[m.end():]
        if rest.lstrip().startswith("["):
            if name in tables:
                raise CaseFormatError(f"table {name!r} defined twice", lineno, m.start() + 1)
            start = m.end() + rest.index("[") + 1
            after = line[start:]
            k = after.find("]")
            body = after if k < 0 else after[:k]
            block, block_line, rows = name, lineno, []
            eat_cells(body, lineno, start)
            flush()
            if k >= 0:
                tail = after[k + 1:].strip()
                if tail not in ("", ";"):
                    raise CaseFormatError(f"unexpected text after ']': {tail!r}", lineno, start + k + 2)
                tables[name] = (lineno, rows)
                block, rows = None, []
        else:
            value = rest.strip().rstrip(";").strip()
            if not value:
                raise CaseFormatError(f"missing value for {name!r}", lineno, m.end() + 1)
            scalars[name] = (lineno, value.strip("'\""))
    if block is not None:
        raise CaseFormatError(f"table {block!r} is never closed with ']'", block_line, 1)
    return scalars, tables


def _rows(tables, name, width, exact=True):
    line, rows = tables[name]
    out = []
    for row in rows:
        if (exact and len(row) != width) or len(row) < width:
            _, l, c = row[0]
            want = f"{width}" if exact else f"at least {width}"
            raise CaseFormatError(f"table {name!r} expects {want} columns, row has {len(row)}", l, c)
        out.append([v for v, _, _ in row])
    return out


def _as_int(v: float, name: str) -> int:
    if v != int(v):
        raise CaseValidationError("integer-ids", f"{name} id {v} is not an integer")
    return int(v)


def parse_case(text: str, name: str | None = None) -> GridCase:
    """Parse and validate case-file text."""
    scalars, tables = _scan(text)
    matpower = any(k.startswith("mpc.") for k in tables)
    mpc_ref = None
    if matpower:
        buses, branches, gens, mpc_ref = _matpower_tables(tables)
    else:
        for t in ("bus", "branch", "gen"):
            if t not in tables:
                raise CaseFormatError(f"missing table {t!r}", 1, 1)
        unknown = set(tables) - set(_TABLE_WIDTH)
        if unknown:
            line = tables[sorted(unknown)[0]][0]
            raise CaseFormatError(f"unknown table {sorted(unknown)[0]!r}", line, 1)
        buses = [Bus(_as_int(r[0], "bus"), r[1]) for r in _rows(tables, "bus", 2)]
        branches = [
            Branch(k, _as_int(r[0], "bus"), _as_int(r[1], "bus"), r[2], r[3])
            for k, r in enumerate(_rows(tables, "branch", 4), start=1)
        ]
        gens = [Generator(_as_int(r[0], "bus"), r[1], r[2], r[3]) for r in _rows(tables, "gen", 4)]

    shed = [DEFAULT_SHED_COST] * len(buses)
    key = "mpc.shed_cost" if matpower and "mpc.shed_cost" in scalars else "shed_cost"
    if key in scalars:
        line, raw = scalars[key]
        try:
            shed = [float(raw)] * len(buses)
        except ValueError:
            raise CaseFormatError(f"shed_cost must be a number, found {raw!r}", line, 1) from None
    if "shed_cost" in tables:
        pos = {b.id: i for i, b in enumerate(buses)}
        for r in _rows(tables, "shed_cost", 2):
            bid = _as_int(r[0], "bus")
            if bid not in pos:
                raise CaseValidationError("shed-cost-bus", f"shed cost given for unknown bus {bid}")
            shed[pos[bid]] = r[1]

    ref = mpc_ref if mpc_ref is not None else (buses[0].id if buses else 0)
    for key in ("reference", "mpc.reference"):
        if key in scalars:
            line, raw = scalars[key]
            try:
                ref = int(float(raw))
            except ValueError:
                raise CaseFormatError(f"reference must be a bus id, found {raw!r}", line, 1) from None
    if name is None:
        name = scalars.get("name", scalars.get("mpc.name", (0, "")))[1]
    return GridCase(tuple(buses), tuple(branches), tuple(gens), tuple(float(s) for s in shed), ref, name)


def _matpower_tables(tables):
    for t in ("mpc.bus", "mpc.branch", "mpc.gen"):
        if t not in tables:
            raise CaseFormatError(f"missing table {t!r}", 1, 1)
    bus_rows = _rows(tables, "mpc.bus", 3, exact=False)
    buses = [Bus(_as_int(r[0], "bus"), r[2]) for r in bus_rows]
    ref_rows = [r for r in bus_rows if r[1] == 3]
    branches = []
    for r in _rows(tables, "mpc.branch", 6, exact=False):
        if len(r) > 10 and r[10] == 0:
            continue
        f_max = r[5] if r[5] > 0 else math.inf
        branches.append(Branch(len(branches) + 1, _as_int(r[0], "bus"), _as_int(r[1], "bus"), r[3], f_max))
    gen_rows = _rows(tables, "mpc.gen", 10, exact=False)
    if "mpc.gencost" in tables:
        cost_rows = _rows(tables, "mpc.gencost", 5, exact=False)
        if len(cost_rows) < len(gen_rows):
            raise CaseValidationError("gencost-rows", "fewer gencost rows than generators")
    else:
        cost_rows = [[2, 0, 0, 1, 0]] * len(gen_rows)
    gens = []
    for g, c in zip(gen_rows, cost_rows):
        if g[7] <= 0:
            continue
        if c[0] != 2:
            raise CaseValidationError("gencost-polynomial", "only polynomial (model 2) costs are supported")
        n = int(c[3])
        coeffs = c[4:4 + n]
        linear = coeffs[-2] if n >= 2 else 0.0
        gens.append(Generator(_as_int(g[0], "bus"), g[9], g[8], linear))
    ref = _as_int(ref_rows[0][0], "bus") if ref_rows else None
    return buses, branches, gens, ref


def write_case(case: GridCase) -> str:
    """Serialize a case in the compact layout; parse_case reads it back unchanged."""
    out = [f"% {case.name or 'grid case'}", ""]
    if case.name:
        out.append(f"name = {case.name};")
    out.append(f"reference = {case.reference_bus};")
    out += ["", "bus = [", "%  id  load_MW"]
    out += [f"  {b.id}  {_num(b.load)};" for b in case.buses]
    out += ["];", "", "branch = [", "%  from  to  x_pu  rateA_MW"]
    out += [f"  {br.from_bus}  {br.to_bus}  {_num(br.x)}  {_num(br.f_max)};" for br in case.branches]
    out += ["];", "", "gen = [", "%  bus  Pmin  Pmax  cost"]
    out += [f"  {g.bus}  {_num(g.g_min)}  {_num(g.g_max)}  {_num(g.cost)};" for g in case.generators]
    out += ["];", "", "shed_cost = [", "%  bus  cost"]
    out += [f"  {b.id}  {_num(c)};" for b, c in zip(case.buses, case.shed_costs)]
    out += ["];", ""]
    return "\n".join(out)


def _num(v: float) -> str:
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    return repr(float(v))


BUNDLED_CASES = ("ieee9", "ieee14", "ieee14_s2", "ieee24", "ieee39")


def load_case(path: str | Path) -> GridCase:
    """Load a case from a file path, or by bundled name (e.g. ``ieee14``)."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED_CASES:
        text = resources.files("gridmtd.data").joinpath(f"{path}.case").read_text()
        return parse_case(text, name=str(path))
    return parse_case(p.read_text(), name=p.stem)


# ----------------------------------------------------------------------------
# D-FACTS ranges and sidecar config


@dataclass(frozen=True)
class DfactsConfig:
    """Per-branch reactance range.  Branches without D-FACTS have a zero-width range."""

    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        if np.any(self.x_min <= 0):
            raise ValueError("x_min must be strictly positive")
        if np.any(self.x_min > self.x_max):
            raise ValueError("x_min exceeds x_max")

    @classmethod
    def symmetric(cls, case: GridCase, fraction: float, links: Iterable[int] | None = None) -> "DfactsConfig":
        if not 0 <= fraction < 1:
            raise ValueError(f"range fraction must lie in [0, 1), got {fraction}")
        x = case.reactances
        width = np.zeros(case.n_branch)
        chosen = range(1, case.n_branch + 1) if links is None else links
        for l in chosen:
            case.branch(l)
            width[l - 1] = fraction
        return cls(x * (1 - width), x * (1 + width))

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.x_min * (1 - 1e-12)) and np.all(x <= self.x_max * (1 + 1e-12)))


@dataclass
class SimConfig:
    """Sidecar experiment settings (JSON)."""

    alpha: float = 0.05
    sigma: float = 1.0  # MW, every sensor
    shed_cost: float | None = None
    dfacts_range: float = 0.2
    seed: int = 0
    eta: float = 0.06
    deployment: list[int] | None = None
    residual: str = "weighted"
    path_rule: str = "first"
    sign_rule: str = "positive"
    trials: int = 10_000
    support_cap: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.eta < 0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.residual not in ("weighted", "unweighted"):
            raise ValueError(f"residual must be 'weighted' or 'unweighted', got {self.residual!r}")
        if self.path_rule not in ("first", "random"):
            raise ValueError(f"path_rule must be 'first' or 'random', got {self.path_rule!r}")
        if self.sign_rule not in ("alternating", "positive", "negative"):
            raise ValueError(f"unknown sign_rule {self.sign_rule!r}")

    def apply(self, case: GridCase) -> GridCase:
        return case if self.shed_cost is None else case.with_shed_cost(self.shed_cost)


def parse_config(text: str) -> SimConfig:
    data = json.loads(text) if text.strip() else {}
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    known = {f.name for f in fields(SimConfig)}
    extra = set(data) - known
    if extra:
        raise ValueError(f"unknown config keys: {sorted(extra)}")
    return SimConfig(**data)


def load_config(path: str | Path | None) -> SimConfig:
    if path is None:
        return SimConfig()
    return parse_config(Path(path).read_text())


# ----------------------------------------------------------------------------
# reports


@dataclass
class Table:
    """Flat result set: one row per sample point."""

    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(tuple(values))


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _num(float(v))
    if isinstance(v, (list, tuple, set, frozenset)):
        return " ".join(_cell(x) for x in (sorted(v) if isinstance(v, (set, frozenset)) else v))
    return str(v)


def _jsonable(v):
    if isinstance(v, Table):
        return {"columns": list(v.columns), "rows": [[_jsonable(x) for x in r] for r in v.rows], **(
            {"meta": _jsonable(v.meta)} if v.meta else {})}
    if isinstance(v, Mapping):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (set, frozenset)):
        return sorted(_jsonable(x) for x in v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("Infinity" if v > 0 else "-Infinity" if v < 0 else "NaN")
    if hasattr(v, "__dataclass_fields__"):
        return _jsonable(asdict(v))
    return v


def _flatten(prefix: str, v, out: list):
    if isinstance(v, Mapping):
        for k, x in v.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), x, out)
    else:
        out.append((prefix, v))


def write_report(results: Table | Mapping[str, Any], fmt: str = "csv") -> str:
    """Serialize experiment results as CSV or JSON.

    A Table becomes a header line plus one line per row.  A nested mapping
    written as CSV is flattened to ``key,value`` lines with dotted keys.
    """
    if fmt == "json":
        return json.dumps(_jsonable(results), indent=2) + "\n"
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(results, Table):
        w.writerow(results.columns)
        for row in results.rows:
            w.writerow([_cell(v) for v in row])
    else:
        flat: list = []
        _flatten("", results, flat)
        w.writerow(("key", "value"))
        for k, v in flat:
            w.writerow((k, _cell(v)))
    return buf.getvalue()


def read_table_csv(text: str) -> Table:
    """Inverse of write_report(table, 'csv'); cells come back as strings."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    return Table(tuple(header), [tuple(r) for r in reader])
