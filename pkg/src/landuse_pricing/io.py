"""Network, scenario and pricing file formats.

Network files are whitespace-separated tables grouped in sections::

    [nodes]          one or more node ids per line
    [links]          tail head t0 b p
    [origins]        node demand
    [destinations]   node a0 a1 a2 a3 b0 b1 b2
    [firms]          T

``#`` starts a comment. Scenario files are INI files (see ``data/*.ini``).
Pricing files are CSV with one row per link and one per destination.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .behavior import AttractionSpec, Behavior, LinkTimeSpec, LogitParams
from .equilibrium import EquilibriumConfig
from .errors import ParseError, ValidationError
from .network import Network

SECTIONS = ("nodes", "links", "origins", "destinations", "firms")
DATA_DIR = Path(__file__).parent / "data"


@dataclass(frozen=True, eq=False)
class NetworkFile:
    network: Network
    behavior: Behavior
    source: dict[str, list[str]]
    path: str = ""


def _numbers(tokens: list[str], where: str) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None


def parse_network_text(text: str, path: str = "<string>") -> NetworkFile:
    source: dict[str, list[str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in SECTIONS:
                raise ParseError(f"{path}:{lineno}: unknown section [{current}]")
            if current in source:
                raise ParseError(f"{path}:{lineno}: duplicate section [{current}]")
            source[current] = []
            continue
        if current is None:
            raise ParseError(f"{path}:{lineno}: data outside of a section")
        source[current].append(" ".join(line.split()))
    missing = [s for s in SECTIONS if not source.get(s)]
    if missing:
        raise ParseError(f"{path}: missing or empty section(s): {', '.join(missing)}")

    nodes = [tok for row in source["nodes"] for tok in row.split()]
    links, link_par = [], []
    for row in source["links"]:
        tok = row.split()
        if len(tok) != 5:
            raise ParseError(f"{path}: link row needs 'tail head t0 b p', got {row!r}")
        links.append((tok[0], tok[1]))
        link_par.append(_numbers(tok[2:], f"{path}: link {tok[0]}->{tok[1]}"))
    origins, demand = [], []
    for row in source["origins"]:
        tok = row.split()
        if len(tok) != 2:
            raise ParseError(f"{path}: origin row needs 'node demand', got {row!r}")
        origins.append(tok[0])
        demand.append(_numbers(tok[1:], f"{path}: origin {tok[0]}")[0])
    dests, dest_par = [], []
    for row in source["destinations"]:
        tok = row.split()
        if len(tok) != 8:
            raise ParseError(f"{path}: destination row needs 'node a0 a1 a2 a3 b0 b1 b2', got {row!r}")
        dests.append(tok[0])
        dest_par.append(_numbers(tok[1:], f"{path}: destination {tok[0]}"))
    firms = source["firms"][0].split()
    if len(source["firms"]) != 1 or len(firms) != 1:
        raise ParseError(f"{path}: [firms] holds a single number")
    total = _numbers(firms, f"{path}: [firms]")[0]

    network = Network(tuple(nodes), tuple(links), tuple(origins), tuple(demand), tuple(dests), total)
    lp = np.array(link_par).T
    dp = np.array(dest_par).T
    behavior = Behavior(LinkTimeSpec(*lp), AttractionSpec(*dp), labels=(path,))
    return NetworkFile(network, behavior, source, path)


def read_network(path) -> NetworkFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read network file: {exc}") from None
    return parse_network_text(text, str(path))


# -- scenarios -------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    base_demand: tuple[float, ...]
    increment: float
    count: int

    def __post_init__(self):
        if self.increment <= 0 or self.count <= 0:
            raise ValidationError("sweep increment and count must be positive")

    def demands(self, k: int) -> tuple[float, ...]:
        """Origin demands of scenario ``k`` (1-based)."""
        return tuple(o + (k - 1) * self.increment for o in self.base_demand)


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    path: str
    network_file: NetworkFile
    logit: LogitParams
    config: EquilibriumConfig
    pricing: str = "none"
    multistart: int = 4
    seed: int = 0
    max_routes: int = 10_000
    sweep: SweepSpec | None = None
    raw: dict[str, dict[str, str]] = field(default_factory=dict)

    @property
    def network(self) -> Network:
        return self.network_file.network

    @property
    def behavior(self) -> Behavior:
        return self.network_file.behavior


def read_scenario(path) -> Scenario:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from None

    def get(section, key, conv=str, default=None):
        if not parser.has_option(section, key):
            if default is None:
                raise ParseError(f"{path}: missing [{section}] {key}")
            return default
        value = parser.get(section, key)
        try:
            return conv(value)
        except ValueError:
            raise ParseError(f"{path}: [{section}] {key} = {value!r} is not valid") from None

    name = get("scenario", "name", str, path.stem)
    net_path = Path(get("scenario", "network"))
    if not net_path.is_absolute():
        net_path = path.parent / net_path
    network_file = read_network(net_path)
    logit = LogitParams(get("logit", "alpha", float), get("logit", "beta", float), get("logit", "gamma", float))
    defaults = EquilibriumConfig()
    config = EquilibriumConfig(
        tolerance=get("solver", "tolerance", float, defaults.tolerance),
        max_iterations=get("solver", "max_iterations", int, defaults.max_iterations),
        inner_max_iterations=get("solver", "inner_max_iterations", int, defaults.inner_max_iterations),
        damping=get("solver", "damping", str, defaults.damping),
        step=get("solver", "step", float, defaults.step),
        anderson=get("solver", "anderson", int, defaults.anderson),
        floor=get("solver", "floor", float, defaults.floor),
    )
    pricing = get("scenario", "pricing", str, "none")
    if pricing not in ("none", "road", "full"):
        raise ValidationError(f"pricing mode must be none, road or full, got {pricing!r}")
    sweep = None
    if parser.has_section("sweep"):
        base = tuple(_numbers(get("sweep", "base_demand").replace(",", " ").split(), f"{path}: [sweep]"))
        if len(base) != network_file.network.n_origins:
            raise ValidationError("sweep base_demand needs one value per origin")
        sweep = SweepSpec(base, get("sweep", "increment", float), get("sweep", "count", int))
    return Scenario(
        name=name,
        path=str(path),
        network_file=network_file,
        logit=logit,
        config=config,
        pricing=pricing,
        multistart=get("solver", "multistart", int, 4),
        seed=get("solver", "seed", int, 0),
        max_routes=get("solver", "max_routes", int, 10_000),
        sweep=sweep,
        raw={s: dict(parser.items(s)) for s in parser.sections()},
    )


def fixture_path(name: str) -> Path:
    """Path of a shipped scenario (``s2``, ``t2``, ``sixnode``)."""
    p = DATA_DIR / f"{name}.ini"
    if not p.exists():
        raise FileNotFoundError(p)
    return p


def load_fixture(name: str) -> Scenario:
    return read_scenario(fixture_path(name))


# -- pricing files -------------------------------------------------------------------

PRICING_HEADER = ["kind", "element", "link_toll", "entrance_fee", "business_tax"]


def write_pricing(scheme, network: Network, path=None) -> str:
    """Serialize a pricing scheme; returns the text and writes it if ``path`` is given."""
    buf = io.StringIO()
    buf.write(f"# mode: {scheme.mode}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PRICING_HEADER)
    for (tail, head), toll in zip(network.links, scheme.link_toll):
        w.writerow(["link", f"{tail}->{head}", repr(float(toll)), "", ""])
    for s, u, v in zip(network.destinations, scheme.entrance_fee, scheme.business_tax):
        w.writerow(["destination", s, "", repr(float(u)), repr(float(v))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_pricing(path, network: Network):
    """Parse a pricing file into ``(mode, link_toll, entrance_fee, business_tax)`` arrays."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ParseError(f"cannot read pricing file: {exc}") from None
    mode = "full"
    body = []
    for line in lines:
        if line.startswith("#"):
            if line[1:].strip().startswith("mode:"):
                mode = line.split(":", 1)[1].strip()
            continue
        if line.strip():
            body.append(line)
    rows = list(csv.DictReader(body))
    if not rows or set(rows[0]) != set(PRICING_HEADER):
        raise ParseError(f"{path}: expected columns {','.join(PRICING_HEADER)}")
    link_ix = {f"{a}->{b}": i for i, (a, b) in enumerate(network.links)}
    dest_ix = {s: i for i, s in enumerate(network.destinations)}
    toll = np.full(network.n_links, np.nan)
    fee = np.full(network.n_destinations, np.nan)
    tax = np.full(network.n_destinations, np.nan)
    try:
        for row in rows:
            if row["kind"] == "link":
                toll[link_ix[row["element"]]] = float(row["link_toll"])
            elif row["kind"] == "destination":
                i = dest_ix[row["element"]]
                fee[i] = float(row["entrance_fee"])
                tax[i] = float(row["business_tax"])
            else:
                raise ParseError(f"{path}: unknown row kind {row['kind']!r}")
    except KeyError as exc:
        raise ParseError(f"{path}: unknown element {exc}") from None
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if np.isnan(toll).any() or np.isnan(fee).any() or np.isnan(tax).any():
        raise ParseError(f"{path}: pricing file does not cover every link and destination")
    return mode, toll, fee, tax


# -- reports ----------------------------------------------------------------------------


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_report(report: dict, path=None) -> str:
    text = json.dumps(_plain(report), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
