"""RC netlist parsing and MNA matrix assembly.

The accepted format is a SPICE-like element-per-line subset:

    Rname nodeA nodeB value
    Cname nodeA nodeB value

`*` or `;` starts a comment, node `0` is ground, values take the usual
engineering suffixes (f p n u m k meg g).  The driver port is named
out-of-band.  Stamping follows the standard nodal rules with ground
rows/columns dropped; the repair stage then guarantees that the
voltage-driven system is solvable: every capacitor touching the port is
re-terminated behind a tiny series resistor, and nodes without a
resistive path to the port are tied in with the same epsilon resistor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NetlistError, SingularNetworkError

GROUND = "0"

# Series resistance used by the repair stage.  Contributes time constants
# of order 1e-18 s on fF-scale caps, far below any signal bandwidth.
EPSILON_OHMS = 1e-3

_SUFFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "meg": 1e6,
    "g": 1e9,
}

_VALUE_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([a-zA-Z]*)$")


def parse_value(text, line=None):
    """Parse a number with an optional engineering suffix into SI units."""
    m = _VALUE_RE.match(text.strip())
    if not m:
        raise NetlistError(f"cannot parse value {text!r}", line)
    num, suffix = m.groups()
    value = float(num)
    if suffix:
        try:
            value *= _SUFFIXES[suffix.lower()]
        except KeyError:
            raise NetlistError(f"unknown unit suffix {suffix!r} in {text!r}", line) from None
    return value


@dataclass(frozen=True)
class Element:
    name: str
    node_a: str
    node_b: str
    value: float


@dataclass(frozen=True)
class RcNetwork:
    """Parsed RC topology with a designated driver port.

    `nodes` lists non-ground nodes in first-appearance order (the stamping
    order); `elements` keeps the source ordering so serialization
    round-trips exactly.  `repaired` marks networks that already went
    through the epsilon-resistor repair.
    """

    nodes: tuple[str, ...]
    elements: tuple[Element, ...]
    port: str
    repaired: bool = False

    @property
    def resistors(self) -> tuple[Element, ...]:
        return tuple(e for e in self.elements if e.name[0].upper() == "R")

    @property
    def capacitors(self) -> tuple[Element, ...]:
        return tuple(e for e in self.elements if e.name[0].upper() == "C")

    @property
    def c_total(self) -> float:
        """Sum of all capacitor values, grounded or node-to-node."""
        return float(sum(c.value for c in self.capacitors))

    @property
    def r_total(self) -> float:
        return float(sum(r.value for r in self.resistors))

    def validate(self):
        for el in self.resistors + self.capacitors:
            if not np.isfinite(el.value) or el.value <= 0.0:
                raise NetlistError(f"nonpositive value for {el.name}: {el.value}")
        if self.port == GROUND:
            raise NetlistError("port must not be ground")
        if self.port not in self.nodes:
            raise NetlistError(f"port node {self.port!r} not present in netlist")
        return self


def parse_netlist(text, port_name):
    """Parse netlist source into an RcNetwork with values in SI units."""
    nodes = []
    seen = set()
    names = set()
    elements = []

    def note_node(n):
        if n != GROUND and n not in seen:
            seen.add(n)
            nodes.append(n)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("*")[0].split(";")[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 4:
            raise NetlistError(f"expected 'NAME nodeA nodeB value', got {raw!r}", lineno)
        name, na, nb, val = fields
        kind = name[0].upper()
        if kind not in ("R", "C"):
            raise NetlistError(f"unsupported element {name!r} (only R and C)", lineno)
        if name.upper() in names:
            raise NetlistError(f"duplicate element name {name!r}", lineno)
        names.add(name.upper())
        if na == nb:
            raise NetlistError(f"element {name!r} has both terminals on {na!r}", lineno)
        value = parse_value(val, lineno)
        if not np.isfinite(value) or value <= 0.0:
            raise NetlistError(f"nonpositive value for {name!r}: {val!r}", lineno)
        note_node(na)
        note_node(nb)
        elements.append(Element(name, na, nb, value))

    if not elements:
        raise NetlistError("no elements in netlist")

    net = RcNetwork(nodes=tuple(nodes), elements=tuple(elements), port=port_name)
    return net.validate()


def serialize_netlist(net):
    """Inverse of parse_netlist (modulo comments); round-trips exactly."""
    lines = [f"{el.name} {el.node_a} {el.node_b} {el.value!r}" for el in net.elements]
    return "\n".join(lines) + "\n"


def _resistive_components(nodes, resistors):
    """Connected components of the resistor subgraph (ground is a vertex)."""
    adj = {n: [] for n in nodes}
    adj[GROUND] = []
    for r in resistors:
        adj[r.node_a].append(r.node_b)
        adj[r.node_b].append(r.node_a)
    return adj


def repair_network(net):
    """Insert epsilon resistors so the voltage-driven system is solvable.

    Two rules, applied in order:
      1. every capacitor incident to the port is re-terminated on a fresh
         internal node joined to the port by EPSILON_OHMS (keeps the
         driving-point admittance proper and the port row capacitor-free);
      2. any node without a resistive path to the port gets an epsilon
         resistor to its first capacitively-connected repaired neighbor,
         or to the port if it has none.
    """
    if net.repaired:
        return net

    nodes = list(net.nodes)
    elements = []
    eps_resistors = []
    eps_count = 0

    split_node = None
    for el in net.elements:
        if el.name[0].upper() == "C" and net.port in (el.node_a, el.node_b):
            if split_node is None:
                split_node = f"{net.port}__eps"
                while split_node in nodes:
                    split_node += "_"
                nodes.append(split_node)
                eps_count += 1
                eps_resistors.append(
                    Element(f"Reps{eps_count}", net.port, split_node, EPSILON_OHMS)
                )
            other = el.node_b if el.node_a == net.port else el.node_a
            elements.append(replace(el, node_a=split_node, node_b=other))
        else:
            elements.append(el)
    resistors = [e for e in elements if e.name[0].upper() == "R"] + eps_resistors
    capacitors = [e for e in elements if e.name[0].upper() == "C"]

    # BFS from the port over resistors; pull unreachable nodes in one by one.
    def reachable():
        adj = _resistive_components(nodes, resistors)
        seen = {net.port}
        stack = [net.port]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return seen

    seen = reachable()
    pending = [n for n in nodes if n not in seen]
    guard = 0
    while pending:
        guard += 1
        if guard > 2 * len(nodes) + 2:
            raise SingularNetworkError(
                "epsilon repair did not converge", isolated_nodes=pending
            )
        for n in pending:
            anchor = None
            for cap in capacitors:
                if n == cap.node_a and cap.node_b in seen and cap.node_b != GROUND:
                    anchor = cap.node_b
                    break
                if n == cap.node_b and cap.node_a in seen and cap.node_a != GROUND:
                    anchor = cap.node_a
                    break
            if anchor is None:
                # no reachable capacitive neighbor: tie to the port directly
                anchor = net.port
            eps_count += 1
            new = Element(f"Reps{eps_count}", anchor, n, EPSILON_OHMS)
            resistors.append(new)
            eps_resistors.append(new)
        seen = reachable()
        pending = [n for n in nodes if n not in seen]

    return RcNetwork(
        nodes=tuple(nodes),
        elements=tuple(elements) + tuple(eps_resistors),
        port=net.port,
        repaired=True,
    )


@dataclass(frozen=True)
class MnaSystem:
    """Stamped conductance/capacitance matrices plus port incidence.

    G and C are n x n (ground eliminated), B = L is the unit vector on the
    port row for the single-port current-in/voltage-out configuration.
    `net` keeps the repaired topology the matrices were stamped from.
    """

    G: sp.csr_matrix
    C: sp.csr_matrix
    B: np.ndarray
    L: np.ndarray
    node_index: dict[str, int]
    net: RcNetwork = field(repr=False)

    @property
    def n(self) -> int:
        return self.G.shape[0]

    @property
    def port_index(self) -> int:
        return self.node_index[self.net.port]

    @property
    def c_total(self) -> float:
        return self.net.c_total

    @property
    def r_total(self) -> float:
        return self.net.r_total

    def augmented(self):
        """Voltage-source-row system: x = [node voltages; port current].

        Ga = [[G, -e_p], [e_p^T, 0]], Ca = [[C, 0], [0, 0]], b = e_{n}.
        Driving the source row with the port voltage makes b^T (Ga + s Ca)^-1 b
        the driving-point admittance; current from driver into net is positive.
        """
        n = self.n
        p = self.port_index
        e = sp.csr_matrix(([1.0], ([p], [0])), shape=(n, 1))
        Ga = sp.bmat([[self.G, -e], [e.T, None]], format="csc")
        Ca = sp.block_diag((self.C, sp.csr_matrix((1, 1))), format="csc")
        b = np.zeros(n + 1)
        b[n] = 1.0
        return Ga, Ca, b


def _stamp(elements, node_index, n):
    rows, cols, vals = [], [], []
    for el in elements:
        a = node_index.get(el.node_a)
        b = node_index.get(el.node_b)
        v = el.value
        if a is not None:
            rows.append(a)
            cols.append(a)
            vals.append(v)
        if b is not None:
            rows.append(b)
            cols.append(b)
            vals.append(v)
        if a is not None and b is not None:
            rows += [a, b]
            cols += [b, a]
            vals += [-v, -v]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble_mna(net):
    """Stamp the (repaired) network into an MnaSystem and verify solvability."""
    net = repair_network(net.validate())
    node_index = {name: i for i, name in enumerate(net.nodes)}
    n = len(net.nodes)
    conductances = [replace(r, value=1.0 / r.value) for r in net.resistors]
    G = _stamp(conductances, node_index, n)
    C = _stamp(net.capacitors, node_index, n)
    B = np.zeros(n)
    B[node_index[net.port]] = 1.0
    sys_ = MnaSystem(G=G, C=C, B=B, L=B.copy(), node_index=node_index, net=net)
    check_solvable(sys_)
    return sys_


def check_solvable(sys_):
    """Factorize the augmented conductance matrix; report isolated nodes on failure."""
    Ga, _, _ = sys_.augmented()
    try:
        lu = spla.splu(Ga)
        u = np.abs(lu.U.diagonal())
        if u.min() <= 1e-14 * max(u.max(), 1.0):
            raise RuntimeError("factor is numerically singular")
    except RuntimeError as exc:
        isolated = _isolated_nodes(sys_.net)
        raise SingularNetworkError(
            f"conductance system is singular after repair: {exc}",
            isolated_nodes=isolated,
        ) from None
    return True


def _isolated_nodes(net):
    adj = _resistive_components(net.nodes, net.resistors)
    seen = {net.port}
    stack = [net.port]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return [n for n in net.nodes if n not in seen]
