"""Electrode montage graph and the aunt relation driving cross-channel coupling.

A montage is an ordered set of channel names plus an undirected graph of
coupling edges.  Each edge is either a within-hemisphere / midline
``neighbor`` link or a ``contralateral`` link between homologous
electrodes of opposite hemispheres.  The aunts of a channel are all
channels it shares an edge with; their seizure activity raises the
channel's own onset probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InputError

NEIGHBOR = "neighbor"
CONTRALATERAL = "contralateral"
EDGE_KINDS = (NEIGHBOR, CONTRALATERAL)


class MontageError(InputError):
    pass


@dataclass(frozen=True)
class MontageGraph:
    """Ordered channels plus undirected, typed coupling edges."""

    channels: tuple[str, ...]
    edges: tuple[tuple[str, str, str], ...]
    _adjacency: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if len(set(self.channels)) != len(self.channels):
            dupes = sorted({c for c in self.channels if self.channels.count(c) > 1})
            raise MontageError(f"duplicate channel identifiers: {', '.join(dupes)}")
        known = set(self.channels)
        adjacency = {c: set() for c in self.channels}
        for a, b, kind in self.edges:
            if kind not in EDGE_KINDS:
                raise MontageError(f"unknown edge kind {kind!r} on edge ({a}, {b})")
            if a == b:
                raise MontageError(f"self-edge on channel {a!r}")
            for end in (a, b):
                if end not in known:
                    raise MontageError(f"edge references unknown channel {end!r}")
            adjacency[a].add(b)
            adjacency[b].add(a)
        object.__setattr__(self, "_adjacency", {c: frozenset(n) for c, n in adjacency.items()})

    def __eq__(self, other):
        if not isinstance(other, MontageGraph):
            return NotImplemented
        return self.channels == other.channels and self._edge_set() == other._edge_set()

    def __hash__(self):
        return hash((self.channels, frozenset(self._edge_set())))

    def _edge_set(self):
        return {(frozenset((a, b)), kind) for a, b, kind in self.edges}

    def index(self, channel: str) -> int:
        try:
            return self.channels.index(channel)
        except ValueError:
            raise MontageError(f"unknown channel {channel!r}") from None

    @property
    def n_channels(self) -> int:
        return len(self.channels)


def aunts(graph: MontageGraph, channel: str) -> set[str]:
    """All channels sharing an edge with ``channel`` (never includes itself)."""
    if channel not in graph._adjacency:
        raise MontageError(f"unknown channel {channel!r}")
    return set(graph._adjacency[channel])


def aunt_indices(graph: MontageGraph) -> list[list[int]]:
    """Per-channel aunt index lists, in channel order."""
    pos = {c: i for i, c in enumerate(graph.channels)}
    return [sorted(pos[a] for a in graph._adjacency[c]) for c in graph.channels]


# Fixed default 10/20 montage: eight contralateral pairs plus
# nearest-neighbor links within each hemisphere and along the midline.
STANDARD_CHANNELS = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
    "C4", "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2",
)

_CONTRALATERAL = (
    ("Fp1", "Fp2"), ("F7", "F8"), ("F3", "F4"), ("T3", "T4"),
    ("C3", "C4"), ("T5", "T6"), ("P3", "P4"), ("O1", "O2"),
)

_NEIGHBOR = (
    # left hemisphere
    ("Fp1", "F7"), ("Fp1", "F3"), ("F7", "T3"), ("F3", "C3"), ("F3", "Fz"),
    ("T3", "T5"), ("C3", "P3"), ("C3", "Cz"), ("T5", "O1"), ("P3", "O1"),
    ("P3", "Pz"),
    # right hemisphere, mirrored
    ("Fp2", "F8"), ("Fp2", "F4"), ("F8", "T4"), ("F4", "C4"), ("F4", "Fz"),
    ("T4", "T6"), ("C4", "P4"), ("C4", "Cz"), ("T6", "O2"), ("P4", "O2"),
    ("P4", "Pz"),
    # midline
    ("Fz", "Cz"), ("Cz", "Pz"),
)


def build_standard_montage() -> MontageGraph:
    """The built-in 19-channel 10/20 montage with the default edge list."""
    edges = tuple((a, b, CONTRALATERAL) for a, b in _CONTRALATERAL)
    edges += tuple((a, b, NEIGHBOR) for a, b in _NEIGHBOR)
    return MontageGraph(STANDARD_CHANNELS, edges)


def load_montage(text: str) -> MontageGraph:
    """Parse the plain-text montage format.

    First meaningful line is ``channels: <comma-separated ids>``; every
    following line is ``edge: <id> <id> <neighbor|contralateral>``.
    Lines starting with ``#`` and blank lines are ignored.
    """
    channels = None
    edges = []
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if channels is None:
            if not line.startswith("channels:"):
                raise MontageError(f"line {lineno}: expected 'channels:' header, got {line!r}")
            names = [c.strip() for c in line[len("channels:"):].split(",") if c.strip()]
            if not names:
                raise MontageError(f"line {lineno}: empty channel list")
            channels = tuple(names)
            continue
        if not line.startswith("edge:"):
            raise MontageError(f"line {lineno}: expected 'edge:' line, got {line!r}")
        parts = line[len("edge:"):].split()
        if len(parts) != 3:
            raise MontageError(f"line {lineno}: edge needs '<id> <id> <kind>', got {line!r}")
        a, b, kind = parts
        key = frozenset((a, b))
        if key in seen:
            if seen[key] != kind:
                raise MontageError(f"line {lineno}: edge ({a}, {b}) already declared with kind {seen[key]!r}")
            continue
        seen[key] = kind
        edges.append((a, b, kind))
    if channels is None:
        raise MontageError("montage text contains no 'channels:' line")
    try:
        return MontageGraph(channels, tuple(edges))
    except MontageError as exc:
        raise MontageError(str(exc)) from None


def serialize_montage(graph: MontageGraph) -> str:
    """Inverse of :func:`load_montage` for valid graphs."""
    lines = ["channels: " + ",".join(graph.channels)]
    lines += [f"edge: {a} {b} {kind}" for a, b, kind in graph.edges]
    return "\n".join(lines) + "\n"
