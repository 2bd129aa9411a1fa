"""Bounded architecture family, its 9-bit genome encoding, and enumeration.

An architecture is a point in a three-parameter family: number of residual
blocks (0..15), the block interval between filter-count doublings (1..4),
and the LSTM size exponent (cells = 2^z, z in 4..8). The genome packs the
three parameters into a 9-bit string, blocks first:

    [ blocks: 4 bits | filter_interval - 1: 2 bits | lstm_exp - 4: 3 bits ]

with each gene most-significant bit first. The blocks and interval genes
are total over their ranges; the 3-bit LSTM gene has only five valid
values, so 3 * 4 * 16 = 192 of the 512 bit strings decode to no
architecture. Search treats those as zero-fitness individuals rather than
errors, so :func:`decode` returns ``None`` for them instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BLOCKS_BITS = 4
INTERVAL_BITS = 2
LSTM_BITS = 3
GENOME_BITS = BLOCKS_BITS + INTERVAL_BITS + LSTM_BITS

BLOCKS_RANGE = (0, 15)
INTERVAL_RANGE = (1, 4)
LSTM_EXP_RANGE = (4, 8)


@dataclass(frozen=True, order=True)
class ArchParams:
    """One architecture: ``blocks`` residual blocks, filter doubling every
    ``filter_interval`` blocks, and an LSTM with ``2**lstm_exp`` cells.

    Field order gives the canonical lexicographic ordering of the space.
    """

    blocks: int
    filter_interval: int
    lstm_exp: int

    def __post_init__(self):
        for name, value, (lo, hi) in (
            ("blocks", self.blocks, BLOCKS_RANGE),
            ("filter_interval", self.filter_interval, INTERVAL_RANGE),
            ("lstm_exp", self.lstm_exp, LSTM_EXP_RANGE),
        ):
            if not isinstance(value, int) or not lo <= value <= hi:
                raise ValueError(f"{name}={value!r} outside [{lo}, {hi}]")

    @property
    def lstm_cells(self) -> int:
        return 1 << self.lstm_exp

    def text(self) -> str:
        """Canonical text form, e.g. ``B=5,x=2,z=6``."""
        return f"B={self.blocks},x={self.filter_interval},z={self.lstm_exp}"

    @classmethod
    def from_text(cls, text: str) -> "ArchParams":
        """Parse the ``B=<int>,x=<int>,z=<int>`` form (order-insensitive)."""
        fields = {}
        for part in text.split(","):
            key, _, value = part.partition("=")
            key = key.strip()
            if key not in ("B", "x", "z") or key in fields:
                raise ValueError(f"bad architecture text {text!r}")
            try:
                fields[key] = int(value)
            except ValueError:
                raise ValueError(f"bad architecture text {text!r}") from None
        if set(fields) != {"B", "x", "z"}:
            raise ValueError(f"bad architecture text {text!r}")
        return cls(blocks=fields["B"], filter_interval=fields["x"], lstm_exp=fields["z"])


@dataclass(frozen=True)
class Chromosome:
    """A 9-character bit string; text form is the string itself."""

    bits: str

    def __post_init__(self):
        if len(self.bits) != GENOME_BITS or set(self.bits) - {"0", "1"}:
            raise ValueError(f"chromosome must be {GENOME_BITS} bits of '0'/'1', got {self.bits!r}")

    @classmethod
    def from_int(cls, value: int) -> "Chromosome":
        if not 0 <= value < (1 << GENOME_BITS):
            raise ValueError(f"genome integer {value} outside [0, {1 << GENOME_BITS})")
        return cls(format(value, f"0{GENOME_BITS}b"))

    def to_int(self) -> int:
        return int(self.bits, 2)

    def is_valid(self) -> bool:
        return decode(self) is not None


@dataclass(frozen=True)
class ArchitectureSpace:
    """Ordered, duplicate-free collection of architectures."""

    members: tuple[ArchParams, ...] = field(default=())

    @property
    def size(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, arch: ArchParams) -> bool:
        return arch in set(self.members)

    def restrict(self, keep) -> "ArchitectureSpace":
        """New space containing the members for which ``keep(arch)`` is true."""
        return ArchitectureSpace(tuple(a for a in self.members if keep(a)))


def encode(arch: ArchParams) -> Chromosome:
    """Pack an architecture into its genome (validation via ArchParams)."""
    bits = (
        format(arch.blocks, f"0{BLOCKS_BITS}b")
        + format(arch.filter_interval - 1, f"0{INTERVAL_BITS}b")
        + format(arch.lstm_exp - 4, f"0{LSTM_BITS}b")
    )
    return Chromosome(bits)


def decode(chromosome: Chromosome) -> ArchParams | None:
    """Inverse of :func:`encode`; ``None`` when the LSTM gene has no value."""
    bits = chromosome.bits
    blocks = int(bits[:BLOCKS_BITS], 2)
    interval = int(bits[BLOCKS_BITS:BLOCKS_BITS + INTERVAL_BITS], 2) + 1
    lstm_gene = int(bits[BLOCKS_BITS + INTERVAL_BITS:], 2)
    if lstm_gene > LSTM_EXP_RANGE[1] - LSTM_EXP_RANGE[0]:
        return None
    return ArchParams(blocks=blocks, filter_interval=interval, lstm_exp=lstm_gene + 4)


def enumerate_space() -> ArchitectureSpace:
    """All valid architectures in lexicographic (blocks, interval, lstm) order."""
    members = tuple(
        ArchParams(blocks=b, filter_interval=x, lstm_exp=z)
        for b in range(BLOCKS_RANGE[0], BLOCKS_RANGE[1] + 1)
        for x in range(INTERVAL_RANGE[0], INTERVAL_RANGE[1] + 1)
        for z in range(LSTM_EXP_RANGE[0], LSTM_EXP_RANGE[1] + 1)
    )
    return ArchitectureSpace(members)
