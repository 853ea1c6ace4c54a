"""Memory layout, per-cycle signal record and the finite input abstraction.

Every checker, monitor and simulator component works over the same 16-bit
address space. Regions are closed intervals. The abstraction maps a concrete
cycle onto one of 2000 symbols so the checker can enumerate the whole input
alphabet.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterator

ADDR_BITS = 16
ADDR_MAX = (1 << ADDR_BITS) - 1
MAC_SIZE = 32
KEY_SIZE = 64


class PcClass(enum.IntEnum):
    ZERO = 0
    CR_MIN = 1
    CR_MID = 2
    CR_MAX = 3
    OUT = 4


class AddrClass(enum.IntEnum):
    KR = 0
    XS = 1
    MR = 2
    CTR = 3
    OTHER = 4


# Atom vocabulary shared by the LTL engine, the monitors and the checker.
# Bit i of an atom mask is ATOMS[i].
ATOMS: tuple[str, ...] = (
    "pc_in_cr",
    "pc_is_crmin",
    "pc_is_crmax",
    "pc_is_zero",
    "d_in_kr",
    "d_in_xs",
    "d_in_mr",
    "d_in_ctr",
    "dma_in_kr",
    "dma_in_xs",
    "dma_in_ctr",
    "irq",
    "r_en",
    "w_en",
    "dma_en",
    "reset",
)
ATOM_BIT = {name: i for i, name in enumerate(ATOMS)}
RESET_MASK = 1 << ATOM_BIT["reset"]

N_PC = len(PcClass)
N_ADDR = len(AddrClass)
N_BITS = 4
ALPHABET_SIZE = N_PC * N_ADDR * N_ADDR * (1 << N_BITS)


def in_region(addr: int, lo: int, hi: int) -> bool:
    """Closed-interval membership; both endpoints count."""
    if lo > hi:
        raise ValueError(f"malformed interval [{lo:#06x}, {hi:#06x}]")
    return addr >= lo and addr <= hi


@dataclass(frozen=True)
class Region:
    name: str
    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, addr: int) -> bool:
        return self.lo <= addr <= self.hi

    def overlaps(self, other: "Region") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi


@dataclass(frozen=True)
class MemoryLayout:
    cr_min: int
    cr_max: int
    k_min: int
    k_max: int
    xs_min: int
    xs_max: int
    mac_addr: int
    mac_size: int
    ar_min: int
    ar_max: int
    ctr_min: int | None = None
    ctr_max: int | None = None
    # Where untrusted code leaves the verifier's token before calling the
    # authenticated routine. Only meaningful together with CTR.
    auth_addr: int | None = None

    @property
    def mr_min(self) -> int:
        return self.mac_addr

    @property
    def mr_max(self) -> int:
        return self.mac_addr + self.mac_size - 1

    @property
    def has_ctr(self) -> bool:
        return self.ctr_min is not None and self.ctr_max is not None

    @property
    def cr(self) -> Region:
        return Region("CR", self.cr_min, self.cr_max)

    @property
    def kr(self) -> Region:
        return Region("KR", self.k_min, self.k_max)

    @property
    def xs(self) -> Region:
        return Region("XS", self.xs_min, self.xs_max)

    @property
    def mr(self) -> Region:
        return Region("MR", self.mr_min, self.mr_max)

    @property
    def ar(self) -> Region:
        return Region("AR", self.ar_min, self.ar_max)

    @property
    def ctr(self) -> Region | None:
        if not self.has_ctr:
            return None
        return Region("CTR", self.ctr_min, self.ctr_max)  # type: ignore[arg-type]

    @property
    def auth(self) -> Region | None:
        if self.auth_addr is None:
            return None
        return Region("AUTH", self.auth_addr, self.auth_addr + MAC_SIZE - 1)

    def regions(self) -> tuple[Region, ...]:
        out = [self.mr, self.cr, self.ar, self.kr, self.xs]
        if self.ctr is not None:
            out.append(self.ctr)
        if self.auth is not None:
            out.append(self.auth)
        return tuple(out)

    def with_ar(self, lo: int, size: int) -> "MemoryLayout":
        return replace(self, ar_min=lo, ar_max=lo + size - 1)

    def without_auth(self) -> "MemoryLayout":
        return replace(self, ctr_min=None, ctr_max=None, auth_addr=None)


def validate_layout(layout: MemoryLayout) -> list[str]:
    """Return the violated layout invariants; an empty list means valid."""
    problems: list[str] = []
    for f in fields(layout):
        v = getattr(layout, f.name)
        if v is None:
            continue
        if f.name == "mac_size":
            continue
        if not (0 <= v <= ADDR_MAX):
            problems.append(f"{f.name} outside 16-bit range")
    if layout.mac_size != MAC_SIZE:
        if layout.mac_size <= 0:
            problems.append("empty region: MR")
        problems.append(f"mac_size must be {MAC_SIZE}")
    if layout.mr_max > ADDR_MAX:
        problems.append("MR outside 16-bit range")
    if (layout.ctr_min is None) != (layout.ctr_max is None):
        problems.append("CTR needs both ctr_min and ctr_max")
    if layout.auth_addr is not None and not layout.has_ctr:
        problems.append("auth_addr requires a CTR region")
    if layout.auth is not None and layout.auth.hi > ADDR_MAX:
        problems.append("AUTH outside 16-bit range")

    regions = [r for r in layout.regions() if r.name != "MR" or layout.mac_size > 0]
    for r in regions:
        if r.lo > r.hi:
            problems.append(f"empty region: {r.name}")
    sane = [r for r in regions if r.lo <= r.hi]
    for i, a in enumerate(sane):
        for b in sane[i + 1:]:
            if a.overlaps(b):
                problems.append(f"{a.name} ∩ {b.name} ≠ ∅")
    if layout.cr_min <= layout.cr_max:
        if layout.cr_max - layout.cr_min < 2:
            problems.append("CR needs at least 3 addresses")
        if layout.cr_min == 0:
            problems.append("0 ∈ CR")
    return problems


def default_layout(auth: bool = False) -> MemoryLayout:
    """Shipped layout: XS of 2332 bytes at 0x1000, a 4500-byte CR, 4 KiB AR."""
    base = MemoryLayout(
        cr_min=0xA000,
        cr_max=0xA000 + 4500 - 1,
        k_min=0x6A00,
        k_max=0x6A00 + KEY_SIZE - 1,
        xs_min=0x1000,
        xs_max=0x1000 + 2332 - 1,
        mac_addr=0x0200,
        mac_size=MAC_SIZE,
        ar_min=0x4000,
        ar_max=0x4000 + 4096 - 1,
    )
    if auth:
        return replace(base, ctr_min=0x0240, ctr_max=0x0240 + 31, auth_addr=0x0260)
    return base


LAYOUT_KEYS = tuple(f.name for f in fields(MemoryLayout))


def parse_layout_text(text: str) -> MemoryLayout:
    """Parse `name = value` lines; `#` starts a comment; values are hex or decimal."""
    values: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'name = value'")
        name, _, value = (s.strip() for s in line.partition("="))
        if name not in LAYOUT_KEYS:
            raise ValueError(f"line {lineno}: unknown layout key {name!r}")
        try:
            values[name] = int(value, 0)
        except ValueError:
            raise ValueError(f"line {lineno}: bad number {value!r}") from None
    missing = [k for k in LAYOUT_KEYS[:10] if k not in values]
    if missing:
        raise ValueError(f"missing layout keys: {', '.join(missing)}")
    return MemoryLayout(**values)


def load_layout(path: str | Path) -> MemoryLayout:
    return parse_layout_text(Path(path).read_text())


def format_layout(layout: MemoryLayout) -> str:
    lines = []
    for f in fields(layout):
        v = getattr(layout, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {v}" if f.name == "mac_size" else f"{f.name} = {v:#06x}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True, slots=True)
class CycleSignals:
    pc: int
    irq: bool = False
    r_en: bool = False
    w_en: bool = False
    d_addr: int = 0
    dma_en: bool = False
    dma_addr: int = 0


@dataclass(frozen=True, order=True)
class AbstractSymbol:
    pc_class: PcClass
    daddr_class: AddrClass
    dmaaddr_class: AddrClass
    irq: bool = False
    r_en: bool = False
    w_en: bool = False
    dma_en: bool = False

    @property
    def index(self) -> int:
        bits = int(self.irq) | int(self.r_en) << 1 | int(self.w_en) << 2 | int(self.dma_en) << 3
        return ((int(self.pc_class) * N_ADDR + int(self.daddr_class)) * N_ADDR
                + int(self.dmaaddr_class)) * 16 + bits

    @classmethod
    def from_index(cls, index: int) -> "AbstractSymbol":
        if not 0 <= index < ALPHABET_SIZE:
            raise ValueError(f"symbol index {index} out of range")
        bits = index & 15
        rest = index >> 4
        dma = rest % N_ADDR
        rest //= N_ADDR
        d = rest % N_ADDR
        pc = rest // N_ADDR
        return cls(PcClass(pc), AddrClass(d), AddrClass(dma),
                   bool(bits & 1), bool(bits & 2), bool(bits & 4), bool(bits & 8))

    def atom_mask(self) -> int:
        return SYMBOL_ATOMS[self.index]

    def encode(self) -> str:
        return (f"pc={self.pc_class.name} d={self.daddr_class.name} dma={self.dmaaddr_class.name} "
                f"irq={int(self.irq)} r_en={int(self.r_en)} w_en={int(self.w_en)} "
                f"dma_en={int(self.dma_en)}")

    @classmethod
    def decode(cls, line: str) -> "AbstractSymbol":
        kv = dict(part.split("=", 1) for part in line.split())
        return cls(PcClass[kv["pc"]], AddrClass[kv["d"]], AddrClass[kv["dma"]],
                   kv["irq"] == "1", kv["r_en"] == "1", kv["w_en"] == "1", kv["dma_en"] == "1")


def all_symbols() -> Iterator[AbstractSymbol]:
    for i in range(ALPHABET_SIZE):
        yield AbstractSymbol.from_index(i)


def _atoms_for_index(index: int) -> int:
    bits = index & 15
    rest = index >> 4
    dma = rest % N_ADDR
    rest //= N_ADDR
    d = rest % N_ADDR
    pc = rest // N_ADDR
    m = 0
    if pc in (PcClass.CR_MIN, PcClass.CR_MID, PcClass.CR_MAX):
        m |= 1 << ATOM_BIT["pc_in_cr"]
    if pc == PcClass.CR_MIN:
        m |= 1 << ATOM_BIT["pc_is_crmin"]
    if pc == PcClass.CR_MAX:
        m |= 1 << ATOM_BIT["pc_is_crmax"]
    if pc == PcClass.ZERO:
        m |= 1 << ATOM_BIT["pc_is_zero"]
    for cls, name in ((AddrClass.KR, "kr"), (AddrClass.XS, "xs"),
                      (AddrClass.MR, "mr"), (AddrClass.CTR, "ctr")):
        if d == cls:
            m |= 1 << ATOM_BIT["d_in_" + name]
        if dma == cls and name != "mr":
            m |= 1 << ATOM_BIT["dma_in_" + name]
    for i, name in enumerate(("irq", "r_en", "w_en", "dma_en")):
        if bits >> i & 1:
            m |= 1 << ATOM_BIT[name]
    return m


# Atom mask (reset bit clear) for every symbol index.
SYMBOL_ATOMS: tuple[int, ...] = tuple(_atoms_for_index(i) for i in range(ALPHABET_SIZE))


class Classifier:
    """Per-layout lookup tables from concrete addresses to abstract classes."""

    def __init__(self, layout: MemoryLayout):
        self.layout = layout
        pc = bytearray([PcClass.OUT]) * (ADDR_MAX + 1)
        for a in range(layout.cr_min, layout.cr_max + 1):
            pc[a] = PcClass.CR_MID
        pc[layout.cr_min] = PcClass.CR_MIN
        pc[layout.cr_max] = PcClass.CR_MAX
        pc[0] = PcClass.ZERO
        addr = bytearray([AddrClass.OTHER]) * (ADDR_MAX + 1)
        marks = [(layout.kr, AddrClass.KR), (layout.xs, AddrClass.XS), (layout.mr, AddrClass.MR)]
        if layout.ctr is not None:
            marks.append((layout.ctr, AddrClass.CTR))
        for region, cls in marks:
            addr[region.lo:region.hi + 1] = bytes([cls]) * region.size
        self.pc_table = bytes(pc)
        self.addr_table = bytes(addr)

    def symbol_index(self, s: CycleSignals) -> int:
        bits = int(s.irq) | int(s.r_en) << 1 | int(s.w_en) << 2 | int(s.dma_en) << 3
        return ((self.pc_table[s.pc] * N_ADDR + self.addr_table[s.d_addr]) * N_ADDR
                + self.addr_table[s.dma_addr]) * 16 + bits


@lru_cache(maxsize=32)
def classifier(layout: MemoryLayout) -> Classifier:
    return Classifier(layout)


def abstract(signals: CycleSignals, layout: MemoryLayout) -> AbstractSymbol:
    return AbstractSymbol.from_index(classifier(layout).symbol_index(signals))


def _pick(layout: MemoryLayout, cls: AddrClass) -> int:
    table = classifier(layout).addr_table
    if cls == AddrClass.KR:
        return layout.k_min
    if cls == AddrClass.XS:
        return layout.xs_min
    if cls == AddrClass.MR:
        return layout.mr_min
    if cls == AddrClass.CTR:
        if layout.ctr_min is None:
            raise ValueError("layout has no CTR region")
        return layout.ctr_min
    return table.index(AddrClass.OTHER)


def concretize(symbol: AbstractSymbol, layout: MemoryLayout) -> CycleSignals:
    """Pick one concrete cycle inside the given symbol's classes."""
    pcs = {
        PcClass.ZERO: 0,
        PcClass.CR_MIN: layout.cr_min,
        PcClass.CR_MID: layout.cr_min + 1,
        PcClass.CR_MAX: layout.cr_max,
        PcClass.OUT: layout.cr_max + 1 if layout.cr_max < ADDR_MAX else layout.cr_min - 1,
    }
    return CycleSignals(
        pc=pcs[symbol.pc_class],
        irq=symbol.irq,
        r_en=symbol.r_en,
        w_en=symbol.w_en,
        d_addr=_pick(layout, symbol.daddr_class),
        dma_en=symbol.dma_en,
        dma_addr=_pick(layout, symbol.dmaaddr_class),
    )
