"""Cohen's kappa and its companion diagnostics over 2x2 contingency tables.

Two reviewers classify every item as include or exclude. Their joint verdicts
form a 2x2 contingency table

                reviewer 1
                include  exclude
    reviewer 2
      include      a        b
      exclude      c        d

from which the agreement statistics are computed:

    p0    = P(a) + P(d)                          observed agreement
    pc    = (P(a)+P(c))(P(a)+P(b))
          + (P(b)+P(d))(P(c)+P(d))               chance agreement
    k     = (p0 - pc) / (1 - pc)                 Cohen (1960)
    k_max = p0^2 / ((1-p0)^2 + 1)
    k_min = (p0 - 1) / (p0 + 1)   for p0 < 1     Lantz & Nebenzahl (1996)
    k_nor = 2*p0 - 1
    S_D   = (P(b) - P(c)) / (1 - p0)             disagreement asymmetry
    S_A   = (P(a) - P(d)) / p0                   agreement asymmetry
    P++   = P(a),  P-- = P(d)                    prevalence proportions

A high p0 paired with a low k is the "first kappa paradox" (Feinstein &
Cicchetti 1990): skewed marginal totals inflate pc and depress k. The bounds
k_min/k_max/k_nor put a paradoxical k into perspective, and S_D/S_A/P++/P--
locate the asymmetry that causes it.

All arithmetic is exact: counts are integers and every statistic is a
`fractions.Fraction`. Conversion to floats or display strings happens only at
the caller's request (`format_half_up`). Degenerate tables (all mass in a
single cell, pc = 1) yield k = None rather than a division by zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from fractions import Fraction

from .errors import DomainError, KappaSelectError

__all__ = [
    "AgreementBand",
    "AgreementReport",
    "ContingencyTable",
    "DegenerateInput",
    "EmptyInput",
    "Verdict",
    "agreement_report",
    "asymmetry",
    "chance_agreement",
    "classify",
    "cohen_kappa",
    "format_half_up",
    "kappa_bounds",
    "observed_agreement",
    "paradox_flag",
    "tabulate",
]


class EmptyInput(KappaSelectError, ValueError):
    """No verdict pairs were supplied (a table needs at least one item)."""


class DegenerateInput(KappaSelectError, ValueError):
    """The operation needs a defined kappa but the table is degenerate."""


class Verdict(str, Enum):
    INCLUDE = "include"
    EXCLUDE = "exclude"

    @classmethod
    def coerce(cls, value: "Verdict | str") -> "Verdict":
        if isinstance(value, Verdict):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise DomainError(f"not a verdict: {value!r}") from None


class AgreementBand(IntEnum):
    """Landis & Koch (1977) strength-of-agreement bands, totally ordered."""

    POOR = 0
    SLIGHT = 1
    FAIR = 2
    MODERATE = 3
    SUBSTANTIAL = 4
    ALMOST_PERFECT = 5

    @property
    def label(self) -> str:
        return _BAND_LABELS[self]


_BAND_LABELS = {
    AgreementBand.POOR: "Poor",
    AgreementBand.SLIGHT: "Slight",
    AgreementBand.FAIR: "Fair",
    AgreementBand.MODERATE: "Moderate",
    AgreementBand.SUBSTANTIAL: "Substantial",
    AgreementBand.ALMOST_PERFECT: "Almost Perfect",
}

# Published band edges stop at two decimals (0.20 vs 0.21 ...); cutting at the
# midpoints gives every real k exactly one band. Each entry is the lowest k
# (inclusive) belonging to the band.
_BAND_FLOORS = (
    (Fraction(161, 200), AgreementBand.ALMOST_PERFECT),  # 0.805
    (Fraction(121, 200), AgreementBand.SUBSTANTIAL),  # 0.605
    (Fraction(81, 200), AgreementBand.MODERATE),  # 0.405
    (Fraction(41, 200), AgreementBand.FAIR),  # 0.205
    (Fraction(0), AgreementBand.SLIGHT),
)

#: observed agreement at or above this, with k below the Moderate cut,
#: raises the paradox flag
PARADOX_MIN_P0 = Fraction(3, 4)
PARADOX_MAX_K = Fraction(81, 200)


@dataclass(frozen=True)
class ContingencyTable:
    """Joint verdict counts: a both-include, d both-exclude, b/c the two
    disagreement orientations (b: reviewer-1 exclude, reviewer-2 include)."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self) -> None:
        for name in ("a", "b", "c", "d"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise DomainError(f"cell {name} must be a non-negative integer, got {value!r}")
        if self.n == 0:
            raise EmptyInput("contingency table has no observations")

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    @property
    def p_a(self) -> Fraction:
        return Fraction(self.a, self.n)

    @property
    def p_b(self) -> Fraction:
        return Fraction(self.b, self.n)

    @property
    def p_c(self) -> Fraction:
        return Fraction(self.c, self.n)

    @property
    def p_d(self) -> Fraction:
        return Fraction(self.d, self.n)

    def cells(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)


def tabulate(pairs: list[tuple[Verdict | str, Verdict | str]]) -> ContingencyTable:
    """Count joint verdicts into a contingency table.

    Each pair is (reviewer-1 verdict, reviewer-2 verdict).
    """
    if not pairs:
        raise EmptyInput("no verdict pairs to tabulate")
    a = b = c = d = 0
    for first, second in pairs:
        v1 = Verdict.coerce(first)
        v2 = Verdict.coerce(second)
        if v1 is Verdict.INCLUDE and v2 is Verdict.INCLUDE:
            a += 1
        elif v1 is Verdict.EXCLUDE and v2 is Verdict.EXCLUDE:
            d += 1
        elif v1 is Verdict.EXCLUDE:  # reviewer 2 included
            b += 1
        else:  # reviewer 1 included, reviewer 2 excluded
            c += 1
    return ContingencyTable(a, b, c, d)


def observed_agreement(table: ContingencyTable) -> Fraction:
    """Proportion of items both reviewers classified identically (p0)."""
    return table.p_a + table.p_d


def chance_agreement(table: ContingencyTable) -> Fraction:
    """Agreement expected from the marginal distributions alone (pc)."""
    p_cat1 = (table.p_a + table.p_c) * (table.p_a + table.p_b)
    p_cat2 = (table.p_b + table.p_d) * (table.p_c + table.p_d)
    return p_cat1 + p_cat2


def cohen_kappa(table: ContingencyTable) -> Fraction | None:
    """Chance-corrected agreement k = (p0 - pc) / (1 - pc).

    Returns None for degenerate tables (all mass in one cell, pc = 1), where
    the ratio is undefined.
    """
    p0 = observed_agreement(table)
    pc = chance_agreement(table)
    if pc == 1:
        return None
    return (p0 - pc) / (1 - pc)


def kappa_bounds(p0: Fraction | float) -> tuple[Fraction, Fraction, Fraction]:
    """Extreme and normal kappa values attainable at a fixed p0.

    Returns (k_max, k_min, k_nor). k_min is 0 by convention at p0 = 1, where
    its defining ratio no longer applies.
    """
    p0 = Fraction(p0)
    if not 0 <= p0 <= 1:
        raise DomainError(f"p0 must lie in [0, 1], got {p0}")
    k_max = p0 * p0 / ((1 - p0) ** 2 + 1)
    k_min = Fraction(0) if p0 == 1 else (p0 - 1) / (p0 + 1)
    k_nor = 2 * p0 - 1
    return k_max, k_min, k_nor


def asymmetry(
    table: ContingencyTable,
) -> tuple[Fraction | None, Fraction | None, Fraction, Fraction]:
    """Asymmetry indices and prevalence proportions (S_D, S_A, P++, P--).

    S_D is None when p0 = 1 (no disagreements to be asymmetric about) and
    S_A is None when p0 = 0.
    """
    p0 = observed_agreement(table)
    s_d = None if p0 == 1 else (table.p_b - table.p_c) / (1 - p0)
    s_a = None if p0 == 0 else (table.p_a - table.p_d) / p0
    return s_d, s_a, table.p_a, table.p_d


def classify(k: Fraction | float) -> AgreementBand:
    """Map a kappa value onto its strength-of-agreement band."""
    k = Fraction(k)
    if not -1 <= k <= 1:
        raise DomainError(f"kappa must lie in [-1, 1], got {k}")
    for floor, band in _BAND_FLOORS:
        if k >= floor:
            return band
    return AgreementBand.POOR


@dataclass(frozen=True)
class AgreementReport:
    """Everything worth reporting alongside a kappa value.

    k, s_d and s_a are None where undefined (degenerate table, p0 = 1, p0 = 0
    respectively); band and paradox_deviation are None whenever k is.
    """

    table: ContingencyTable
    p0: Fraction
    pc: Fraction
    k: Fraction | None
    k_max: Fraction
    k_min: Fraction
    k_nor: Fraction
    s_d: Fraction | None
    s_a: Fraction | None
    p_pp: Fraction
    p_mm: Fraction
    band: AgreementBand | None
    paradox: bool
    paradox_deviation: Fraction | None

    @property
    def degenerate(self) -> bool:
        return self.k is None


def paradox_flag(report: AgreementReport) -> tuple[bool, Fraction]:
    """Flag the first kappa paradox: high observed agreement, low kappa.

    Returns (flagged, |k - k_nor|). The deviation is reported even when the
    flag is down, since a large gap already hints at marginal asymmetry.
    """
    if report.k is None:
        raise DegenerateInput("kappa is undefined for this table")
    deviation = abs(report.k - report.k_nor)
    flagged = report.p0 >= PARADOX_MIN_P0 and report.k < PARADOX_MAX_K
    return flagged, deviation


def agreement_report(table: ContingencyTable) -> AgreementReport:
    """Compute the full agreement report for a table, at full precision."""
    p0 = observed_agreement(table)
    pc = chance_agreement(table)
    k = cohen_kappa(table)
    k_max, k_min, k_nor = kappa_bounds(p0)
    s_d, s_a, p_pp, p_mm = asymmetry(table)
    if k is None:
        band = None
        paradox = False
        deviation = None
    else:
        band = classify(k)
        paradox = p0 >= PARADOX_MIN_P0 and k < PARADOX_MAX_K
        deviation = abs(k - k_nor)
    return AgreementReport(
        table=table,
        p0=p0,
        pc=pc,
        k=k,
        k_max=k_max,
        k_min=k_min,
        k_nor=k_nor,
        s_d=s_d,
        s_a=s_a,
        p_pp=p_pp,
        p_mm=p_mm,
        band=band,
        paradox=paradox,
        paradox_deviation=deviation,
    )


def format_half_up(value: Fraction | float | None, places: int = 2) -> str:
    """Render a value at fixed decimals, rounding halves away from zero.

    None (an undefined statistic) renders as "undef". Exact rational rounding,
    so 0.005 never wobbles on binary representation.
    """
    if value is None:
        return "undef"
    value = Fraction(value)
    scale = 10**places
    scaled = value * scale
    units = (abs(scaled) + Fraction(1, 2)).__floor__()
    if scaled < 0:
        units = -units
    whole, frac = divmod(abs(units), scale)
    sign = "-" if units < 0 else ""
    if places == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:0{places}d}"
