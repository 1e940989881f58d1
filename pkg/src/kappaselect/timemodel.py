"""Time accounting for dual versus split review.

With review velocity v (studies per minute) and a dual phase lasting T0
minutes, the two reviewers have jointly processed S0 = v*T0 studies by the
time the split starts. Reviewing S >= S0 studies then costs

    dual review   T0 + (S - S0) / v
    split review  T0 + (S - S0) / (2v)

and the fractional saving of splitting is

    ts(S) = 1 - split/dual = 1/2 - v*T0 / (2S)   for S >= S0, else 0

which is 0 at S = S0, strictly increasing beyond it, and approaches 1/2 as S
grows: with enough studies the split saves almost half the effort. (At T0 = 0
the formula degenerates to a flat 1/2; any actual dual phase keeps it below.)

All arithmetic is exact (`fractions.Fraction`); durations are minutes
internally with hh:mm parsing/formatting at the boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError, KappaSelectError
from .protocol import Phase, ReviewSession

__all__ = [
    "FittedTiming",
    "InvalidRange",
    "MissingTimings",
    "SavingsCurve",
    "TimeModel",
    "curve_to_csv",
    "fit_model",
    "format_hhmm",
    "parse_hhmm",
    "projection_curve",
    "time_dual",
    "time_saving",
    "time_split",
]


class MissingTimings(KappaSelectError):
    """The session's timing log lacks the entries needed to fit a model."""


class InvalidRange(KappaSelectError, ValueError):
    """Curve sampling range or step count is unusable."""


Number = Fraction | int | float


def parse_hhmm(text: str) -> int:
    """Parse "hh:mm" (or a bare minute count) into whole minutes."""
    text = text.strip()
    if ":" in text:
        hours_text, _, minutes_text = text.partition(":")
        try:
            hours, minutes = int(hours_text), int(minutes_text)
        except ValueError:
            raise DomainError(f"not a duration: {text!r}") from None
        if hours < 0 or not 0 <= minutes < 60:
            raise DomainError(f"not a duration: {text!r}")
        return hours * 60 + minutes
    try:
        minutes = int(text)
    except ValueError:
        raise DomainError(f"not a duration: {text!r}") from None
    if minutes < 0:
        raise DomainError("duration cannot be negative")
    return minutes


def format_hhmm(minutes: int) -> str:
    if minutes < 0:
        raise DomainError("duration cannot be negative")
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def _round_half_up(value: Fraction) -> int:
    units = (abs(value) + Fraction(1, 2)).__floor__()
    return -units if value < 0 else units


@dataclass(frozen=True)
class TimeModel:
    """Review velocity v (studies/minute) and dual-phase duration t0 (minutes)."""

    v: Fraction
    t0: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "v", Fraction(self.v))
        object.__setattr__(self, "t0", Fraction(self.t0))
        if self.v <= 0:
            raise DomainError("velocity must be positive")
        if self.t0 < 0:
            raise DomainError("dual-phase duration cannot be negative")

    @property
    def s0(self) -> Fraction:
        """Studies already processed when the dual phase ends."""
        return self.v * self.t0


def time_dual(s: Number, model: TimeModel) -> Fraction:
    """Minutes to review s studies with dual review throughout."""
    s = Fraction(s)
    if s < model.s0:
        raise DomainError(f"s={s} is below the dual-phase workload s0={model.s0}")
    return model.t0 + (s - model.s0) / model.v


def time_split(s: Number, model: TimeModel) -> Fraction:
    """Minutes to review s studies when the post-dual remainder is split."""
    s = Fraction(s)
    if s < model.s0:
        raise DomainError(f"s={s} is below the dual-phase workload s0={model.s0}")
    return model.t0 + (s - model.s0) / (2 * model.v)


def time_saving(s: Number, model: TimeModel) -> Fraction:
    """Fraction of dual-review time saved by splitting, at s total studies."""
    s = Fraction(s)
    if s <= 0:
        raise DomainError("study count must be positive")
    if s < model.s0:
        return Fraction(0)
    return Fraction(1, 2) - model.v * model.t0 / (2 * s)


@dataclass(frozen=True)
class SavingsCurve:
    """Sampled (study count, saving) pairs, non-decreasing and below 1/2."""

    points: tuple[tuple[Fraction, Fraction], ...]


def projection_curve(model: TimeModel, s_max: Number, steps: int) -> SavingsCurve:
    """Sample ts(S) at `steps` evenly spaced points over [1, s_max]."""
    s_max = Fraction(s_max)
    if steps < 2:
        raise InvalidRange("steps must be >= 2")
    if s_max < model.s0:
        raise InvalidRange(f"s_max={s_max} is below the dual-phase workload s0={model.s0}")
    if s_max < 1:
        raise InvalidRange("s_max must be at least 1")
    start = Fraction(1)
    step = (s_max - start) / (steps - 1)
    points = []
    for i in range(steps):
        s = start + step * i
        points.append((s, time_saving(s, model)))
    return SavingsCurve(points=tuple(points))


def curve_to_csv(curve: SavingsCurve) -> str:
    """Render a curve as "S,ts" CSV with six-decimal values."""
    lines = ["S,ts"]
    for s, ts in curve.points:
        lines.append(f"{float(s):.6f},{float(ts):.6f}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FittedTiming:
    """A time model fitted from a finished session's timing log, plus the
    realized saving against a full-dual baseline at the fitted velocity."""

    model: TimeModel
    total_minutes: int
    traditional_minutes: int
    savings: Fraction
    phase1_minutes: int
    phase2_review_minutes: int
    phase2_studies: int

    @property
    def minutes_per_study(self) -> Fraction:
        return 1 / self.model.v

    def headline(self) -> str:
        pct = float(self.savings) * 100
        return (
            f"actual {format_hhmm(self.total_minutes)} vs traditional "
            f"{format_hhmm(self.traditional_minutes)} -> {pct:.1f}%"
        )

    def as_payload(self) -> dict:
        return {
            "actual_minutes": self.total_minutes,
            "actual": format_hhmm(self.total_minutes),
            "traditional_minutes": self.traditional_minutes,
            "traditional": format_hhmm(self.traditional_minutes),
            "savings": f"{float(self.savings):.4f}",
            "savings_fraction": f"{self.savings.numerator}/{self.savings.denominator}",
            "savings_pct": f"{float(self.savings) * 100:.1f}%",
            "velocity_studies_per_minute": f"{float(self.model.v):.4f}",
            "minutes_per_study": f"{float(self.minutes_per_study):.2f}",
            "t0_minutes": int(self.model.t0),
            "phase2_studies": self.phase2_studies,
            "phase2_review_minutes": self.phase2_review_minutes,
        }


def fit_model(session: ReviewSession) -> FittedTiming:
    """Fit (v, T0) from a completed session's timing log.

    Velocity comes from the two reviewers' phase-2 review minutes over the
    partitioned study count; T0 is every phase-1 minute including
    coordination and meetings. The traditional baseline is both reviewers
    dually reviewing the whole catalog at the fitted velocity, quantized to
    whole minutes (the granularity of the log itself).
    """
    if session.phase is not Phase.COMPLETE:
        raise MissingTimings("session is not complete; timings are still accumulating")
    if not session.timing_log:
        raise MissingTimings("timing log is empty")
    reviewers = set(session.reviewers)
    phase1_minutes = sum(e.minutes for e in session.timing_log if e.phase == 1)
    phase2_review_minutes = sum(
        e.minutes for e in session.timing_log if e.phase == 2 and e.actor in reviewers
    )
    if phase2_review_minutes <= 0:
        raise MissingTimings("no phase-2 reviewer minutes recorded")
    partitions = session.partitions or {}
    phase2_studies = sum(len(ids) for ids in partitions.values())
    if phase2_studies == 0:
        raise MissingTimings("no phase-2 studies to fit a velocity from")
    v = Fraction(phase2_studies, phase2_review_minutes)
    model = TimeModel(v=v, t0=Fraction(phase1_minutes))
    total = sum(e.minutes for e in session.timing_log)
    traditional_each = _round_half_up(Fraction(len(session.catalog)) / v)
    traditional_total = 2 * traditional_each
    savings = 1 - Fraction(total, traditional_total)
    return FittedTiming(
        model=model,
        total_minutes=total,
        traditional_minutes=traditional_total,
        savings=savings,
        phase1_minutes=phase1_minutes,
        phase2_review_minutes=phase2_review_minutes,
        phase2_studies=phase2_studies,
    )
