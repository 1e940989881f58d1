"""Agreement statistics: worked examples, edge cases, and invariants."""

from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kappaselect.agreement import (
    AgreementBand,
    ContingencyTable,
    DegenerateInput,
    EmptyInput,
    Verdict,
    agreement_report,
    asymmetry,
    chance_agreement,
    classify,
    cohen_kappa,
    format_half_up,
    kappa_bounds,
    observed_agreement,
    paradox_flag,
    tabulate,
)
from kappaselect.errors import DomainError

I = Verdict.INCLUDE
E = Verdict.EXCLUDE


def cells() -> st.SearchStrategy[int]:
    return st.integers(min_value=0, max_value=60)


def tables() -> st.SearchStrategy[ContingencyTable]:
    return (
        st.tuples(cells(), cells(), cells(), cells())
        .filter(lambda t: sum(t) > 0)
        .map(lambda t: ContingencyTable(*t))
    )


class TestTabulate:
    def test_ten_study_example(self):
        pairs = [(I, I)] + [(I, E)] + [(E, I)] + [(E, E)] * 7
        table = tabulate(pairs)
        assert table.cells() == (1, 1, 1, 7)

    def test_agreement_only_batch(self):
        pairs = [(I, I)] * 13 + [(E, E)] * 2
        assert tabulate(pairs).cells() == (13, 0, 0, 2)

    def test_orientation_of_disagreement_cells(self):
        # b counts reviewer-1 exclude / reviewer-2 include; c the reverse
        assert tabulate([(E, I), (E, I), (I, E)]).cells() == (0, 2, 1, 0)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            tabulate([])

    def test_accepts_strings(self):
        assert tabulate([("include", "exclude")]).cells() == (0, 0, 1, 0)

    def test_rejects_garbage_verdicts(self):
        with pytest.raises(DomainError):
            tabulate([("include", "maybe")])


class TestContingencyTable:
    def test_rejects_negative_counts(self):
        with pytest.raises(DomainError):
            ContingencyTable(1, -1, 0, 0)

    def test_rejects_non_integers(self):
        with pytest.raises(DomainError):
            ContingencyTable(1.5, 0, 0, 0)  # type: ignore[arg-type]

    def test_rejects_all_zero(self):
        with pytest.raises(EmptyInput):
            ContingencyTable(0, 0, 0, 0)

    @given(tables())
    def test_cell_proportions_sum_to_one_exactly(self, table):
        assert table.p_a + table.p_b + table.p_c + table.p_d == 1


class TestObservedAgreement:
    def test_ten_study_example(self):
        assert observed_agreement(ContingencyTable(1, 1, 1, 7)) == Fraction(4, 5)

    def test_first_iteration_cells(self):
        # hand count: (9 + 4) agreements out of 15
        assert observed_agreement(ContingencyTable(9, 1, 1, 4)) == Fraction(13, 15)

    def test_total_disagreement(self):
        assert observed_agreement(ContingencyTable(0, 5, 5, 0)) == 0


class TestChanceAgreement:
    def test_ten_study_example(self):
        assert chance_agreement(ContingencyTable(1, 1, 1, 7)) == Fraction(17, 25)

    def test_first_iteration_cells(self):
        # hand expansion: (10/15)(10/15) + (5/15)(5/15) = 125/225
        assert chance_agreement(ContingencyTable(9, 1, 1, 4)) == Fraction(125, 225)

    def test_uniform_table(self):
        assert chance_agreement(ContingencyTable(4, 4, 4, 4)) == Fraction(1, 2)


class TestCohenKappa:
    def test_ten_study_example(self):
        assert cohen_kappa(ContingencyTable(1, 1, 1, 7)) == Fraction(3, 8)

    def test_first_iteration(self):
        assert cohen_kappa(ContingencyTable(9, 1, 1, 4)) == Fraction(7, 10)

    def test_second_iteration_rounds_to_074(self):
        k = cohen_kappa(ContingencyTable(7, 2, 0, 6))
        assert k == Fraction(14, 19)
        assert format_half_up(k) == "0.74"

    def test_uniform_table_is_zero(self):
        assert cohen_kappa(ContingencyTable(4, 4, 4, 4)) == 0

    def test_single_cell_table_is_degenerate(self):
        assert cohen_kappa(ContingencyTable(10, 0, 0, 0)) is None

    @given(tables())
    def test_perfect_agreement_with_both_categories(self, table):
        if table.b == 0 and table.c == 0 and table.a >= 1 and table.d >= 1:
            assert cohen_kappa(table) == 1


class TestKappaBounds:
    def test_first_iteration_p0(self):
        k_max, k_min, k_nor = kappa_bounds(Fraction(13, 15))
        assert (k_max, k_min, k_nor) == (Fraction(169, 229), Fraction(-1, 14), Fraction(11, 15))
        assert format_half_up(k_max) == "0.74"
        assert format_half_up(k_min) == "-0.07"
        assert format_half_up(k_nor) == "0.73"

    def test_perfect_p0_uses_zero_convention_for_minimum(self):
        assert kappa_bounds(Fraction(1)) == (Fraction(1), Fraction(0), Fraction(1))

    def test_p0_point_eight_evaluates_the_closed_forms(self):
        k_max, k_min, k_nor = kappa_bounds(Fraction(4, 5))
        assert k_max == Fraction(8, 13)  # 0.6154, per the formula
        assert k_min == Fraction(-1, 9)  # -0.1111
        assert k_nor == Fraction(3, 5)

    @pytest.mark.parametrize("bad", [Fraction(-1, 10), Fraction(11, 10)])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(DomainError):
            kappa_bounds(bad)


class TestAsymmetry:
    def test_balanced_disagreements(self):
        s_d, s_a, p_pp, p_mm = asymmetry(ContingencyTable(9, 1, 1, 4))
        assert s_d == 0
        assert p_pp == Fraction(3, 5)
        assert s_a == Fraction(5, 13)  # (9/15 - 4/15) / (13/15)
        assert p_mm == Fraction(4, 15)

    def test_one_sided_disagreements(self):
        s_d, _, p_pp, _ = asymmetry(ContingencyTable(7, 2, 0, 6))
        assert s_d == 1
        assert p_pp == Fraction(7, 15)
        assert format_half_up(p_pp) == "0.47"

    def test_sd_undefined_at_full_agreement(self):
        s_d, s_a, p_pp, _ = asymmetry(ContingencyTable(13, 0, 0, 2))
        assert s_d is None
        assert s_a is not None
        assert format_half_up(p_pp) == "0.87"

    def test_sa_undefined_at_zero_agreement(self):
        s_d, s_a, _, _ = asymmetry(ContingencyTable(0, 5, 5, 0))
        assert s_a is None
        assert s_d == 0


class TestClassify:
    @pytest.mark.parametrize(
        "k,band",
        [
            (Fraction(-1), AgreementBand.POOR),
            (Fraction(-1, 1000), AgreementBand.POOR),
            (Fraction(0), AgreementBand.SLIGHT),
            (Fraction(1, 5), AgreementBand.SLIGHT),
            (Fraction(41, 200), AgreementBand.FAIR),
            (Fraction(3, 8), AgreementBand.FAIR),
            (Fraction(2, 5), AgreementBand.FAIR),
            (Fraction(81, 200), AgreementBand.MODERATE),
            (Fraction(3, 5), AgreementBand.MODERATE),
            (Fraction(121, 200), AgreementBand.SUBSTANTIAL),
            (Fraction(7, 10), AgreementBand.SUBSTANTIAL),
            (Fraction(4, 5), AgreementBand.SUBSTANTIAL),
            (Fraction(161, 200), AgreementBand.ALMOST_PERFECT),
            (Fraction(1), AgreementBand.ALMOST_PERFECT),
        ],
    )
    def test_band_boundaries(self, k, band):
        assert classify(k) is band

    @pytest.mark.parametrize("bad", [Fraction(-11, 10), Fraction(11, 10)])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(DomainError):
            classify(bad)

    @given(
        st.fractions(min_value=-1, max_value=1),
        st.fractions(min_value=-1, max_value=1),
    )
    def test_monotone(self, k1, k2):
        if k1 > k2:
            k1, k2 = k2, k1
        assert classify(k1) <= classify(k2)

    def test_band_total_order(self):
        assert (
            AgreementBand.POOR
            < AgreementBand.SLIGHT
            < AgreementBand.FAIR
            < AgreementBand.MODERATE
            < AgreementBand.SUBSTANTIAL
            < AgreementBand.ALMOST_PERFECT
        )


class TestParadoxFlag:
    def test_flags_high_p0_low_k(self):
        report = agreement_report(ContingencyTable(1, 1, 1, 7))
        flagged, deviation = paradox_flag(report)
        assert flagged is True
        assert deviation == Fraction(9, 40)  # |0.375 - 0.6| = 0.225

    def test_substantial_kappa_not_flagged(self):
        report = agreement_report(ContingencyTable(9, 1, 1, 4))
        flagged, deviation = paradox_flag(report)
        assert flagged is False
        assert deviation == Fraction(1, 30)

    def test_low_agreement_cannot_be_paradoxical(self):
        report = agreement_report(ContingencyTable(4, 4, 4, 4))
        flagged, deviation = paradox_flag(report)
        assert flagged is False
        assert deviation == 0

    def test_degenerate_report_rejected(self):
        report = agreement_report(ContingencyTable(0, 0, 0, 5))
        with pytest.raises(DegenerateInput):
            paradox_flag(report)


class TestAgreementReport:
    def test_first_iteration_composite(self):
        report = agreement_report(ContingencyTable(9, 1, 1, 4))
        assert report.k == Fraction(7, 10)
        assert format_half_up(report.k_max) == "0.74"
        assert format_half_up(report.k_min) == "-0.07"
        assert format_half_up(report.k_nor) == "0.73"
        assert report.s_d == 0
        assert report.p_pp == Fraction(3, 5)
        assert report.band is AgreementBand.SUBSTANTIAL
        assert report.paradox is False

    def test_ten_study_composite(self):
        report = agreement_report(ContingencyTable(1, 1, 1, 7))
        assert report.p0 == Fraction(4, 5)
        assert report.pc == Fraction(17, 25)
        assert report.k == Fraction(3, 8)
        assert report.band is AgreementBand.FAIR
        assert report.paradox is True

    def test_degenerate_table(self):
        report = agreement_report(ContingencyTable(0, 0, 0, 5))
        assert report.degenerate
        assert report.k is None
        assert report.band is None
        assert report.p0 == 1
        assert report.p_pp == 0
        assert report.s_d is None  # p0 = 1
        assert report.paradox is False


class TestInvariants:
    @given(tables(), st.integers(min_value=1, max_value=9))
    def test_scale_invariance(self, table, m):
        scaled = ContingencyTable(m * table.a, m * table.b, m * table.c, m * table.d)
        assert observed_agreement(scaled) == observed_agreement(table)
        assert chance_agreement(scaled) == chance_agreement(table)
        assert cohen_kappa(scaled) == cohen_kappa(table)
        assert asymmetry(scaled) == asymmetry(table)

    @given(tables())
    def test_transpose_invariance(self, table):
        swapped = ContingencyTable(table.a, table.c, table.b, table.d)
        assert observed_agreement(swapped) == observed_agreement(table)
        assert chance_agreement(swapped) == chance_agreement(table)
        assert cohen_kappa(swapped) == cohen_kappa(table)
        s_d, _, _, _ = asymmetry(table)
        s_d_swapped, _, _, _ = asymmetry(swapped)
        if s_d is not None:
            assert s_d_swapped == -s_d

    @given(tables())
    def test_category_swap_invariance(self, table):
        swapped = ContingencyTable(table.d, table.c, table.b, table.a)
        assert cohen_kappa(swapped) == cohen_kappa(table)
        s_d, s_a, p_pp, p_mm = asymmetry(table)
        _, s_a_swapped, p_pp_swapped, p_mm_swapped = asymmetry(swapped)
        if s_a is not None:
            assert s_a_swapped == -s_a
        assert (p_pp_swapped, p_mm_swapped) == (p_mm, p_pp)

    @given(tables())
    def test_defined_kappa_sits_within_its_bounds(self, table):
        k = cohen_kappa(table)
        if k is None:
            return
        k_max, k_min, k_nor = kappa_bounds(observed_agreement(table))
        assert k_min <= k <= k_max
        assert k_nor == 2 * observed_agreement(table) - 1

    def test_bounds_oracle_exhaustive_small_tables(self):
        # brute-force check over every table with n <= 8
        for a, b, c, d in product(range(9), repeat=4):
            if not 1 <= a + b + c + d <= 8:
                continue
            table = ContingencyTable(a, b, c, d)
            k = cohen_kappa(table)
            if k is None:
                continue
            k_max, k_min, _ = kappa_bounds(observed_agreement(table))
            assert k_min <= k <= k_max, table.cells()

    @given(tables())
    def test_report_agrees_with_parts(self, table):
        report = agreement_report(table)
        assert report.p0 == observed_agreement(table)
        assert report.pc == chance_agreement(table)
        assert report.k == cohen_kappa(table)
        assert (report.s_d, report.s_a, report.p_pp, report.p_mm) == asymmetry(table)


class TestFormatHalfUp:
    @pytest.mark.parametrize(
        "value,expected",
        [
            (Fraction(1, 8), "0.13"),  # .125 rounds up
            (Fraction(-1, 8), "-0.13"),  # away from zero
            (Fraction(1, 200), "0.01"),  # .005 rounds up
            (Fraction(499, 100000), "0.00"),
            (Fraction(7, 10), "0.70"),
            (Fraction(1), "1.00"),
            (Fraction(0), "0.00"),
            (Fraction(-1, 14), "-0.07"),
            (None, "undef"),
        ],
    )
    def test_rounding(self, value, expected):
        assert format_half_up(value) == expected

    def test_places(self):
        assert format_half_up(Fraction(2665, 10000), places=4) == "0.2665"
        assert format_half_up(Fraction(1, 3), places=0) == "0"
