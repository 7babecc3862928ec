"""Tests for text formatting and DOT rendering."""

from fractions import Fraction

from services.efsm import Fsm
from services.metrics import Score
from utils.dot import render_dot
from utils.formatters import format_fraction, format_score, format_seconds


class TestFormatters:

    def test_fraction(self):
        assert format_fraction(Fraction(7, 8)) == "0.8750"
        assert format_fraction(None) == "n/a"

    def test_score_line(self):
        line = format_score(Score(Fraction(1, 2), Fraction(1), Fraction(2, 3)))
        assert line == "precision=0.5000 recall=1.0000 f1=0.6667 acc=n/a"

    def test_seconds(self):
        assert format_seconds(0.25) == "250 ms"
        assert format_seconds(3.5) == "3.50 s"


class TestDot:

    def test_fsm_uses_labels_and_marks_the_initial_state(self):
        text = render_dot(Fsm((0, 1), 0, ((0, "open", 1), (1, "close", 0)), labels={0: "idle"}))
        assert text.startswith("digraph fsm")
        assert "idle" in text
        assert "s1" in text
        assert "doublecircle" in text
        assert "open" in text and "close" in text

    def test_output_is_stable(self):
        fsm = Fsm((0, 1), 0, ((0, "a", 1),))
        assert render_dot(fsm) == render_dot(fsm)
