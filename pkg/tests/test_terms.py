import pytest

from inflpanel.panel import PanelError, lag
from inflpanel.terms import Term, model_frame, parse_terms


@pytest.mark.parametrize("text, factors, order", [
    ("x", ("x",), 0),
    ("L.x", ("x",), 1),
    ("L3.x", ("x",), 3),
    ("L.x:z", ("x", "z"), 1),
    ("x:z", ("x", "z"), 0),
])
def test_parse(text, factors, order):
    term = Term.parse(text)
    assert (term.name, term.factors, term.lag) == (text, factors, order)


@pytest.mark.parametrize("bad", ["", "x::z", "a b", "L.x:"])
def test_parse_rejects(bad):
    with pytest.raises(PanelError):
        Term.parse(bad)


def test_lag_applies_to_whole_product(toy):
    term = Term.parse("L.x:z")
    expected = lag(toy.with_columns(p=toy.series("x") * toy.series("z")), "p")
    got = term.evaluate(toy)
    assert got.dropna().equals(expected.dropna().rename(got.name))


def test_level_at_lag_uses_unlagged_product(toy):
    term = Term.parse("L.x")
    two = term.level_at_lag(toy, 2)
    assert two.loc[("a", 2015)] == toy.series("x").loc[("a", 2013)]


def test_parse_terms_duplicates():
    with pytest.raises(PanelError):
        parse_terms(["x", "x"])


def test_model_frame_columns(toy):
    frame = model_frame(toy, "x", parse_terms(["L.x", "z"]))
    assert list(frame.columns) == ["x", "L.x", "z"]
    assert len(frame) == len(toy)
