import numpy as np
import pytest

from xrfquant.core import TARGET_ELEMENTS
from xrfquant.transitions import (
    Transition,
    TransitionParseError,
    TransitionTable,
    load_bundled_table,
    load_transition_table,
    transitions_for,
)

HEADER = "element,kind,energy_kev,probability\n"


def write(tmp_path, body, name="t.csv"):
    p = tmp_path / name
    p.write_text(HEADER + body, encoding="utf-8")
    return p


def test_single_row_echo(tmp_path):
    table = load_transition_table(write(tmp_path, "Fe,K,6.4039,0.58\n"))
    (t,) = table.get("Fe")
    assert t == Transition("Fe", "K", 6.4039, 0.58)


def test_empty_body_is_error(tmp_path):
    with pytest.raises(TransitionParseError, match="no transitions"):
        load_transition_table(write(tmp_path, ""))


def test_negative_probability_names_line(tmp_path):
    with pytest.raises(TransitionParseError, match="line 3"):
        load_transition_table(write(tmp_path, "Fe,K,6.4,0.5\nFe,K,7.0,-1\n"))


def test_bad_energy_names_line(tmp_path):
    with pytest.raises(TransitionParseError, match="line 2"):
        load_transition_table(write(tmp_path, "Fe,K,abc,0.5\n"))


def test_unknown_element_rejected(tmp_path):
    with pytest.raises(TransitionParseError, match="Xq"):
        load_transition_table(write(tmp_path, "Xq,K,6.4,0.5\n"))


def test_bad_kind_rejected(tmp_path):
    with pytest.raises(TransitionParseError, match="line 2"):
        load_transition_table(write(tmp_path, "Fe,M,6.4,0.5\n"))


def test_comments_and_blank_lines_ok(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("# top comment\n\n" + HEADER + "# mid\nFe,K,6.4,0.5\n")
    assert len(load_transition_table(p)) == 1


def test_missing_header_is_error(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("Fe,K,6.4,0.5\n")
    with pytest.raises(TransitionParseError, match="header"):
        load_transition_table(p)


def test_load_is_deterministic(tmp_path):
    p = write(tmp_path, "Fe,K,7.058,0.17\nFe,K,6.404,1.0\nCu,K,8.048,1.0\n")
    t1 = load_transition_table(p)
    t2 = load_transition_table(p)
    assert t1.get("Fe") == t2.get("Fe")
    assert [t.energy_kev for t in t1.get("Fe")] == [6.404, 7.058]


def test_non_registry_elements_retained(tmp_path):
    table = load_transition_table(write(tmp_path, "Si,K,1.74,1.0\n"))
    assert "Si" in table
    assert len(table.get("Si")) == 1


def test_registry_elements_always_present(tmp_path):
    table = load_transition_table(write(tmp_path, "Fe,K,6.4,0.5\n"))
    assert table.get("Li") == ()
    assert table.get("U") == ()


def test_window_full_and_empty():
    table = load_bundled_table()
    full = transitions_for(table, "Fe")
    assert len(full) == 3
    assert transitions_for(table, "Fe", (100.0, 200.0)) == []
    with pytest.raises(ValueError):
        transitions_for(table, "Fe", (5.0, 1.0))


def test_window_matches_linear_scan():
    table = load_bundled_table()
    rng = np.random.default_rng(3)
    for _ in range(50):
        el = str(rng.choice(TARGET_ELEMENTS))
        lo = float(rng.uniform(0, 40))
        hi = lo + float(rng.uniform(0, 40))
        expect = [t for t in table.get(el) if lo <= t.energy_kev <= hi]
        assert transitions_for(table, el, (lo, hi)) == expect


def test_unknown_symbol_lookup_error():
    table = load_bundled_table()
    with pytest.raises(LookupError):
        transitions_for(table, "Xe")


def test_bundled_table_coverage():
    table = load_bundled_table()
    # Li and Be have no tabulated lines; everything else in the registry does
    empty = [el for el in TARGET_ELEMENTS if not table.get(el)]
    assert empty == ["Be", "Li"]
    for extra in ("Si", "Cl", "Ar"):
        assert len(table.get(extra)) > 0
    for el in TARGET_ELEMENTS:
        energies = [t.energy_kev for t in table.get(el)]
        assert energies == sorted(energies)


def test_transition_validation():
    with pytest.raises(ValueError):
        Transition("Fe", "K", -1.0, 0.5)
    with pytest.raises(ValueError):
        Transition("Fe", "K", 6.4, 0.0)
    with pytest.raises(ValueError):
        Transition("Fe", "Q", 6.4, 0.5)


def test_table_len_and_elements():
    table = TransitionTable([Transition("Fe", "K", 6.4, 1.0)])
    assert len(table) == 1
    assert "Fe" in table.elements()
