import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarlab import magma as M
from polarlab.errors import NotUniformityPreserving, ParseError, SizeCapExceeded


@st.composite
def up_ops(draw, sizes=(2, 3, 4)):
    n = draw(st.sampled_from(sizes))
    cols = [draw(st.permutations(range(n))) for _ in range(n)]
    return M.CayleyTable.from_array(np.array(cols).T)


@st.composite
def quasigroups(draw, sizes=(2, 3, 4)):
    n = draw(st.sampled_from(sizes))
    rows = draw(st.permutations(range(n)))
    cols = draw(st.permutations(range(n)))
    # isotope of addition mod n is a Latin square
    return M.CayleyTable.from_array(np.array([[rows[(cols[a] + b) % n] for b in range(n)]
                                              for a in range(n)]))


def test_parse_xor():
    assert M.parse_op("2\n0 1\n1 0\n") == M.xor()


def test_parse_zero_exponent_table():
    op = M.parse_op("4\n3 3 3 3\n0 1 0 0\n1 0 1 1\n2 2 2 2\n")
    assert op == M.ZERO_EXPONENT_TABLE


def test_parse_comments_and_blank_lines():
    assert M.parse_op("# xor\n2\n\n0 1\n  # second row\n1 0\n") == M.xor()


@pytest.mark.parametrize("text", [
    "2\n0 2\n1 0\n",
    "2\n0 1\n",
    "2\n0 1 1\n1 0\n",
    "x\n0 1\n1 0\n",
    "",
    "2\n0 a\n1 0\n",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        M.parse_op(text)


def test_parse_size_cap():
    n = 11
    text = f"{n}\n" + "\n".join(" ".join(str((a + b) % n) for b in range(n)) for a in range(n))
    with pytest.raises(SizeCapExceeded):
        M.parse_op(text)


def test_round_trip_text():
    op = M.ZERO_EXPONENT_TABLE
    assert M.parse_op(op.to_text()) == op


def test_uniformity_preserving_examples():
    assert M.is_uniformity_preserving(M.xor())
    assert not M.is_uniformity_preserving(M.constant(2))
    assert M.is_uniformity_preserving(M.ZERO_EXPONENT_TABLE)


def test_inverse_examples():
    assert M.inverse_op(M.xor()) == M.xor()
    assert M.inverse_op(M.add_mod(3)) == M.sub_mod(3)
    with pytest.raises(NotUniformityPreserving):
        M.inverse_op(M.constant(2))


def test_inverse_add_mod3_by_search():
    op = M.add_mod(3)
    inv = M.inverse_op(op)
    for x in range(3):
        for b in range(3):
            assert [a for a in range(3) if op(a, b) == x] == [inv(x, b)]


def test_quasigroup_examples():
    assert M.is_quasigroup(M.add_mod(4))
    assert not M.is_quasigroup(M.ZERO_EXPONENT_TABLE)
    assert not M.is_quasigroup(M.projection(2))


def test_irreducible_examples():
    assert M.invariant_set(M.projection(2)) in ({0}, {1})
    assert M.is_irreducible(M.xor())
    assert M.is_irreducible(M.ZERO_EXPONENT_TABLE)


def test_ergodic_examples():
    assert M.is_ergodic(M.xor())
    assert not M.is_ergodic(M.shift(2))
    assert M.cyclic_classes(M.shift(2)) == [(0,), (1,)]
    assert not M.is_ergodic(M.projection(2))
    assert M.cyclic_classes(M.projection(2)) is None


def test_product_xor_xor_is_klein_group():
    op = M.product_op([M.xor(), M.xor()])
    assert op == M.CayleyTable.from_array([[a ^ b for b in range(4)] for a in range(4)])


def test_product_sizes():
    assert M.product_op([M.xor(), M.add_mod(3)]).size == 6
    with pytest.raises(SizeCapExceeded):
        M.product_op([M.add_mod(5), M.add_mod(4)])


def test_zero_exponent_predicate_examples():
    assert M.zero_exponent_predicate(M.ZERO_EXPONENT_TABLE)
    assert not M.zero_exponent_predicate(M.xor())


def test_classify_xor():
    c = M.classify(M.xor())
    assert (c.uniformity_preserving, c.irreducible, c.ergodic, c.quasigroup,
            c.inverse_strongly_ergodic, c.polarizing, c.zero_exponent_condition) == (
        True, True, True, True, True, True, False)
    assert c.summary_line() == "polarizing: yes; zero-exponent condition: no; quasigroup: yes"


def test_classify_zero_exponent_table():
    c = M.classify(M.ZERO_EXPONENT_TABLE)
    assert c.summary_line() == "polarizing: yes; zero-exponent condition: yes; quasigroup: no"
    assert c.residue_defects == ()


def test_classify_non_polarizing_witnesses():
    c = M.classify(M.shift(2))
    assert not c.polarizing and c.cyclic_partition == ((0,), (1,))
    c = M.classify(M.projection(2))
    assert not c.polarizing and c.invariant_set is not None
    assert "inverse not strongly ergodic" in c.summary_line()


def test_all_up_tables_counts():
    assert sum(1 for _ in M.all_up_tables(2)) == 4
    assert sum(1 for _ in M.all_up_tables(3)) == 216


def test_n2_exhaustive_polarizing_are_quasigroups():
    for op in M.all_tables(2):
        c = M.classify(op)
        if c.polarizing:
            assert c.quasigroup


@given(up_ops())
def test_inverse_round_trip(op):
    inv = M.inverse_op(op)
    assert M.inverse_op(inv) == op
    for x in range(op.size):
        for b in range(op.size):
            assert op(inv(x, b), b) == x


@given(up_ops(sizes=(2, 3)), up_ops(sizes=(2, 3)))
def test_product_preserves_uniformity_and_inverse(a, b):
    p = M.product_op([a, b])
    assert M.is_uniformity_preserving(p)
    assert M.inverse_op(p) == M.product_op([M.inverse_op(a), M.inverse_op(b)])


@given(quasigroups(sizes=(2, 3)), quasigroups(sizes=(2, 3)))
def test_product_preserves_quasigroups(a, b):
    assert M.is_quasigroup(a) and M.is_quasigroup(b)
    assert M.is_quasigroup(M.product_op([a, b]))


@settings(max_examples=30)
@given(quasigroups())
def test_quasigroups_polarize_without_zero_exponent(op):
    c = M.classify(op)
    assert c.polarizing
    assert not c.zero_exponent_condition


@given(up_ops())
def test_invariant_set_is_closed(op):
    a = M.invariant_set(op)
    if a is not None:
        assert 0 < len(a) < op.size
        assert {op(u, b) for u in a for b in range(op.size)} == set(a)


@given(up_ops())
def test_cyclic_classes_advance(op):
    classes = M.cyclic_classes(op)
    if classes is None:
        return
    r = len(classes)
    for i, c in enumerate(classes):
        image = {op(u, b) for u in c for b in range(op.size)}
        assert image == set(classes[(i + 1) % r])
