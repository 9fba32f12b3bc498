"""Form algebra: wedge/d axioms, context checking, ideal reduction."""

import pytest
from hypothesis import given, settings, strategies as st

from eds235.exterior import (
    CoframedContext,
    ContextMismatch,
    DependentGenerators,
    Form,
    MissingRule,
    eliminate,
    extend,
    reduce_mod,
)
from eds235.scalar import Scalar


def heisenberg():
    """Toy flat context: dc = a∧b, symbols x,y with dx = a, dy = b."""
    ctx = CoframedContext(["a", "b", "c"], label="heis")
    ctx.set_rule("a", ctx.zero())
    ctx.set_rule("b", ctx.zero())
    ctx.set_rule("c", ctx.gen("a").wedge(ctx.gen("b")))
    ctx.set_symbol_rule("x", ctx.gen("a"))
    ctx.set_symbol_rule("y", ctx.gen("b"))
    return ctx


@st.composite
def forms(draw, ctx, degree):
    """Homogeneous form of the given degree with polynomial coefficients."""
    names = ctx.names()
    nterms = draw(st.integers(0, 4))
    f = ctx.zero()
    for _ in range(nterms):
        mono = draw(
            st.lists(st.sampled_from(names), min_size=degree, max_size=degree,
                     unique=True)
        )
        coef = Scalar.rational(draw(st.integers(-6, 6)))
        for s in draw(st.lists(st.sampled_from(["x", "y"]), max_size=2)):
            coef = coef * Scalar.symbol(s)
        f = f + ctx.form({tuple(mono): coef})
    return f


CTX = heisenberg()


@settings(max_examples=50, deadline=None)
@given(forms(CTX, 1), forms(CTX, 1), forms(CTX, 2))
def test_wedge_axioms(a, b, c):
    assert a.wedge(b) == -(b.wedge(a))
    assert a.wedge(b.wedge(c)) == (a.wedge(b)).wedge(c)
    assert a.wedge(b + b) == a.wedge(b) + a.wedge(b)
    assert a.wedge(a).is_zero()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2).flatmap(lambda k: st.tuples(st.just(k), forms(CTX, k))),
       forms(CTX, 2))
def test_leibniz_and_d_squared(ka, b):
    k, a = ka
    lhs = (a.wedge(b)).d()
    sign = -1 if k % 2 else 1
    rhs = a.d().wedge(b) + (a.wedge(b.d())).scale(Scalar.rational(sign))
    assert lhs == rhs
    assert a.d().d().is_zero()
    assert b.d().d().is_zero()


def test_check_context_flat_and_broken():
    ctx = heisenberg()
    assert ctx.check_context() == {}
    # an extra generator whose rule is not closed: d(e) = y·a∧c with dy = b
    big, up = extend(ctx, ["e"])
    big.set_symbol_rule("y", big.gen("b"))
    big.set_rule(
        "e", big.gen("a").wedge(big.gen("c")).scale(Scalar.symbol("y"))
    )
    res = big.check_context()
    assert set(res) == {"e"}
    assert res["e"] == big.form({("a", "b", "c"): -1})


def test_missing_rule_names_offender():
    ctx = CoframedContext(["a", "b"])
    ctx.set_rule("a", ctx.zero())
    with pytest.raises(MissingRule) as ei:
        ctx.gen("b").d()
    assert ei.value.name == "b"
    f = ctx.scalar_form(Scalar.symbol("q"))
    with pytest.raises(MissingRule) as ei2:
        f.d()
    assert ei2.value.name == "q"


def test_context_mismatch():
    c1, c2 = heisenberg(), heisenberg()
    with pytest.raises(ContextMismatch):
        c1.gen("a").wedge(c2.gen("b"))
    with pytest.raises(ContextMismatch):
        c1.gen("a") + c2.gen("a")


def test_coefficient_sign_adjusted():
    f = CTX.form({("a", "b"): 2, ("b", "c"): 5})
    assert f.coefficient(["a", "b"]) == Scalar.rational(2)
    assert f.coefficient(["b", "a"]) == Scalar.rational(-2)
    assert f.coefficient(["c", "b"]) == Scalar.rational(-5)
    assert f.coefficient(["a", "c"]).is_zero()


def test_substitute_generator():
    # c ↦ x·a + b inside a∧c + c∧b
    f = CTX.form({("a", "c"): 1, ("b", "c"): 3})
    repl = CTX.form({("a",): Scalar.symbol("x"), ("b",): 1})
    got = CTX.substitute_generator(f, "c", repl)
    want = CTX.form({("a", "b"): 1}) + CTX.form({("a", "b"): -3}).scale(
        Scalar.symbol("x")
    )
    assert got == want


def test_reduce_mod_normal_form_and_multipliers():
    ctx = heisenberg()
    # ideal generated by (c + x·a) and (b − a)
    g1 = ctx.form({("c",): 1, ("a",): Scalar.symbol("x")})
    g2 = ctx.form({("b",): 1, ("a",): -1})
    f = ctx.form({("a", "b"): 1, ("b", "c"): 1, ("a",): 5})
    r = reduce_mod(f, [g1, g2])
    # pivots are c (for g1) and b (for g2): nothing with b or c survives
    assert r.normal_form.generators_present() <= {ctx.index_of("a")}
    recomposed = r.normal_form
    for g, m in r.multipliers:
        recomposed = recomposed + g.wedge(m)
    assert recomposed == f
    # idempotence
    again = reduce_mod(r.normal_form, [g1, g2])
    assert again.normal_form == r.normal_form


def test_reduce_mod_dependent_generators():
    ctx = heisenberg()
    g1 = ctx.form({("a",): 1, ("b",): 2})
    g2 = ctx.form({("a",): 2, ("b",): 4})
    with pytest.raises(DependentGenerators):
        reduce_mod(ctx.gen("c"), [g1, g2])


def test_reduce_mod_on_higher_degree():
    ctx = heisenberg()
    g = ctx.form({("c",): 1, ("a",): -2})  # c ≡ 2a mod ideal
    f = ctx.form({("a", "b", "c"): 7, ("b", "c"): 1})
    r = reduce_mod(f, [g])
    assert r.normal_form == ctx.form({("a", "b"): -2})


def test_eliminate_and_extend():
    ctx = heisenberg()
    new, tr = eliminate(ctx, {"c": ctx.form({("a",): 2, ("b",): -1})})
    assert new.names() == ["a", "b"]
    f = ctx.form({("b", "c"): 1})
    assert tr(f) == new.form({("a", "b"): -2})
    # transferred rules keep d consistent
    assert tr(ctx.gen("a").d()) == new.gen("a").d()

    big, up = extend(ctx, ["w"])
    assert big.names() == ["a", "b", "c", "w"]
    assert up(ctx.gen("c")).terms == big.gen("c").terms
    big.set_rule("w", up(ctx.gen("a").wedge(ctx.gen("b"))))
    assert big.gen("w").d() == up(ctx.gen("c")).d()
