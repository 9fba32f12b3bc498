"""Exterior algebra over a coframed context.

A CoframedContext is an ordered list of 1-form generators together with two
derivation rule tables: d of each generator, and d of each function symbol
that may appear in coefficients.  Forms are sparse maps from strictly
increasing generator index tuples to scalars.  Everything is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .scalar import Scalar, solve_linear


class ContextMismatch(Exception):
    """Operands built over different coframed contexts."""


class MissingRule(Exception):
    """No derivation rule for a generator or symbol that was differentiated."""

    def __init__(self, name: str):
        super().__init__(f"no derivation rule for {name!r}")
        self.name = name


class DependentGenerators(Exception):
    """reduce_mod was given 1-forms that are linearly dependent."""


@dataclass(frozen=True)
class Generator:
    name: str
    index: int


class Form:
    """Exterior form: sparse {strictly increasing index tuple -> Scalar}."""

    __slots__ = ("ctx", "terms")

    def __init__(self, ctx: "CoframedContext", terms: Mapping[tuple, Scalar]):
        self.ctx = ctx
        self.terms = {i: c for i, c in terms.items() if not c.is_zero()}

    # ---- basics ---------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        degs = {len(i) for i in self.terms}
        if not degs:
            return 0
        if len(degs) > 1:
            raise ValueError("mixed-degree form has no single degree")
        return degs.pop()

    def _check(self, o: "Form"):
        if self.ctx is not o.ctx:
            raise ContextMismatch(
                f"forms over different contexts ({self.ctx.label} vs {o.ctx.label})"
            )

    def __add__(self, o: "Form") -> "Form":
        self._check(o)
        t = dict(self.terms)
        for i, c in o.terms.items():
            s = t.get(i)
            t[i] = c if s is None else s + c
        return Form(self.ctx, t)

    def __neg__(self) -> "Form":
        return Form(self.ctx, {i: -c for i, c in self.terms.items()})

    def __sub__(self, o: "Form") -> "Form":
        return self + (-o)

    def scale(self, c: Scalar) -> "Form":
        if c.is_zero():
            return Form(self.ctx, {})
        return Form(self.ctx, {i: k * c for i, k in self.terms.items()})

    def __eq__(self, o) -> bool:
        if not isinstance(o, Form):
            return NotImplemented
        if self.ctx is not o.ctx:
            return False
        return (self - o).is_zero()

    def __hash__(self):
        return hash((id(self.ctx), frozenset(self.terms)))

    # ---- multiplication ---------------------------------------------------
    def wedge(self, o: "Form") -> "Form":
        self._check(o)
        out: dict = {}
        for i1, c1 in self.terms.items():
            for i2, c2 in o.terms.items():
                r = _sorted_concat(i1, i2)
                if r is None:
                    continue
                idx, sign = r
                c = c1 * c2
                if sign < 0:
                    c = -c
                s = out.get(idx)
                out[idx] = c if s is None else s + c
        return Form(self.ctx, out)

    def __xor__(self, o: "Form") -> "Form":  # f ^ g sugar in tests/demos
        return self.wedge(o)

    # ---- differentiation ---------------------------------------------------
    def d(self) -> "Form":
        ctx = self.ctx
        out = Form(ctx, {})
        for idx, c in self.terms.items():
            # d(coefficient) ∧ monomial
            dc = ctx.d_scalar(c)
            if not dc.is_zero():
                out = out + dc.wedge(Form(ctx, {idx: Scalar.one()}))
            # Leibniz over the generators of the monomial
            for pos, gi in enumerate(idx):
                rule = ctx.d_rule(ctx.generators[gi].name)
                rest = idx[:pos] + idx[pos + 1 :]
                sign = -1 if pos % 2 else 1
                cc = c if sign > 0 else -c
                # rule ∧ (rest), with rule sitting at position pos
                left = Form(ctx, {idx[:pos]: cc})
                right = Form(ctx, {idx[pos + 1 :]: Scalar.one()})
                out = out + left.wedge(rule).wedge(right)
        return out

    # ---- access -------------------------------------------------------------
    def coefficient(self, names: Sequence[str]) -> Scalar:
        """Coefficient of the wedge of the named generators, in given order.

        The lookup is sign-adjusted: asking for an unordered tuple returns
        the stored coefficient times the permutation sign.
        """
        idx = tuple(self.ctx.index_of(n) for n in names)
        r = _sorted_concat(idx[:1], idx[1:]) if len(idx) > 1 else (idx, 1)
        if r is None:
            return Scalar.zero()
        key, sign = r
        c = self.terms.get(key, Scalar.zero())
        return c if sign > 0 else -c

    def substitute_scalars(self, bindings: Mapping[str, Scalar]) -> "Form":
        return Form(
            self.ctx, {i: c.substitute(bindings) for i, c in self.terms.items()}
        )

    def generators_present(self) -> set:
        out: set = set()
        for i in self.terms:
            out.update(i)
        return out

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for idx in sorted(self.terms):
            c = self.terms[idx]
            mono = "^".join(self.ctx.generators[i].name for i in idx) or "1"
            cs = str(c)
            if any(ch in cs for ch in "+-") and not (
                cs.startswith("-") and not any(ch in cs[1:] for ch in "+-")
            ):
                cs = f"({cs})"
            parts.append(f"{cs}*{mono}" if cs not in ("1",) else mono)
        return " + ".join(parts)

    def __repr__(self):
        return f"Form({self})"


def _sorted_concat(i1: tuple, i2: tuple) -> tuple[tuple, int] | None:
    """Concatenate two strictly increasing tuples, sorting with sign."""
    if not i2:
        return i1, 1
    if not i1:
        return i2, 1
    merged = list(i1)
    sign = 1
    for j in i2:
        if j in merged:
            return None
        pos = len(merged)
        while pos > 0 and merged[pos - 1] > j:
            pos -= 1
        sign *= -1 if (len(merged) - pos) % 2 else 1
        merged.insert(pos, j)
    return tuple(merged), sign


@dataclass
class DerivationRules:
    d_of_generator: dict
    d_of_symbol: dict = field(default_factory=dict)


class CoframedContext:
    """Ordered generators plus derivation rules; owner of all Forms."""

    def __init__(self, names: Sequence[str], label: str = "ctx"):
        if len(set(names)) != len(names):
            raise ValueError("duplicate generator names")
        self.label = label
        self.generators = [Generator(n, i) for i, n in enumerate(names)]
        self._index = {n: i for i, n in enumerate(names)}
        self.rules = DerivationRules({}, {})

    # ---- structure -----------------------------------------------------
    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"{name!r} is not a generator of {self.label}") from None

    def names(self) -> list[str]:
        return [g.name for g in self.generators]

    def set_rule(self, name: str, form: "Form"):
        self.index_of(name)
        self.rules.d_of_generator[name] = form

    def set_symbol_rule(self, sym: str, form: "Form"):
        self.rules.d_of_symbol[sym] = form

    def d_rule(self, name: str) -> "Form":
        r = self.rules.d_of_generator.get(name)
        if r is None:
            raise MissingRule(name)
        return r

    def d_scalar(self, c: Scalar) -> "Form":
        out = self.zero()
        for sym in sorted(c.symbols()):
            p = c.partial(sym)
            if p.is_zero():
                continue
            rule = self.rules.d_of_symbol.get(sym)
            if rule is None:
                raise MissingRule(sym)
            out = out + rule.scale(p)
        return out

    # ---- form constructors ----------------------------------------------
    def zero(self) -> Form:
        return Form(self, {})

    def gen(self, name: str) -> Form:
        return Form(self, {(self.index_of(name),): Scalar.one()})

    def form(self, terms: Mapping[Sequence[str], object]) -> Form:
        out = self.zero()
        for names, c in terms.items():
            if isinstance(names, str):
                names = (names,)
            if not isinstance(c, Scalar):
                c = Scalar.parse(c) if isinstance(c, str) else Scalar.rational(c)
            f = Form(self, {(): c})
            for n in names:
                f = f.wedge(self.gen(n))
            out = out + f
        return out

    def scalar_form(self, c: Scalar) -> Form:
        return Form(self, {(): c})

    # ---- integrability --------------------------------------------------
    def check_context(self) -> dict:
        """d² residual of every generator; empty dict means flat/consistent."""
        out = {}
        for g in self.generators:
            rule = self.rules.d_of_generator.get(g.name)
            if rule is None:
                raise MissingRule(g.name)
            r = rule.d()
            if not r.is_zero():
                out[g.name] = r
        return out

    # ---- substitution -----------------------------------------------------
    def substitute_generator(self, f: Form, name: str, replacement: Form) -> Form:
        """Rewrite every occurrence of the named generator by a 1-form."""
        k = self.index_of(name)
        out_terms: dict = {}
        extra = self.zero()
        for idx, c in f.terms.items():
            if k not in idx:
                s = out_terms.get(idx)
                out_terms[idx] = c if s is None else s + c
                continue
            pos = idx.index(k)
            # prefix ∧ replacement ∧ suffix sits exactly where the generator was
            left = Form(self, {idx[:pos]: c})
            right = Form(self, {idx[pos + 1 :]: Scalar.one()})
            extra = extra + left.wedge(replacement).wedge(right)
        return Form(self, out_terms) + extra


@dataclass
class ReduceResult:
    normal_form: Form
    multipliers: list  # list of (input generator 1-form, multiplier Form)
    pivots: list       # list of (generator index, reduced 1-form)


def reduce_mod(f: Form, ideal_gens: Sequence[Form]) -> ReduceResult:
    """Normal form of f modulo the algebraic ideal of the given 1-forms.

    The 1-forms are completed to a coframe by pivoting each on its highest
    present generator (deterministic; raises DependentGenerators if they are
    not independent).  The normal form contains no pivot generator, and
    f = normal_form + sum(g_i ∧ m_i) with the returned multipliers.
    """
    if not ideal_gens:
        return ReduceResult(f, [], [])
    ctx = f.ctx
    gens = [g for g in ideal_gens]
    for g in gens:
        if g.ctx is not ctx:
            raise ContextMismatch("ideal generator over a different context")
        if g.degree() not in (1,):
            raise ValueError("reduce_mod expects 1-form ideal generators")

    n = len(gens)
    # row-reduce, pivoting on the highest-index generator present
    work = list(gens)
    trans = [[Scalar.one() if i == j else Scalar.zero() for j in range(n)] for i in range(n)]
    pivots: list[tuple[int, int]] = []  # (row, generator index)
    used: set = set()
    for i in range(n):
        g = work[i]
        cand = [j for j in g.generators_present() if j not in used]
        if not cand:
            raise DependentGenerators(f"generator {i} reduces to zero")
        p = max(cand)
        c = g.terms[(p,)]
        inv = c.inverse()
        work[i] = g.scale(inv)
        trans[i] = [x * inv for x in trans[i]]
        for j in range(n):
            if j != i:
                cj = work[j].terms.get((p,), Scalar.zero())
                if not cj.is_zero():
                    work[j] = work[j] - work[i].scale(cj)
                    trans[j] = [trans[j][k] - cj * trans[i][k] for k in range(n)]
        pivots.append((i, p))
        used.add(p)

    # replacement: pivot generator ≡ pivot − reduced gen  (mod ideal)
    out = f
    for (i, p) in pivots:
        repl = ctx.gen(ctx.generators[p].name) - work[i]
        out = ctx.substitute_generator(out, ctx.generators[p].name, repl)

    # recover multipliers of the REDUCED generators, then translate back
    delta = f - out
    mults_reduced = [ctx.zero() for _ in range(n)]
    for (i, p) in pivots:
        coef = ctx.zero()
        for idx, c in delta.terms.items():
            if p not in idx:
                continue
            pos = idx.index(p)
            rest = idx[:pos] + idx[pos + 1 :]
            coef = coef + Form(ctx, {rest: c if pos % 2 == 0 else -c})
        mults_reduced[i] = coef
        delta = delta - work[i].wedge(coef)
    if not delta.is_zero():
        raise AssertionError("multiplier recovery failed")

    # reduced_i = Σ_j trans[i][j] · gens_j  ⇒  Σ_i reduced_i∧μ_i = Σ_j gens_j∧(Σ_i trans[i][j]·μ_i)
    multipliers = []
    for j in range(n):
        mj = ctx.zero()
        for i in range(n):
            if not trans[i][j].is_zero():
                mj = mj + mults_reduced[i].scale(trans[i][j])
        multipliers.append((gens[j], mj))

    return ReduceResult(out, multipliers, [(p, work[i]) for (i, p) in pivots])


def eliminate(
    ctx: CoframedContext,
    replacements: Mapping[str, Form],
    label: str | None = None,
) -> tuple[CoframedContext, Callable[[Form], Form]]:
    """Quotient context with some generators rewritten as 1-forms in the rest.

    Replacement forms must not mention any eliminated generator.  Returns the
    new context and a transfer map old-Form -> new-Form; derivation rules of
    kept generators and of symbols are transferred automatically.
    """
    dropped = set(replacements)
    for name, r in replacements.items():
        bad = {ctx.generators[i].name for i in r.generators_present()} & dropped
        if bad:
            raise ValueError(f"replacement for {name} mentions eliminated {bad}")
    keep = [g.name for g in ctx.generators if g.name not in dropped]
    new = CoframedContext(keep, label or f"{ctx.label}/reduced")

    def transfer(f: Form) -> Form:
        g = f
        for name, r in replacements.items():
            g = ctx.substitute_generator(g, name, r)
        terms = {}
        for idx, c in g.terms.items():
            nidx = tuple(new.index_of(ctx.generators[i].name) for i in idx)
            # index order is preserved (subsequence of an ordered list)
            terms[nidx] = terms.get(nidx, Scalar.zero()) + c
        return Form(new, terms)

    for name in keep:
        rule = ctx.rules.d_of_generator.get(name)
        if rule is not None:
            new.set_rule(name, transfer(rule))
    for sym, rule in ctx.rules.d_of_symbol.items():
        new.set_symbol_rule(sym, transfer(rule))
    return new, transfer


def extend(
    ctx: CoframedContext,
    new_names: Sequence[str],
    label: str | None = None,
) -> tuple[CoframedContext, Callable[[Form], Form]]:
    """Context with extra generators appended; old forms transfer unchanged."""
    new = CoframedContext(ctx.names() + list(new_names), label or ctx.label)

    def transfer(f: Form) -> Form:
        return Form(new, dict(f.terms))

    for name, rule in ctx.rules.d_of_generator.items():
        new.set_rule(name, transfer(rule))
    for sym, rule in ctx.rules.d_of_symbol.items():
        new.set_symbol_rule(sym, transfer(rule))
    return new, transfer
