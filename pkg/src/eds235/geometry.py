"""Homogeneous-model contexts and curvature derivative reconstruction.

The curved structure equations extend the Maurer-Cartan rules of the 7x7
model by curvature 2-forms whose coefficients are 24 named functions.  All
covariant derivative information (the vertical part of d of each curvature
function, the commutation corrections for second derivatives, and the linear
relations among first derivatives) is *derived* here from d^2 = 0 rather
than transcribed: each unknown enters a slot of some d^2 residual linearly
with rational coefficients, so exact linear algebra recovers everything and
flags any transcription error as an inconsistency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

from .exterior import CoframedContext, Form
from .liemodel import g2_model, sp6_model, mc_rules
from .scalar import Scalar, solve_linear


class InconsistentSpec(Exception):
    pass


class Inconsistent(Exception):
    pass


SEMIBASIC = ["th1", "th2", "om0", "om1p", "om2p"]
CONNECTION = ["ga12", "ze1", "ze2", "ga21", "ga01", "ga02", "ga", "gam1", "gam2"]
SLOT_OF = {"th1": "1", "th2": "2", "om0": "0", "om1p": "1p", "om2p": "2p"}
SLOTS = ["1", "2", "0", "1p", "2p"]
SB_OF_SLOT = {v: k for k, v in SLOT_OF.items()}

CURVATURE_SYMBOLS = [
    "A1", "A2", "A3", "A4", "A5",
    "B1", "B2", "B3", "B4",
    "C1", "C2", "C3",
    "D1", "D2", "E",
    "Dt1", "Dt2", "Dt3", "Dt4",
    "Et1", "Et2", "Et3",
    "Ft1", "Ft2",
]


def derivative_symbol(base: str, *slots: str) -> str:
    return "_".join((base,) + slots)


def split_symbol(sym: str) -> tuple[str, tuple]:
    parts = sym.split("_")
    base = parts[0]
    if base not in CURVATURE_SYMBOLS:
        raise KeyError(f"not a curvature symbol family: {sym}")
    return base, tuple(parts[1:])


# --------------------------------------------------------------------------
# curvature 2-forms of the nine connection rows
# --------------------------------------------------------------------------

# Each row maps (semibasic, semibasic) pairs to a linear expression in the
# curvature functions.  Shared shape: the five slots
# (th2,om2p), (th1,om2p)+(th2,om1p), (th1,om1p), (th2,om0), (th1,om0), (th1,th2).
_K_ROWS = {
    "ga12": ("A1", "A2", "A3", "-2*B1", "-2*B2", "C1"),
    "ze1": ("-A2", "-A3", "-A4", "2*B2", "2*B3", "-C2"),
    "ga21": ("-A3", "-A4", "-A5", "2*B3", "2*B4", "-C3"),
    "ga01": ("-B2", "-B3", "-B4", "2*C2", "2*C3", "-D2"),
    "ga02": ("-B1", "-B2", "-B3", "2*C1", "2*C2", "-D1"),
    "ga": ("-C1", "-C2", "-C3", "2*D1", "2*D2", "-E"),
    "gam1": (
        "2/3*D1-Dt2", "1/3*D2-Dt3", "-Dt4",
        "-E+2*Et2", "2*Et3", "-Ft2",
    ),
    "gam2": (
        "-Dt1", "-1/3*D1-Dt2", "-2/3*D2-Dt3",
        "2*Et1", "E+2*Et2", "-Ft1",
    ),
}


def curvature_forms(ctx: CoframedContext) -> dict:
    """The curvature 2-form added to each connection-row structure equation."""
    out = {}
    for row, (c22, cmix, c11, c20, c10, c12) in _K_ROWS.items():
        f = ctx.form(
            {
                ("th2", "om2p"): Scalar.parse(c22),
                ("th1", "om2p"): Scalar.parse(cmix),
                ("th2", "om1p"): Scalar.parse(cmix),
                ("th1", "om1p"): Scalar.parse(c11),
                ("th2", "om0"): Scalar.parse(c20),
                ("th1", "om0"): Scalar.parse(c10),
                ("th1", "th2"): Scalar.parse(c12),
            }
        )
        out[row] = f
    out["ze2"] = out["ze1"].scale(Scalar.rational(-2))
    return out


# --------------------------------------------------------------------------
# connection-matrix blocks of both models
# --------------------------------------------------------------------------

# Convention: d(row) = -sum_col Omega[row,col] ^ col + torsion, with entries
# given as integer-coefficient combinations of connection generators.  The
# same blocks feed the covariant-derivative formulas on the jet space.

M_OMEGA = {
    ("1", "1"): [("3", "ze1"), ("2", "ze2")],
    ("1", "2"): [("1", "ga12")],
    ("2", "1"): [("1", "ga21")],
    ("2", "2"): [("3", "ze1"), ("1", "ze2")],
    ("0", "1"): [("1", "ga01")],
    ("0", "2"): [("1", "ga02")],
    ("0", "0"): [("2", "ze1"), ("1", "ze2")],
    ("1p", "1"): [("1", "ga")],
    ("1p", "0"): [("2", "ga02")],
    ("1p", "1p"): [("1", "ze1"), ("1", "ze2")],
    ("1p", "2p"): [("1", "ga12")],
    ("2p", "2"): [("1", "ga")],
    ("2p", "0"): [("-2", "ga01")],
    ("2p", "1p"): [("1", "ga21")],
    ("2p", "2p"): [("1", "ze1")],
}

M_TORSION = {
    "1": {("om0", "om1p"): "3"},
    "2": {("om0", "om2p"): "3"},
    "0": {("om1p", "om2p"): "2"},
}

AB_KEYS = ["11", "12", "22"]
I_KEYS = ["13", "13p", "23", "23p"]

N_OMEGA_AB = {
    ("11", "11"): [("2", "et1_1")],
    ("11", "12"): [("2", "et1_2")],
    ("12", "11"): [("1", "et2_1")],
    ("12", "12"): [("1", "et1_1"), ("1", "et2_2")],
    ("12", "22"): [("1", "et1_2")],
    ("22", "12"): [("2", "et2_1")],
    ("22", "22"): [("2", "et2_2")],
}

N_OMEGA_I_AB = {
    ("13", "11"): [("1", "et_13p")],
    ("13", "12"): [("1", "et_23p")],
    ("13p", "11"): [("1", "et_13")],
    ("13p", "12"): [("1", "et_23")],
    ("23", "12"): [("1", "et_13p")],
    ("23", "22"): [("1", "et_23p")],
    ("23p", "12"): [("1", "et_13")],
    ("23p", "22"): [("1", "et_23")],
}

N_OMEGA_I_I = {
    ("13", "13"): [("1", "et1_1"), ("1", "et3_3")],
    ("13", "13p"): [("1", "et3_3p")],
    ("13", "23"): [("1", "et1_2")],
    ("13p", "13"): [("1", "et3p_3")],
    ("13p", "13p"): [("1", "et1_1"), ("-1", "et3_3")],
    ("13p", "23p"): [("1", "et1_2")],
    ("23", "13"): [("1", "et2_1")],
    ("23", "23"): [("1", "et2_2"), ("1", "et3_3")],
    ("23", "23p"): [("1", "et3_3p")],
    ("23p", "13p"): [("1", "et2_1")],
    ("23p", "23"): [("1", "et3p_3")],
    ("23p", "23p"): [("1", "et2_2"), ("-1", "et3_3")],
}

N_TORSION = {
    "11": {("vpi13", "vpi13p"): "2"},
    "12": {("vpi13", "vpi23p"): "1", ("vpi23", "vpi13p"): "1"},
    "22": {("vpi23", "vpi23p"): "2"},
}


def omega_entry(ctx: CoframedContext, block: Mapping, row: str, col: str) -> Form:
    f = ctx.zero()
    for c, name in block.get((row, col), ()):
        f = f + ctx.gen(name).scale(Scalar.parse(c))
    return f


def block_row_rule(ctx, row, parts):
    """-sum Omega[row,col] ^ generator(col) over (block, keys, name) parts."""
    f = ctx.zero()
    for block, keys, col_name in parts:
        for col in keys:
            ent = omega_entry(ctx, block, row, col)
            if not ent.is_zero():
                f = f + (ent ^ ctx.gen(col_name(col))).scale(Scalar.rational(-1))
    return f


# --------------------------------------------------------------------------
# derivative tables
# --------------------------------------------------------------------------

@dataclass
class DerivativeTable:
    """d of curvature symbols as coefficient rows over the model coframe.

    rules[sym] maps generator names to coefficients; tails at semibasic
    generators are (possibly rewritten) first/second derivative symbols,
    vertical parts are linear in lower-order symbols.  relations is the
    basis of linear relations among derivative symbols that d^2 = 0 forces;
    rules are already written in terms of the free symbols only.
    """

    rules: dict = field(default_factory=dict)
    relations: list = field(default_factory=list)
    eliminations: dict = field(default_factory=dict)

    def rule_form(self, ctx: CoframedContext, sym: str) -> Form:
        coeffs = self.rules[sym]
        return ctx.form({(g,): c for g, c in coeffs.items() if not c.is_zero()})

    def reduce_scalar(self, s: Scalar) -> Scalar:
        return s.substitute(self.eliminations)

    def to_json(self) -> str:
        payload = {
            "rules": {
                sym: {g: str(c) for g, c in row.items() if not c.is_zero()}
                for sym, row in sorted(self.rules.items())
            },
            "relations": [str(r) for r in self.relations],
            "eliminations": {k: str(v) for k, v in sorted(self.eliminations.items())},
        }
        return json.dumps(payload, indent=1, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "DerivativeTable":
        payload = json.loads(text)
        return DerivativeTable(
            {
                sym: {g: Scalar.parse(c) for g, c in row.items()}
                for sym, row in payload["rules"].items()
            },
            [Scalar.parse(r) for r in payload["relations"]],
            {k: Scalar.parse(v) for k, v in payload["eliminations"].items()},
        )


def _base_context(label="M") -> CoframedContext:
    ctx = CoframedContext(list(SEMIBASIC) + list(CONNECTION), label=label)
    rules = mc_rules(g2_model(), ctx)
    kf = curvature_forms(ctx)
    for name in ctx.names():
        r = rules[name]
        if name in kf:
            r = r + kf[name]
        ctx.set_rule(name, r)
    return ctx


def _tail_rule(ctx: CoframedContext, sym: str, vertical: Mapping[str, Scalar]) -> Form:
    """vertical part + canonical first-derivative tail for a base symbol."""
    coeffs = {}
    for v, c in vertical.items():
        coeffs[(v,)] = c
    for sb in SEMIBASIC:
        coeffs[(sb,)] = Scalar.symbol(derivative_symbol(sym, SLOT_OF[sb]))
    return ctx.form(coeffs)


def _classify(ctx: CoframedContext, idx: tuple) -> tuple:
    names = [ctx.generators[i].name for i in idx]
    conn = [n for n in names if n in CONNECTION]
    sb = [n for n in names if n in SEMIBASIC]
    return tuple(conn), tuple(sb)


# ---- elimination priority for relation pivots -----------------------------

# Symbols named by the staged reduction displays must never be rewritten,
# so relation pivots prefer everything else.
_KEEP = {
    "A3_0", "B3_1p", "B4_1p", "A4_1p",
    "A5_0", "A5_1", "B4_1", "A5_0_1", "A5_0_1p",
}


def _pivot_key(sym: str) -> tuple:
    base, slots = split_symbol(sym)
    keep = sym in _KEEP or not slots
    # eliminate: deeper first, non-kept first, late families first
    return (len(slots), 0 if keep else 1, CURVATURE_SYMBOLS.index(base), slots)


def reduce_relations(relations: Sequence[Scalar]) -> tuple[list, dict]:
    """Gaussian-reduce linear relations; returns (basis, elimination map)."""
    basis: list[Scalar] = []
    elim: dict[str, Scalar] = {}
    for rel in relations:
        r = rel.substitute(elim) if elim else rel
        if r.is_zero():
            continue
        # pick the eliminable symbol with the highest priority
        cands = []
        for sym in sorted(r.symbols()):
            c = r.partial(sym)
            if c.is_constant() and not c.is_zero():
                cands.append((_pivot_key(sym), sym, c))
        if not cands:
            raise Inconsistent(f"relation with no linear pivot: {r}")
        cands.sort(reverse=True)
        _, sym, c = cands[0]
        rest = r.substitute({sym: Scalar.zero()})
        value = -(rest / c)
        # back-substitute into existing eliminations
        elim = {k: v.substitute({sym: value}) for k, v in elim.items()}
        elim[sym] = value
        basis.append(r)
    return basis, elim


@lru_cache(maxsize=1)
def reconstruct_level1() -> DerivativeTable:
    """Solve d^2 = 0 on the curved model for all first-derivative data."""
    ctx = _base_context("M-reconstruct")
    unknown_names = []
    for sym in CURVATURE_SYMBOLS:
        vertical = {}
        for v in CONNECTION:
            u = f"_u_{sym}_{v}"
            unknown_names.append(u)
            vertical[v] = Scalar.symbol(u)
        ctx.set_symbol_rule(sym, _tail_rule(ctx, sym, vertical))

    residuals = {g: ctx.d_rule(g).d() for g in ctx.names()}

    # group the slot equations by connection generator; solve each block
    zero_u = {u: Scalar.zero() for u in unknown_names}
    solution: dict[str, Scalar] = {}
    relations: list[Scalar] = []
    blocks: dict[str, list] = {v: [] for v in CONNECTION}
    for g, res in residuals.items():
        for idx, c in res.terms.items():
            conn, sb = _classify(ctx, idx)
            if len(conn) == 1 and len(sb) == 2:
                blocks[conn[0]].append(c)
            elif len(conn) == 0:
                relations.append(c)
            else:
                # multi-vertical slots carry no unknowns and must vanish
                if not c.substitute(zero_u).is_zero() or any(
                    u in c.symbols() for u in unknown_names
                ):
                    raise Inconsistent(
                        f"unexpected vertical-slot residual in d²({g}): {c}"
                    )

    for v in CONNECTION:
        eqs = blocks[v]
        cols = [f"_u_{sym}_{v}" for sym in CURVATURE_SYMBOLS]
        rows, rhs = [], []
        for c in eqs:
            row = [c.partial(u) for u in cols]
            if any(not x.is_constant() for x in row):
                raise Inconsistent("nonlinear unknown coefficient")
            rows.append(row)
            rhs.append(-c.substitute(zero_u))
        sol = solve_linear(rows, rhs)
        if sol.inconsistent or sol.particular is None:
            raise Inconsistent(f"vertical block {v} unsolvable")
        if sol.nullspace:
            raise Inconsistent(f"vertical block {v} underdetermined")
        for u, val in zip(cols, sol.particular):
            solution[u] = val

    rel_basis, elim = reduce_relations(
        [r.substitute(solution) for r in relations]
    )

    table = DerivativeTable({}, rel_basis, elim)
    for sym in CURVATURE_SYMBOLS:
        row = {}
        for v in CONNECTION:
            val = solution[f"_u_{sym}_{v}"].substitute(elim)
            if not val.is_zero():
                row[v] = val
        for sb in SEMIBASIC:
            t = Scalar.symbol(derivative_symbol(sym, SLOT_OF[sb])).substitute(elim)
            if not t.is_zero():
                row[sb] = t
        table.rules[sym] = row
    _verify_closure(table)
    return table


def _context_with_table(table: DerivativeTable, extra: Mapping[str, Mapping] = (),
                        label: str = "M-ext") -> CoframedContext:
    ctx = _base_context(label)
    for sym, row in table.rules.items():
        ctx.set_symbol_rule(sym, ctx.form({(g,): c for g, c in row.items()}))
    for sym, row in dict(extra).items():
        ctx.set_symbol_rule(sym, ctx.form({(g,): c for g, c in row.items()}))
    return ctx


def _verify_closure(table: DerivativeTable, symbols: Sequence[str] = ()):
    """d² of every generator (and of the given symbols) must vanish.

    Only symbols one level below the table depth can be checked: deeper
    residuals would need derivative rules the table does not carry.
    """
    ctx = _context_with_table(table, label="M-closure-check")
    for g in ctx.names():
        r = ctx.d_rule(g).d()
        if not r.is_zero():
            bad = {idx: str(c) for idx, c in r.terms.items()}
            raise Inconsistent(f"d²({g}) nonzero after reconstruction: {bad}")
    for sym in symbols:
        r = ctx.d_scalar(Scalar.symbol(sym)).d()
        if not r.is_zero():
            bad = {idx: str(c) for idx, c in r.terms.items()}
            raise Inconsistent(f"d²({sym}) nonzero after reconstruction: {bad}")


def free_derivative_symbols(table: DerivativeTable) -> list:
    """Derivative symbols still appearing in rule tails, deepest level last."""
    seen = set()
    for row in table.rules.values():
        for c in row.values():
            for s in c.symbols():
                base, slots = split_symbol(s)
                if slots and s not in table.rules:
                    seen.add(s)
    return sorted(seen, key=lambda s: (len(split_symbol(s)[1]), s))


@lru_cache(maxsize=1)
def reconstruct_level2() -> DerivativeTable:
    """Extend the level-1 table with rules for every free first derivative.

    The level-1 eliminations couple the families, so all free symbols are
    solved together: the mixed connection/semibasic slots of d² of the base
    functions determine the vertical parts (one exactly-determined linear
    block per connection generator), and the pure-semibasic slots yield the
    commutation relations among the second-derivative symbols.
    """
    t1 = reconstruct_level1()
    free = free_derivative_symbols(t1)
    extra: dict = {}
    vert_unknowns: list[str] = []
    for sym in free:
        row: dict = {}
        for v in CONNECTION:
            u = f"_w_{sym}_{v}"
            vert_unknowns.append(u)
            row[v] = Scalar.symbol(u)
        for sb in SEMIBASIC:
            row[sb] = Scalar.symbol(derivative_symbol(sym, SLOT_OF[sb]))
        extra[sym] = row
    ctx = _context_with_table(t1, extra, label="M-level2")

    zero_u = {u: Scalar.zero() for u in vert_unknowns}
    blocks: dict[str, list] = {v: [] for v in CONNECTION}
    relations: list = []
    for base in CURVATURE_SYMBOLS:
        res = ctx.d_scalar(Scalar.symbol(base)).d()
        for idx, c in res.terms.items():
            conn, sb = _classify(ctx, idx)
            if len(conn) == 1 and len(sb) == 1:
                blocks[conn[0]].append(c)
            elif len(conn) == 0:
                relations.append(c)
            else:
                if not c.substitute(zero_u).is_zero() or any(
                    u in c.symbols() for u in vert_unknowns
                ):
                    raise Inconsistent(
                        f"unexpected vertical-slot residual in d²({base}): {c}"
                    )

    solution: dict[str, Scalar] = {}
    for v in CONNECTION:
        cols = [f"_w_{sym}_{v}" for sym in free]
        rows, rhs = [], []
        for c in blocks[v]:
            row = [c.partial(u) for u in cols]
            if any(not x.is_constant() for x in row):
                raise Inconsistent("nonlinear unknown coefficient")
            rows.append(row)
            rhs.append(-c.substitute(zero_u))
        sol = solve_linear(rows, rhs)
        if sol.inconsistent or sol.particular is None:
            raise Inconsistent(f"second-level vertical block {v} unsolvable")
        if sol.nullspace:
            raise Inconsistent(f"second-level vertical block {v} underdetermined")
        for u, val in zip(cols, sol.particular):
            solution[u] = val

    rel_basis, elim = reduce_relations([r.substitute(solution) for r in relations])
    elim = dict(t1.eliminations) | elim

    out = DerivativeTable(dict(t1.rules), list(t1.relations) + rel_basis, elim)
    for sym in free:
        row = {}
        for v in CONNECTION:
            val = solution[f"_w_{sym}_{v}"].substitute(elim)
            if not val.is_zero():
                row[v] = val
        for sb in SEMIBASIC:
            val = Scalar.symbol(derivative_symbol(sym, SLOT_OF[sb])).substitute(elim)
            if not val.is_zero():
                row[sb] = val
        out.rules[sym] = row
    _verify_closure(out, CURVATURE_SYMBOLS)
    return out


def reconstruct_derivatives(
    partial: DerivativeTable | None = None,
    depth: int = 1,
) -> DerivativeTable:
    """Complete derivative table; optional known rows are cross-checked."""
    table = reconstruct_level1() if depth == 1 else reconstruct_level2()
    if partial is not None:
        for sym, row in partial.rules.items():
            got = table.rules.get(sym)
            if got is None:
                raise Inconsistent(f"no reconstructed rule for {sym}")
            keys = set(row) | set(got)
            for k in keys:
                a = row.get(k, Scalar.zero())
                b = got.get(k, Scalar.zero())
                if a != b:
                    raise Inconsistent(
                        f"rule mismatch for {sym} at {k}: given {a}, derived {b}"
                    )
    return table


# --------------------------------------------------------------------------
# curvature specs and public context builders
# --------------------------------------------------------------------------

@dataclass
class CurvatureSpec:
    bindings: dict = field(default_factory=dict)
    relations: list = field(default_factory=list)

    @staticmethod
    def from_json(text: str) -> "CurvatureSpec":
        payload = json.loads(text)
        if not isinstance(payload, dict):
            raise InconsistentSpec("spec must be a JSON object")
        bindings = {
            k: Scalar.parse(v) if isinstance(v, str) else Scalar.rational(v)
            for k, v in payload.get("bindings", {}).items()
        }
        relations = [Scalar.parse(r) for r in payload.get("relations", [])]
        return CurvatureSpec(bindings, relations)

    def validate(self):
        for rel in self.relations:
            v = rel.substitute(self.bindings)
            if v.is_constant() and not v.is_zero():
                raise InconsistentSpec(f"binding violates relation {rel} = 0")


def build_M_context(
    spec: CurvatureSpec | None = None,
    table: DerivativeTable | None = None,
    label: str = "M",
) -> CoframedContext:
    """Curved model context, optionally with curvature values substituted."""
    ctx = _base_context(label)
    if table is not None:
        for sym, row in table.rules.items():
            ctx.set_symbol_rule(sym, table.rule_form(ctx, sym))
    if spec is not None:
        spec.validate()
        b = spec.bindings
        for name in ctx.names():
            ctx.set_rule(name, ctx.d_rule(name).substitute_scalars(b))
        for sym in list(ctx.rules.d_of_symbol):
            if sym in b:
                del ctx.rules.d_of_symbol[sym]
            else:
                ctx.set_symbol_rule(
                    sym, ctx.rules.d_of_symbol[sym].substitute_scalars(b)
                )
    return ctx


def build_N_context(label: str = "N") -> CoframedContext:
    alg = sp6_model()
    ctx = CoframedContext(alg.names, label=label)
    for name, rule in mc_rules(alg, ctx).items():
        ctx.set_rule(name, rule)
    return ctx


def torsion_coefficient(ctx: CoframedContext, gen: str, pair: tuple) -> Scalar:
    """Structure-equation coefficient of a wedge pair, sign-adjusted."""
    return ctx.d_rule(gen).coefficient(list(pair))
