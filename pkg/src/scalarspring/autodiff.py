"""Reverse-mode automatic differentiation over a dynamically recorded tape.

Operations on `Var` values append nodes to a `Tape` as they execute
(operator-overloading style).  `grad` runs a reverse sweep over the recorded
range.  With ``create_graph=True`` the sweep's own arithmetic is executed
through the recorded primitives, so the resulting gradient is itself
differentiable -- that reverse-over-reverse path is what lets a training loss
differentiate through a dynamics function that is already a gradient.

Nodes carry float64 numpy arrays.  The primitive set is deliberately small
and closed under differentiation: elementwise arithmetic, the activations,
2-D matrix products, and the column bookkeeping needed to assemble feature
matrices and batched states.  There is no general broadcasting; shapes must
match exactly, with plain Python/numpy constants allowed on either side of
the elementwise ops.

The derivative of sqrt(|x|) is clamped for |x| < 1e-12 at the value it
attains at 1e-12, and exact zeros hit by the |.| subgradient are counted in
``Tape.kink_hits`` so training can report whether the non-differentiable set
was ever touched.
"""

from __future__ import annotations

import numpy as np

SQRT_ABS_EPS = 1e-12


class RecordingMixError(ValueError):
    """Raised when an operation mixes variables from different tapes."""


class Var:
    """One recorded value: a float64 array plus its position on the tape."""

    __slots__ = ("tape", "index", "value", "parents", "vjp", "ctx")
    __array_ufunc__ = None  # keep numpy from hijacking ndarray <op> Var

    def __repr__(self):
        return f"Var(index={self.index}, value={self.value!r})"

    # arithmetic sugar; the right-hand side may be a Var, ndarray or number
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)


class Tape:
    """Append-only recording of primitive operations."""

    __slots__ = ("nodes", "kink_hits")

    def __init__(self):
        self.nodes: list[Var] = []
        self.kink_hits: int = 0

    def leaf(self, value) -> Var:
        """Record an input value (parameter, state, or constant)."""
        return _record(self, np.asarray(value, dtype=np.float64), (), None, None)

    # constants and leaves differ only in intent; sweeps prune both the same way
    constant = leaf


def _record(tape: Tape, value: np.ndarray, parents, vjp, ctx) -> Var:
    v = Var.__new__(Var)
    v.tape = tape
    v.value = value
    v.parents = parents
    v.vjp = vjp
    v.ctx = ctx
    v.index = len(tape.nodes)
    tape.nodes.append(v)
    return v


def _val(x):
    return x.value if type(x) is Var else x


def _join(a: Var, b: Var) -> Tape:
    if a.tape is not b.tape:
        raise RecordingMixError("operands belong to different recordings")
    return a.tape


def _const(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------------------
# vjp rules.  Signature: rule(ops, adj, needs, node) -> tuple aligned with
# node.parents, None where the adjoint is not needed.  `ops` is either the
# traced namespace (create_graph sweeps) or raw numpy (final sweeps), so one
# rule serves both.
# ---------------------------------------------------------------------------

def _vjp_pass1(ops, adj, needs, node):
    return (adj,)


def _vjp_add2(ops, adj, needs, node):
    return (adj if needs[0] else None, adj if needs[1] else None)


def _vjp_sub2(ops, adj, needs, node):
    return (adj if needs[0] else None, ops.neg(adj) if needs[1] else None)


def _vjp_neg1(ops, adj, needs, node):
    return (ops.neg(adj),)


def _vjp_mul2(ops, adj, needs, node):
    a, b = node.parents
    return (
        ops.mul(adj, b) if needs[0] else None,
        ops.mul(adj, a) if needs[1] else None,
    )


def _vjp_mulc(ops, adj, needs, node):
    return (ops.mul(adj, node.ctx),)


def _vjp_div2(ops, adj, needs, node):
    a, b = node.parents
    da = ops.div(adj, b) if needs[0] else None
    db = ops.neg(ops.mul(adj, ops.div(node, b))) if needs[1] else None
    return (da, db)


def _vjp_divc(ops, adj, needs, node):
    return (ops.div(adj, node.ctx),)


def _vjp_cdiv(ops, adj, needs, node):
    (b,) = node.parents
    return (ops.neg(ops.mul(adj, ops.div(node, b))),)


def _vjp_sqrt(ops, adj, needs, node):
    return (ops.div(ops.mul(adj, 0.5), node),)


def _vjp_absval(ops, adj, needs, node):
    sign, nzero = node.ctx
    if nzero:
        node.tape.kink_hits += nzero
    return (ops.mul(adj, sign),)


def _vjp_sqrt_abs(ops, adj, needs, node):
    (x,) = node.parents
    return (ops.mul(adj, ops.dsqrt_abs(x)),)


def _vjp_dsqrt_abs(ops, adj, needs, node):
    return (ops.mul(adj, node.ctx),)


def _vjp_tanh(ops, adj, needs, node):
    return (ops.mul(adj, ops.sub(1.0, ops.mul(node, node))),)


def _vjp_sigmoid(ops, adj, needs, node):
    return (ops.mul(adj, ops.mul(node, ops.sub(1.0, node))),)


def _vjp_matmul(ops, adj, needs, node):
    a, b = node.parents
    return (
        ops.matmul(adj, ops.transpose(b)) if needs[0] else None,
        ops.matmul(ops.transpose(a), adj) if needs[1] else None,
    )


def _vjp_transpose(ops, adj, needs, node):
    return (ops.transpose(adj),)


def _vjp_affine(ops, adj, needs, node):
    x, w, b = node.parents
    return (
        ops.matmul(adj, ops.transpose(w)) if needs[0] else None,
        ops.matmul(ops.transpose(x), adj) if needs[1] else None,
        ops.colsum(adj) if needs[2] else None,
    )


def _vjp_colsum(ops, adj, needs, node):
    return (ops.broadcast_rows(adj, node.ctx),)


def _vjp_broadcast_rows(ops, adj, needs, node):
    return (ops.colsum(adj),)


def _vjp_rowdot(ops, adj, needs, node):
    a, b = node.parents
    return (
        ops.scale_rows(b, adj) if needs[0] else None,
        ops.scale_rows(a, adj) if needs[1] else None,
    )


def _vjp_scale_rows(ops, adj, needs, node):
    m, c = node.parents
    return (
        ops.scale_rows(adj, c) if needs[0] else None,
        ops.rowdot(adj, m) if needs[1] else None,
    )


def _vjp_sum_all(ops, adj, needs, node):
    return (ops.broadcast_full(adj, node.ctx),)


def _vjp_broadcast_full(ops, adj, needs, node):
    return (ops.sum_all(adj),)


def _vjp_stack_cols(ops, adj, needs, node):
    return tuple(
        ops.take_col(adj, j) if needs[j] else None for j in range(len(node.parents))
    )


def _vjp_take_col(ops, adj, needs, node):
    j, width = node.ctx
    return (ops.put_col(adj, j, width),)


def _vjp_put_col(ops, adj, needs, node):
    j, _width = node.ctx
    return (ops.take_col(adj, j),)


def _vjp_hstack(ops, adj, needs, node):
    offsets = node.ctx
    return tuple(
        ops.cols(adj, offsets[i], offsets[i + 1]) if needs[i] else None
        for i in range(len(node.parents))
    )


def _vjp_cols(ops, adj, needs, node):
    j0, _j1, total = node.ctx
    return (ops.pad_cols(adj, j0, total),)


def _vjp_pad_cols(ops, adj, needs, node):
    j0, width = node.ctx
    return (ops.cols(adj, j0, j0 + width),)


def _vjp_permute_cols(ops, adj, needs, node):
    return (ops.permute_cols(adj, node.ctx),)


def _vjp_select_cols(ops, adj, needs, node):
    idx, total = node.ctx
    return (ops.scatter_cols(adj, idx, total),)


def _vjp_scatter_cols(ops, adj, needs, node):
    idx, _total = node.ctx
    return (ops.select_cols(adj, idx),)


def _vjp_bmm(ops, adj, needs, node):
    a, b = node.parents
    m, n, k = node.ctx
    da = None
    db = None
    if needs[0]:
        da = ops.bmm(adj, ops.permute_cols(b, _tr_perm(n, k)), (m, k, n))
    if needs[1]:
        db = ops.bmm(ops.permute_cols(a, _tr_perm(m, n)), adj, (n, m, k))
    return (da, db)


# ---------------------------------------------------------------------------
# traced primitives
# ---------------------------------------------------------------------------

def add(a, b):
    if type(a) is Var:
        if type(b) is Var:
            return _record(_join(a, b), a.value + b.value, (a, b), _vjp_add2, None)
        return _record(a.tape, a.value + _const(b), (a,), _vjp_pass1, None)
    if type(b) is Var:
        return _record(b.tape, _const(a) + b.value, (b,), _vjp_pass1, None)
    raise TypeError("add requires at least one Var operand")


def sub(a, b):
    if type(a) is Var:
        if type(b) is Var:
            return _record(_join(a, b), a.value - b.value, (a, b), _vjp_sub2, None)
        return _record(a.tape, a.value - _const(b), (a,), _vjp_pass1, None)
    if type(b) is Var:
        return _record(b.tape, _const(a) - b.value, (b,), _vjp_neg1, None)
    raise TypeError("sub requires at least one Var operand")


def mul(a, b):
    if type(a) is Var:
        if type(b) is Var:
            return _record(_join(a, b), a.value * b.value, (a, b), _vjp_mul2, None)
        c = _const(b)
        return _record(a.tape, a.value * c, (a,), _vjp_mulc, c)
    if type(b) is Var:
        c = _const(a)
        return _record(b.tape, c * b.value, (b,), _vjp_mulc, c)
    raise TypeError("mul requires at least one Var operand")


def neg(a):
    return _record(a.tape, -a.value, (a,), _vjp_neg1, None)


def div(a, b):
    if type(a) is Var:
        if type(b) is Var:
            return _record(_join(a, b), a.value / b.value, (a, b), _vjp_div2, None)
        c = _const(b)
        return _record(a.tape, a.value / c, (a,), _vjp_divc, c)
    if type(b) is Var:
        return _record(b.tape, _const(a) / b.value, (b,), _vjp_cdiv, None)
    raise TypeError("div requires at least one Var operand")


def sqrt(a):
    return _record(a.tape, np.sqrt(a.value), (a,), _vjp_sqrt, None)


def abs_val(a):
    x = a.value
    sign = np.sign(x)
    nzero = int(np.count_nonzero(x == 0.0))
    return _record(a.tape, np.abs(x), (a,), _vjp_absval, (sign, nzero))


def sqrt_abs(a):
    return _record(a.tape, np.sqrt(np.abs(a.value)), (a,), _vjp_sqrt_abs, None)


def dsqrt_abs(a):
    """Clamped derivative of sqrt(|x|): sign(x) / (2 sqrt(max(|x|, eps)))."""
    x = _val(a)
    ax = np.abs(x)
    clamped = np.maximum(ax, SQRT_ABS_EPS)
    value = np.sign(x) * (0.5 / np.sqrt(clamped))
    if type(a) is Var:
        nzero = int(np.count_nonzero(x == 0.0))
        if nzero:
            a.tape.kink_hits += nzero
        d2 = np.where(ax > SQRT_ABS_EPS, -0.25 * clamped ** -1.5, 0.0)
        return _record(a.tape, value, (a,), _vjp_dsqrt_abs, d2)
    return value


def tanh(a):
    return _record(a.tape, np.tanh(a.value), (a,), _vjp_tanh, None)


def sigmoid(a):
    x = a.value
    return _record(a.tape, 1.0 / (1.0 + np.exp(-x)), (a,), _vjp_sigmoid, None)


def matmul(a: Var, b: Var):
    return _record(_join(a, b), a.value @ b.value, (a, b), _vjp_matmul, None)


def transpose(a: Var):
    return _record(a.tape, a.value.T, (a,), _vjp_transpose, None)


def affine(x: Var, w: Var, b: Var):
    """x @ w + b for x (B, n), w (n, k), b (k,)."""
    _join(x, w)
    t = _join(x, b)
    return _record(t, x.value @ w.value + b.value, (x, w, b), _vjp_affine, None)


def colsum(x: Var):
    return _record(x.tape, x.value.sum(axis=0), (x,), _vjp_colsum, x.value.shape[0])


def broadcast_rows(v: Var, n: int):
    value = np.broadcast_to(v.value, (n,) + v.value.shape).copy()
    return _record(v.tape, value, (v,), _vjp_broadcast_rows, None)


def rowdot(a: Var, b: Var):
    """Row-wise dot product of two (B, k) arrays, returning (B,)."""
    t = _join(a, b)
    return _record(t, np.einsum("ij,ij->i", a.value, b.value), (a, b), _vjp_rowdot, None)


def scale_rows(m: Var, c: Var):
    """Scale each row of m (B, k) by the matching entry of c (B,)."""
    t = _join(m, c)
    return _record(t, m.value * c.value[:, None], (m, c), _vjp_scale_rows, None)


def sum_all(x: Var):
    return _record(x.tape, np.asarray(x.value.sum()), (x,), _vjp_sum_all, x.value.shape)


def broadcast_full(s: Var, shape: tuple):
    return _record(s.tape, np.full(shape, s.value), (s,), _vjp_broadcast_full, None)


def stack_cols(columns):
    """Stack (B,) vectors as the columns of a (B, k) matrix."""
    t = columns[0].tape
    for c in columns[1:]:
        _join(columns[0], c)
    value = np.stack([c.value for c in columns], axis=1)
    return _record(t, value, tuple(columns), _vjp_stack_cols, None)


def take_col(x: Var, j: int):
    return _record(x.tape, x.value[:, j], (x,), _vjp_take_col, (j, x.value.shape[1]))


def put_col(v: Var, j: int, width: int):
    value = np.zeros((v.value.shape[0], width))
    value[:, j] = v.value
    return _record(v.tape, value, (v,), _vjp_put_col, (j, width))


def hstack(parts):
    """Concatenate (B, k_i) blocks along columns."""
    t = parts[0].tape
    for p in parts[1:]:
        _join(parts[0], p)
    offsets = [0]
    for p in parts:
        offsets.append(offsets[-1] + p.value.shape[1])
    value = np.concatenate([p.value for p in parts], axis=1)
    return _record(t, value, tuple(parts), _vjp_hstack, tuple(offsets))


def cols(x: Var, j0: int, j1: int):
    return _record(
        x.tape, x.value[:, j0:j1], (x,), _vjp_cols, (j0, j1, x.value.shape[1])
    )


def pad_cols(x: Var, j0: int, total: int):
    value = np.zeros((x.value.shape[0], total))
    width = x.value.shape[1]
    value[:, j0 : j0 + width] = x.value
    return _record(x.tape, value, (x,), _vjp_pad_cols, (j0, width))


def permute_cols(x: Var, perm):
    perm = np.asarray(perm, dtype=np.intp)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm), dtype=np.intp)
    return _record(x.tape, x.value[:, perm], (x,), _vjp_permute_cols, inv)


def select_cols(x: Var, idx):
    """Gather duplicate-free columns idx from x (B, total)."""
    idx = np.asarray(idx, dtype=np.intp)
    return _record(
        x.tape, x.value[:, idx], (x,), _vjp_select_cols, (idx, x.value.shape[1])
    )


def scatter_cols(v: Var, idx, total: int):
    """Spread v (B, len(idx)) into a zero (B, total) matrix at columns idx."""
    idx = np.asarray(idx, dtype=np.intp)
    out = np.zeros((v.value.shape[0], total))
    out[:, idx] = v.value
    return _record(v.tape, out, (v,), _vjp_scatter_cols, (idx, total))


_TR_PERM_CACHE: dict = {}


def _tr_perm(m: int, n: int) -> np.ndarray:
    """Column permutation realizing the per-row (m, n) -> (n, m) transpose."""
    key = (m, n)
    perm = _TR_PERM_CACHE.get(key)
    if perm is None:
        perm = np.arange(m * n).reshape(m, n).T.reshape(-1).copy()
        _TR_PERM_CACHE[key] = perm
    return perm


def bmm(a: Var, b: Var, dims: tuple):
    """Per-row matrix product: rows of a as (m, n), rows of b as (n, k).

    a is (B, m*n), b is (B, n*k); the result is (B, m*k).  One node covers a
    whole batched contraction (Gram matrices, coefficient combinations), which
    keeps tapes short.
    """
    m, n, k = dims
    t = _join(a, b)
    batch = a.value.shape[0]
    value = np.matmul(
        a.value.reshape(batch, m, n), b.value.reshape(batch, n, k)
    ).reshape(batch, m * k)
    return _record(t, value, (a, b), _vjp_bmm, (m, n, k))


def btr(x: Var, dims: tuple) -> Var:
    """Per-row transpose of (B, m*n) rows viewed as (m, n) matrices."""
    m, n = dims
    return permute_cols(x, _tr_perm(m, n))


class _TracedOps:
    add = staticmethod(add)
    sub = staticmethod(sub)
    mul = staticmethod(mul)
    div = staticmethod(div)
    neg = staticmethod(neg)
    sqrt = staticmethod(sqrt)
    dsqrt_abs = staticmethod(dsqrt_abs)
    matmul = staticmethod(matmul)
    transpose = staticmethod(transpose)
    colsum = staticmethod(colsum)
    broadcast_rows = staticmethod(broadcast_rows)
    rowdot = staticmethod(rowdot)
    scale_rows = staticmethod(scale_rows)
    sum_all = staticmethod(sum_all)
    broadcast_full = staticmethod(broadcast_full)
    take_col = staticmethod(take_col)
    put_col = staticmethod(put_col)
    cols = staticmethod(cols)
    pad_cols = staticmethod(pad_cols)
    permute_cols = staticmethod(permute_cols)
    select_cols = staticmethod(select_cols)
    scatter_cols = staticmethod(scatter_cols)
    bmm = staticmethod(bmm)


def _raw_dsqrt_abs(a):
    """dsqrt_abs for the raw namespace; traced inputs still count kinks."""
    x = _val(a)
    if type(a) is Var:
        nzero = int(np.count_nonzero(x == 0.0))
        if nzero:
            a.tape.kink_hits += nzero
    return np.sign(x) * (0.5 / np.sqrt(np.maximum(np.abs(x), SQRT_ABS_EPS)))


class _RawOps:
    """Numpy mirror of the primitives, used by sweeps that need no graph."""

    @staticmethod
    def add(a, b):
        return _val(a) + _val(b)

    @staticmethod
    def sub(a, b):
        return _val(a) - _val(b)

    @staticmethod
    def mul(a, b):
        return _val(a) * _val(b)

    @staticmethod
    def div(a, b):
        return _val(a) / _val(b)

    @staticmethod
    def neg(a):
        return -_val(a)

    @staticmethod
    def sqrt(a):
        return np.sqrt(_val(a))

    dsqrt_abs = staticmethod(_raw_dsqrt_abs)

    @staticmethod
    def matmul(a, b):
        return _val(a) @ _val(b)

    @staticmethod
    def transpose(a):
        return _val(a).T

    @staticmethod
    def colsum(a):
        return _val(a).sum(axis=0)

    @staticmethod
    def broadcast_rows(v, n):
        v = _val(v)
        return np.broadcast_to(v, (n,) + v.shape).copy()

    @staticmethod
    def rowdot(a, b):
        return np.einsum("ij,ij->i", _val(a), _val(b))

    @staticmethod
    def scale_rows(m, c):
        return _val(m) * _val(c)[:, None]

    @staticmethod
    def sum_all(a):
        return np.asarray(_val(a).sum())

    @staticmethod
    def broadcast_full(s, shape):
        return np.full(shape, _val(s))

    @staticmethod
    def take_col(x, j):
        return _val(x)[:, j]

    @staticmethod
    def put_col(v, j, width):
        v = _val(v)
        out = np.zeros((v.shape[0], width))
        out[:, j] = v
        return out

    @staticmethod
    def cols(x, j0, j1):
        return _val(x)[:, j0:j1]

    @staticmethod
    def pad_cols(x, j0, total):
        x = _val(x)
        out = np.zeros((x.shape[0], total))
        out[:, j0 : j0 + x.shape[1]] = x
        return out

    @staticmethod
    def permute_cols(x, perm):
        return _val(x)[:, perm]

    @staticmethod
    def select_cols(x, idx):
        return _val(x)[:, idx]

    @staticmethod
    def scatter_cols(v, idx, total):
        v = _val(v)
        out = np.zeros((v.shape[0], total))
        out[:, idx] = v
        return out

    @staticmethod
    def bmm(a, b, dims):
        m, n, k = dims
        a = _val(a)
        b = _val(b)
        batch = a.shape[0]
        return np.matmul(a.reshape(batch, m, n), b.reshape(batch, n, k)).reshape(
            batch, m * k
        )


# ---------------------------------------------------------------------------
# reverse sweep
# ---------------------------------------------------------------------------

def grad(out: Var, wrt, create_graph: bool = False):
    """Adjoints of a scalar `out` with respect to each Var in `wrt`.

    Every `wrt` entry is treated as an independent cut point: the sweep does
    not continue through its own parents.  With ``create_graph=True`` the
    returned adjoints are Vars on the same tape and can be differentiated
    again; otherwise they are plain numpy arrays.
    """
    if out.value.size != 1:
        raise ValueError("grad expects a scalar output")
    tape = out.tape
    wrt = list(wrt)
    for v in wrt:
        if type(v) is not Var or v.tape is not tape:
            raise RecordingMixError("wrt variables must live on the output's tape")

    def _zero(v):
        z = np.zeros_like(v.value)
        return tape.constant(z) if create_graph else z

    if not wrt:
        return []
    lo = min(v.index for v in wrt)
    hi = out.index
    if hi < lo:
        return [_zero(v) for v in wrt]

    nodes = tape.nodes
    size = hi - lo + 1
    dep = bytearray(size)
    for v in wrt:
        if v.index <= hi:
            dep[v.index - lo] = 1
    for i in range(lo, hi + 1):
        if dep[i - lo]:
            continue
        for p in nodes[i].parents:
            pi = p.index
            if pi >= lo and dep[pi - lo]:
                dep[i - lo] = 1
                break
    if not dep[hi - lo]:
        return [_zero(v) for v in wrt]

    ops = _TracedOps if create_graph else _RawOps
    one = np.ones_like(out.value)
    seed = tape.constant(one) if create_graph else one
    adjoints: list = [None] * size
    adjoints[hi - lo] = seed
    cut = {v.index for v in wrt}
    results: dict = {}
    for i in range(hi, lo - 1, -1):
        a = adjoints[i - lo]
        if a is None:
            continue
        adjoints[i - lo] = None
        if i in cut:
            results[i] = a
            continue
        node = nodes[i]
        vjp = node.vjp
        if vjp is None:
            continue
        parents = node.parents
        needs = tuple(p.index >= lo and dep[p.index - lo] == 1 for p in parents)
        if True not in needs:
            continue
        for p, c in zip(parents, vjp(ops, a, needs, node)):
            if c is None:
                continue
            j = p.index - lo
            cur = adjoints[j]
            if cur is None:
                adjoints[j] = c
            elif create_graph:
                adjoints[j] = add(cur, c)
            else:
                adjoints[j] = cur + c
    return [results.get(v.index) if results.get(v.index) is not None else _zero(v) for v in wrt]


# ---------------------------------------------------------------------------
# convenience entry points for scalar functions of flat real inputs
# ---------------------------------------------------------------------------

def gradient(f, x):
    """Evaluate (grad f(x), f(x)) for a traced scalar function.

    `f` receives a list of scalar Vars (one per entry of x) and must return a
    scalar Var built from this module's operations.
    """
    tape = Tape()
    xs = [tape.leaf(float(v)) for v in x]
    y = f(xs)
    gs = grad(y, xs)
    return [float(g) for g in gs], float(y.value)


def gradient_of_gradient_contraction(f, x, u):
    """Evaluate grad_x(grad_x f . u), the Hessian-vector product of f at x."""
    tape = Tape()
    xs = [tape.leaf(float(v)) for v in x]
    y = f(xs)
    gs = grad(y, xs, create_graph=True)
    total = None
    for g, ui in zip(gs, u):
        term = mul(g, float(ui))
        total = term if total is None else add(total, term)
    hs = grad(total, xs)
    return [float(h) for h in hs]
