# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython tape engine: same opcode semantics as tape_py.PyTape.

Node values live in one flat float64 arena; a node is either lane-wide
(width lanes) or a lane-constant scalar (parameters and anything derived
only from them), so parameter-heavy graphs stay small. Hot loops (forward
primitive application, reverse adjoint sweep) run as C loops over lanes.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport (atan, atan2, cos, exp, fabs, fmod, isfinite, log,
                        pow, sin, sqrt, tan, tanh)

from ..errors import NonFiniteError, ShapeError, TapeConsumedError
from . import opcodes as oc

from .var import Var

cnp.import_array()

DEF TWO_PI = 6.283185307179586476925287

cdef enum:
    OP_CONST = 0
    OP_LEAF = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_NEG = 6
    OP_SIN = 7
    OP_COS = 8
    OP_TAN = 9
    OP_ATAN = 10
    OP_ATAN2 = 11
    OP_EXP = 12
    OP_LOG = 13
    OP_SQRT = 14
    OP_POWC = 15
    OP_TANH = 16
    OP_RELU = 17
    OP_MIN = 18
    OP_MAX = 19
    OP_ABS = 20
    OP_DOT = 21
    OP_WHERE = 22
    OP_GATHER = 23
    OP_WRAP = 24


cdef class CyTape:
    cdef public int width
    cdef int n, cap
    cdef long long used, buf_cap
    cdef object _buf_arr, _ops_arr, _ia_arr, _ib_arr, _auxf_arr, _off_arr, _wid_arr
    cdef double[::1] buf
    cdef int[::1] ops, ia, ib, wid
    cdef long long[::1] off
    cdef double[::1] auxf
    cdef list _aux
    cdef list _leaves
    cdef bint _consumed

    property name:
        def __get__(self):
            return "cy"

    def __init__(self, width=1):
        if width < 1:
            raise ShapeError("tape width must be >= 1")
        self.width = int(width)
        self.n = 0
        self.cap = 4096
        self.used = 0
        self.buf_cap = 4096 * 8
        self._buf_arr = np.empty(self.buf_cap, dtype=np.float64)
        self._ops_arr = np.empty(self.cap, dtype=np.int32)
        self._ia_arr = np.empty(self.cap, dtype=np.int32)
        self._ib_arr = np.empty(self.cap, dtype=np.int32)
        self._wid_arr = np.empty(self.cap, dtype=np.int32)
        self._off_arr = np.empty(self.cap, dtype=np.int64)
        self._auxf_arr = np.zeros(self.cap, dtype=np.float64)
        self._rebind()
        self._aux = []
        self._leaves = []
        self._consumed = False

    cdef void _rebind(self):
        self.buf = self._buf_arr
        self.ops = self._ops_arr
        self.ia = self._ia_arr
        self.ib = self._ib_arr
        self.wid = self._wid_arr
        self.off = self._off_arr
        self.auxf = self._auxf_arr

    cdef int _grow_nodes(self) except -1:
        cdef int newcap = self.cap * 2
        self._ops_arr = np.concatenate([self._ops_arr, np.empty(self.cap, dtype=np.int32)])
        self._ia_arr = np.concatenate([self._ia_arr, np.empty(self.cap, dtype=np.int32)])
        self._ib_arr = np.concatenate([self._ib_arr, np.empty(self.cap, dtype=np.int32)])
        self._wid_arr = np.concatenate([self._wid_arr, np.empty(self.cap, dtype=np.int32)])
        self._off_arr = np.concatenate([self._off_arr, np.empty(self.cap, dtype=np.int64)])
        self._auxf_arr = np.concatenate([self._auxf_arr, np.zeros(self.cap)])
        self.cap = newcap
        self._rebind()
        return 0

    cdef int _grow_buf(self, long long need) except -1:
        cdef long long newcap = self.buf_cap
        while newcap < self.used + need:
            newcap *= 2
        self._buf_arr = np.concatenate([self._buf_arr, np.empty(newcap - self.buf_cap)])
        self.buf_cap = newcap
        self._rebind()
        return 0

    cdef int _alloc(self, int op, int a, int b, double auxf, object aux, int w) except -1:
        if self.n >= self.cap:
            self._grow_nodes()
        if self.used + w > self.buf_cap:
            self._grow_buf(w)
        cdef int i = self.n
        self.ops[i] = op
        self.ia[i] = a
        self.ib[i] = b
        self.auxf[i] = auxf
        self.wid[i] = w
        self.off[i] = self.used
        self.used += w
        self._aux.append(aux)
        self.n += 1
        return i

    cdef int _check_finite(self, int i, int op) except -1:
        cdef int w
        cdef long long o = self.off[i]
        for w in range(self.wid[i]):
            if not isfinite(self.buf[o + w]):
                raise NonFiniteError(oc.NAMES[op])
        return 0

    # -- construction ---------------------------------------------------
    def const(self, x):
        return Var(self, self._input_node(OP_CONST, x))

    def leaf(self, x):
        cdef int i = self._input_node(OP_LEAF, x)
        self._leaves.append(i)
        return Var(self, i)

    cdef int _input_node(self, int op, object x) except -1:
        a = np.asarray(x, dtype=np.float64)
        cdef int w
        cdef int i
        cdef long long o
        if a.ndim == 0:
            i = self._alloc(op, -1, -1, 0.0, None, 1)
            self.buf[self.off[i]] = float(a)
        elif a.shape == (1,):
            i = self._alloc(op, -1, -1, 0.0, None, 1)
            self.buf[self.off[i]] = a[0]
        elif a.shape == (self.width,):
            i = self._alloc(op, -1, -1, 0.0, None, self.width)
            o = self.off[i]
            self._buf_arr[o:o + self.width] = a
        else:
            raise ShapeError(f"expected scalar or shape ({self.width},), got {a.shape}")
        self._check_finite(i, op)
        return i

    def leaves(self, vec):
        v = np.ascontiguousarray(np.asarray(vec, dtype=np.float64))
        if v.ndim != 1:
            raise ShapeError("leaves() takes a flat vector")
        cdef int k = v.shape[0]
        cdef int i, j, i0 = -1
        cdef double[::1] vv = v
        for j in range(k):
            i = self._alloc(OP_LEAF, -1, -1, 0.0, None, 1)
            if i0 < 0:
                i0 = i
            if not isfinite(vv[j]):
                raise NonFiniteError("leaf")
            self.buf[self.off[i]] = vv[j]
        out = [Var(self, i0 + j) for j in range(k)]
        self._leaves.extend(range(i0, i0 + k))
        return out

    def reset(self, vec=None):
        """Rewind to just the leaf nodes (optionally writing new leaf values)
        so the arena and leaf Vars can be reused across iterations."""
        cdef int k = len(self._leaves)
        cdef int j
        cdef double[::1] vv
        if k and (self._leaves[0] != 0 or self._leaves[k - 1] != k - 1):
            raise ShapeError("reset() needs the leaves to be the first nodes")
        self.n = k
        self.used = (self.off[k - 1] + self.wid[k - 1]) if k else 0
        del self._aux[k:]
        self._consumed = False
        if vec is not None:
            v = np.ascontiguousarray(np.asarray(vec, dtype=np.float64))
            if v.shape[0] != k:
                raise ShapeError("reset() vector length != number of leaves")
            vv = v
            for j in range(k):
                if self.wid[j] != 1:
                    raise ShapeError("reset(vec) needs scalar leaves")
                if not isfinite(vv[j]):
                    raise NonFiniteError("leaf")
                self.buf[self.off[j]] = vv[j]

    def value(self, idx):
        cdef int i = idx
        cdef long long o = self.off[i]
        if self.wid[i] == 1 and self.width > 1:
            return np.broadcast_to(self._buf_arr[o:o + 1], (self.width,))
        return self._buf_arr[o:o + self.wid[i]]

    @property
    def n_nodes(self):
        return self.n

    # -- primitives -----------------------------------------------------
    def apply(self, int op, a, b=None, double aux_f=0.0):
        cdef int ai = a.idx
        cdef int bi = -1
        if b is not None:
            bi = b.idx
        return Var(self, self._apply_c(op, ai, bi, aux_f))

    cdef int _apply_c(self, int op, int ai, int bi, double aux_f) except -1:
        cdef int wa = self.wid[ai]
        cdef int wout = wa
        cdef int wb = 1
        if bi >= 0:
            wb = self.wid[bi]
            if wb > wout:
                wout = wb
        cdef int i = self._alloc(op, ai, bi, aux_f, None, wout)
        cdef long long oo = self.off[i], oa = self.off[ai], ob = 0
        cdef int sa = 0 if wa == 1 else 1
        cdef int sb = 0
        if bi >= 0:
            ob = self.off[bi]
            sb = 0 if wb == 1 else 1
        cdef int w
        cdef double x, y
        cdef double[::1] B = self.buf
        if bi < 0:
            for w in range(wout):
                x = B[oa + w * sa]
                if op == OP_NEG:
                    B[oo + w] = -x
                elif op == OP_SIN:
                    B[oo + w] = sin(x)
                elif op == OP_COS:
                    B[oo + w] = cos(x)
                elif op == OP_TAN:
                    B[oo + w] = tan(x)
                elif op == OP_ATAN:
                    B[oo + w] = atan(x)
                elif op == OP_EXP:
                    B[oo + w] = exp(x)
                elif op == OP_LOG:
                    B[oo + w] = log(x)
                elif op == OP_SQRT:
                    B[oo + w] = sqrt(x)
                elif op == OP_POWC:
                    B[oo + w] = pow(x, aux_f)
                elif op == OP_TANH:
                    B[oo + w] = tanh(x)
                elif op == OP_RELU:
                    B[oo + w] = x if x > 0.0 else 0.0
                elif op == OP_ABS:
                    B[oo + w] = fabs(x)
                elif op == OP_WRAP:
                    y = fmod(x, TWO_PI)
                    if y < 0.0:
                        y += TWO_PI
                    B[oo + w] = y
                else:
                    raise ValueError(f"bad unary opcode {op}")
        else:
            for w in range(wout):
                x = B[oa + w * sa]
                y = B[ob + w * sb]
                if op == OP_ADD:
                    B[oo + w] = x + y
                elif op == OP_SUB:
                    B[oo + w] = x - y
                elif op == OP_MUL:
                    B[oo + w] = x * y
                elif op == OP_DIV:
                    B[oo + w] = x / y
                elif op == OP_ATAN2:
                    B[oo + w] = atan2(x, y)
                elif op == OP_MIN:
                    B[oo + w] = x if x < y else y
                elif op == OP_MAX:
                    B[oo + w] = x if x > y else y
                else:
                    raise ValueError(f"bad binary opcode {op}")
        self._check_finite(i, op)
        return i

    def dot(self, xs, ws=None):
        if ws is not None and len(ws) != len(xs):
            raise ShapeError("dot: input lists differ in length")
        cdef cnp.ndarray[cnp.int32_t, ndim=1] xi = np.array(
            [v.idx for v in xs], dtype=np.int32)
        cdef cnp.ndarray[cnp.int32_t, ndim=1] wi
        if ws is None:
            return Var(self, self._dot_c(xi, None, -1))
        wi = np.array([v.idx for v in ws], dtype=np.int32)
        return Var(self, self._dot_c(xi, wi, -1))

    cdef int _dot_c(self, cnp.int32_t[::1] xi, object wi_obj, int w0) except -1:
        cdef int k = xi.shape[0]
        cdef int j, w
        cdef int wout = 1
        cdef cnp.int32_t[::1] wi = xi  # placeholder; re-bound when wi_obj given
        cdef bint has_wi = wi_obj is not None
        if has_wi:
            wi = wi_obj
        for j in range(k):
            if self.wid[xi[j]] > 1:
                wout = self.width
                break
        if wout == 1 and has_wi:
            for j in range(k):
                if self.wid[wi[j]] > 1:
                    wout = self.width
                    break
        if wout == 1 and w0 >= 0:
            for j in range(k):
                if self.wid[w0 + j] > 1:
                    wout = self.width
                    break
        cdef int i = self._alloc(OP_DOT, -1, -1, 0.0, (np.asarray(xi), wi_obj, w0), wout)
        cdef long long oo = self.off[i], ox, ow
        cdef int sx, sw, wj
        cdef double[::1] B = self.buf
        for w in range(wout):
            B[oo + w] = 0.0
        for j in range(k):
            ox = self.off[xi[j]]
            sx = 0 if self.wid[xi[j]] == 1 else 1
            if not has_wi and w0 < 0:
                for w in range(wout):
                    B[oo + w] += B[ox + w * sx]
            else:
                wj = (w0 + j) if w0 >= 0 else wi[j]
                ow = self.off[wj]
                sw = 0 if self.wid[wj] == 1 else 1
                for w in range(wout):
                    B[oo + w] += B[ox + w * sx] * B[ow + w * sw]
        self._check_finite(i, OP_DOT)
        return i

    def dense_layer(self, xs, int w0, int b0, int n_out, bint relu):
        """Affine layer over contiguous leaf ranges: weights row-major from
        node w0, biases from node b0; returns the n_out output Vars."""
        cdef cnp.ndarray[cnp.int32_t, ndim=1] xi = np.array(
            [v.idx for v in xs], dtype=np.int32)
        cdef int n_in = xi.shape[0]
        cdef int r, i, j
        out = []
        for r in range(n_out):
            i = self._dot_c(xi, None, w0 + r * n_in)
            i = self._apply_c(OP_ADD, i, b0 + r, 0.0)
            if relu:
                i = self._apply_c(OP_RELU, i, -1, 0.0)
            out.append(Var(self, i))
        return out

    def where(self, mask, a, b):
        m = np.broadcast_to(np.asarray(mask, dtype=bool), (self.width,)).astype(np.uint8)
        cdef cnp.uint8_t[::1] mv = m
        cdef int ai = a.idx, bi = b.idx, w
        cdef int i = self._alloc(OP_WHERE, ai, bi, 0.0, m, self.width)
        cdef long long oo = self.off[i], oa = self.off[ai], ob = self.off[bi]
        cdef int sa = 0 if self.wid[ai] == 1 else 1
        cdef int sb = 0 if self.wid[bi] == 1 else 1
        cdef double[::1] B = self.buf
        for w in range(self.width):
            B[oo + w] = B[oa + w * sa] if mv[w] else B[ob + w * sb]
        self._check_finite(i, OP_WHERE)
        return Var(self, i)

    def gather(self, cols, lanes):
        idx = np.broadcast_to(np.asarray(lanes, dtype=np.int64), (self.width,)).copy()
        cdef cnp.int64_t[::1] iv = idx
        cdef cnp.ndarray[cnp.int32_t, ndim=1] ci = np.array(
            [v.idx for v in cols], dtype=np.int32)
        cdef int k = ci.shape[0], w, src
        for w in range(self.width):
            if iv[w] < 0 or iv[w] >= k:
                raise ShapeError("gather index out of range")
        cdef int i = self._alloc(OP_GATHER, -1, -1, 0.0, (ci, idx), self.width)
        cdef long long oo = self.off[i]
        cdef double[::1] B = self.buf
        for w in range(self.width):
            src = ci[iv[w]]
            B[oo + w] = B[self.off[src] + w * (0 if self.wid[src] == 1 else 1)]
        self._check_finite(i, OP_GATHER)
        return Var(self, i)

    # -- reverse pass -----------------------------------------------------
    def backward(self, loss, seed=None):
        if self._consumed:
            raise TapeConsumedError("backward() already ran on this tape")
        self._consumed = True
        if loss.tape is not self:
            raise ShapeError("loss belongs to a different tape")
        cdef int li = loss.idx
        adj_arr = np.zeros(self.used, dtype=np.float64)
        cdef double[::1] adj = adj_arr
        cdef double[::1] B = self.buf
        cdef int w
        cdef long long ol = self.off[li]
        if seed is None:
            for w in range(self.wid[li]):
                adj[ol + w] = 1.0
        else:
            s = np.broadcast_to(np.asarray(seed, dtype=np.float64), (self.width,))
            if self.wid[li] == 1:
                adj[ol] = float(np.sum(s))
            else:
                for w in range(self.width):
                    adj[ol + w] = s[w]
        self._sweep(adj, li)
        cdef int nl = len(self._leaves)
        out = np.empty(nl)
        cdef double[::1] ov = out
        cdef int j, lf
        cdef double acc
        for j in range(nl):
            lf = self._leaves[j]
            if lf > li:
                ov[j] = 0.0
                continue
            acc = 0.0
            for w in range(self.wid[lf]):
                acc += adj[self.off[lf] + w]
            ov[j] = acc
        return out

    cdef int _sweep(self, double[::1] adj, int li) except -1:
        cdef double[::1] B = self.buf
        cdef int i, op, a, b, w, k, j, sa, sb, sg, wj, sx, sw, src
        cdef long long oo, oa, ob, ox, ow
        cdef double g, va, vb, r2, c, accum
        cdef cnp.int32_t[::1] xi, wi, ci
        cdef cnp.int64_t[::1] gidx
        cdef cnp.uint8_t[::1] mv
        cdef object aux
        cdef int wout
        cdef bint any_nonzero
        for i in range(li, -1, -1):
            op = self.ops[i]
            if op == OP_CONST or op == OP_LEAF:
                continue
            oo = self.off[i]
            wout = self.wid[i]
            any_nonzero = False
            for w in range(wout):
                if adj[oo + w] != 0.0:
                    any_nonzero = True
                    break
            if not any_nonzero:
                continue
            a = self.ia[i]
            b = self.ib[i]
            if a >= 0:
                oa = self.off[a]
                sa = 0 if self.wid[a] == 1 else 1
            if b >= 0:
                ob = self.off[b]
                sb = 0 if self.wid[b] == 1 else 1
            if op == OP_ADD:
                for w in range(wout):
                    g = adj[oo + w]
                    adj[oa + w * sa] += g
                    adj[ob + w * sb] += g
            elif op == OP_SUB:
                for w in range(wout):
                    g = adj[oo + w]
                    adj[oa + w * sa] += g
                    adj[ob + w * sb] -= g
            elif op == OP_MUL:
                for w in range(wout):
                    g = adj[oo + w]
                    adj[oa + w * sa] += g * B[ob + w * sb]
                    adj[ob + w * sb] += g * B[oa + w * sa]
            elif op == OP_DIV:
                for w in range(wout):
                    g = adj[oo + w]
                    vb = B[ob + w * sb]
                    adj[oa + w * sa] += g / vb
                    adj[ob + w * sb] -= g * B[oo + w] / vb
            elif op == OP_NEG:
                for w in range(wout):
                    adj[oa + w * sa] -= adj[oo + w]
            elif op == OP_SIN:
                for w in range(wout):
                    adj[oa + w * sa] += adj[oo + w] * cos(B[oa + w * sa])
            elif op == OP_COS:
                for w in range(wout):
                    adj[oa + w * sa] -= adj[oo + w] * sin(B[oa + w * sa])
            elif op == OP_TAN:
                for w in range(wout):
                    adj[oa + w * sa] += adj[oo + w] * (1.0 + B[oo + w] * B[oo + w])
            elif op == OP_ATAN:
                for w in range(wout):
                    va = B[oa + w * sa]
                    adj[oa + w * sa] += adj[oo + w] / (1.0 + va * va)
            elif op == OP_ATAN2:
                for w in range(wout):
                    g = adj[oo + w]
                    va = B[oa + w * sa]
                    vb = B[ob + w * sb]
                    r2 = va * va + vb * vb
                    adj[oa + w * sa] += g * vb / r2
                    adj[ob + w * sb] -= g * va / r2
            elif op == OP_EXP:
                for w in range(wout):
                    adj[oa + w * sa] += adj[oo + w] * B[oo + w]
            elif op == OP_LOG:
                for w in range(wout):
                    adj[oa + w * sa] += adj[oo + w] / B[oa + w * sa]
            elif op == OP_SQRT:
                for w in range(wout):
                    adj[oa + w * sa] += adj[oo + w] / (2.0 * B[oo + w])
            elif op == OP_POWC:
                c = self.auxf[i]
                for w in range(wout):
                    adj[oa + w * sa] += adj[oo + w] * c * pow(B[oa + w * sa], c - 1.0)
            elif op == OP_TANH:
                for w in range(wout):
                    adj[oa + w * sa] += adj[oo + w] * (1.0 - B[oo + w] * B[oo + w])
            elif op == OP_RELU:
                for w in range(wout):
                    if B[oa + w * sa] > 0.0:
                        adj[oa + w * sa] += adj[oo + w]
            elif op == OP_MIN:
                for w in range(wout):
                    if B[oa + w * sa] <= B[ob + w * sb]:
                        adj[oa + w * sa] += adj[oo + w]
                    else:
                        adj[ob + w * sb] += adj[oo + w]
            elif op == OP_MAX:
                for w in range(wout):
                    if B[oa + w * sa] >= B[ob + w * sb]:
                        adj[oa + w * sa] += adj[oo + w]
                    else:
                        adj[ob + w * sb] += adj[oo + w]
            elif op == OP_ABS:
                for w in range(wout):
                    va = B[oa + w * sa]
                    if va > 0.0:
                        adj[oa + w * sa] += adj[oo + w]
                    elif va < 0.0:
                        adj[oa + w * sa] -= adj[oo + w]
            elif op == OP_WRAP:
                for w in range(wout):
                    adj[oa + w * sa] += adj[oo + w]
            elif op == OP_WHERE:
                mv = self._aux[i]
                for w in range(wout):
                    if mv[w]:
                        adj[oa + w * sa] += adj[oo + w]
                    else:
                        adj[ob + w * sb] += adj[oo + w]
            elif op == OP_GATHER:
                aux = self._aux[i]
                ci = aux[0]
                gidx = aux[1]
                for w in range(wout):
                    src = ci[gidx[w]]
                    adj[self.off[src] + w * (0 if self.wid[src] == 1 else 1)] += adj[oo + w]
            elif op == OP_DOT:
                aux = self._aux[i]
                xi = aux[0]
                k = xi.shape[0]
                if aux[1] is None and aux[2] < 0:
                    for j in range(k):
                        ox = self.off[xi[j]]
                        sx = 0 if self.wid[xi[j]] == 1 else 1
                        for w in range(wout):
                            adj[ox + w * sx] += adj[oo + w]
                else:
                    if aux[1] is not None:
                        wi = aux[1]
                    for j in range(k):
                        wj = (aux[2] + j) if aux[2] >= 0 else wi[j]
                        ox = self.off[xi[j]]
                        sx = 0 if self.wid[xi[j]] == 1 else 1
                        ow = self.off[wj]
                        sw = 0 if self.wid[wj] == 1 else 1
                        for w in range(wout):
                            g = adj[oo + w]
                            adj[ox + w * sx] += g * B[ow + w * sw]
                            adj[ow + w * sw] += g * B[ox + w * sx]
            else:
                raise ValueError(f"bad opcode {op} in backward")
        return 0
