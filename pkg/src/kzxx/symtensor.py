"""U(1)-symmetric block-sparse tensors.

Every leg carries an ordered list of integer charge sectors and a direction
``sig`` (+1 outgoing, -1 incoming).  A block with per-leg charges ``q`` is
allowed only if ``sum(sig_i * q_i) == n`` where ``n`` is the tensor's total
charge.  Blocks are stored densely, keyed by the charge tuple; a missing block
is identically zero.

Contractions and factorizations group blocks into one dense matrix per charge
sector, so the number of BLAS calls scales with the number of sectors rather
than with the number of block pairs.

Tensors are treated as immutable once built; no routine in this module writes
into the arrays of its inputs.
"""
from __future__ import annotations

import io
import itertools
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "ChargeError",
    "Leg",
    "LegMismatchError",
    "SymTensor",
    "eigh",
    "fuse_legs",
    "load",
    "pinv_hermitian",
    "qr",
    "save",
    "scale_leg",
    "split_legs",
    "svd",
    "tensordot",
    "vdot",
]

DEFAULT_CUTOFF = 1e-14


class ChargeError(ValueError):
    """A block violates the charge selection rule or the leg structure."""


class LegMismatchError(ValueError):
    """Two legs paired in a contraction are not conjugate to each other."""


@dataclass(frozen=True)
class Leg:
    """One tensor leg: direction plus ordered ``(charge, degeneracy)`` sectors.

    ``sub`` is non-empty for a leg produced by :func:`fuse_legs`; it holds the
    original legs so that :func:`split_legs` can undo the fusion.
    """

    sig: int
    charges: tuple
    dims: tuple
    sub: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "charges", tuple(int(q) for q in self.charges))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "sub", tuple(self.sub))
        if self.sig not in (1, -1):
            raise ChargeError(f"leg direction must be +1 or -1, got {self.sig}")
        if len(self.charges) != len(self.dims):
            raise ChargeError("charges and dims differ in length")
        if any(b <= a for a, b in zip(self.charges, self.charges[1:])):
            raise ChargeError(f"charges must be strictly increasing: {self.charges}")
        if any(d < 1 for d in self.dims):
            raise ChargeError(f"degeneracies must be >= 1: {self.dims}")

    @classmethod
    def from_dict(cls, sectors: dict, sig: int = 1) -> "Leg":
        items = sorted(sectors.items())
        return cls(sig, [q for q, _ in items], [d for _, d in items])

    @property
    def dim(self) -> int:
        return sum(self.dims)

    @cached_property
    def _pos(self) -> dict:
        return {q: i for i, q in enumerate(self.charges)}

    @cached_property
    def offsets(self) -> dict:
        off = np.concatenate([[0], np.cumsum(self.dims)[:-1]]).astype(int)
        return {q: int(o) for q, o in zip(self.charges, off)}

    def dim_of(self, q: int) -> int:
        return self.dims[self._pos[q]]

    def has(self, q: int) -> bool:
        return q in self._pos

    def conj(self) -> "Leg":
        return Leg(-self.sig, self.charges, self.dims, tuple(s.conj() for s in self.sub))

    @property
    def is_fused(self) -> bool:
        return bool(self.sub)

    @cached_property
    def fusion(self) -> dict:
        """Fused charge -> list of ``(sub_charges, sub_dims, offset)``."""
        return _fusion_table(self.sig, self.sub)

    @classmethod
    def fuse(cls, legs, sig=None) -> "Leg":
        legs = tuple(legs)
        sig = legs[0].sig if sig is None else sig
        table = _fusion_table(sig, legs)
        qs = sorted(table)
        dims = []
        for q in qs:
            last = table[q][-1]
            dims.append(last[2] + int(np.prod(last[1])))
        return cls(sig, qs, dims, legs)

    def __repr__(self):
        secs = ", ".join(f"{q}:{d}" for q, d in zip(self.charges, self.dims))
        tag = f" fused{len(self.sub)}" if self.sub else ""
        return f"Leg({self.sig:+d}; {secs}{tag})"


def _fusion_table(sig, legs):
    table = {}
    for combo in itertools.product(*[range(len(l.charges)) for l in legs]):
        qs = tuple(l.charges[i] for l, i in zip(legs, combo))
        ds = tuple(l.dims[i] for l, i in zip(legs, combo))
        q = sig * sum(l.sig * c for l, c in zip(legs, qs))
        table.setdefault(q, []).append([qs, ds, 0])
    out = {}
    for q, entries in table.items():
        off = 0
        rows = []
        for qs, ds, _ in entries:
            rows.append((qs, ds, off))
            off += int(np.prod(ds))
        out[q] = rows
    return out


def _allowed_keys(legs, n):
    """All charge tuples satisfying the selection rule."""
    if not legs:
        return [()] if n == 0 else []
    keys = []
    last = legs[-1]
    for head in itertools.product(*[l.charges for l in legs[:-1]]):
        rest = n - sum(l.sig * q for l, q in zip(legs[:-1], head))
        q_last = rest * last.sig
        if last.has(q_last):
            keys.append(head + (q_last,))
    return keys


class SymTensor:
    """Block-sparse tensor with a U(1) charge selection rule."""

    __array_priority__ = 100

    def __init__(self, legs, blocks=None, n: int = 0, dtype=None, check: bool = True):
        self.legs = tuple(legs)
        self.n = int(n)
        self.blocks = dict(blocks or {})
        if dtype is None:
            dtype = np.result_type(*self.blocks.values()) if self.blocks else np.float64
        self.dtype = np.dtype(dtype)
        if check:
            self._check()

    def _check(self):
        for key, blk in self.blocks.items():
            if len(key) != self.ndim:
                raise ChargeError(f"block key {key} has wrong length for {self.ndim} legs")
            for leg, q in zip(self.legs, key):
                if not leg.has(q):
                    raise ChargeError(f"charge {q} not present on {leg}")
            tot = sum(l.sig * q for l, q in zip(self.legs, key))
            if tot != self.n:
                raise ChargeError(
                    f"block {key} carries charge {tot}, tensor total charge is {self.n}"
                )
            shape = tuple(l.dim_of(q) for l, q in zip(self.legs, key))
            if np.shape(blk) != shape:
                raise ChargeError(f"block {key} has shape {np.shape(blk)}, expected {shape}")

    # ---- construction -------------------------------------------------------

    @classmethod
    def zeros(cls, legs, n=0, dtype=np.float64):
        legs = tuple(legs)
        blocks = {
            k: np.zeros(tuple(l.dim_of(q) for l, q in zip(legs, k)), dtype=dtype)
            for k in _allowed_keys(legs, n)
        }
        return cls(legs, blocks, n, dtype, check=False)

    @classmethod
    def random(cls, legs, n=0, rng=None, dtype=np.float64):
        rng = np.random.default_rng(rng)
        legs = tuple(legs)
        blocks = {}
        for k in _allowed_keys(legs, n):
            shape = tuple(l.dim_of(q) for l, q in zip(legs, k))
            blk = rng.standard_normal(shape)
            if np.issubdtype(dtype, np.complexfloating):
                blk = blk + 1j * rng.standard_normal(shape)
            blocks[k] = blk.astype(dtype)
        return cls(legs, blocks, n, dtype, check=False)

    @classmethod
    def eye(cls, leg: Leg, dtype=np.float64):
        """Identity with legs ``(leg, leg.conj())``."""
        blocks = {(q, q): np.eye(d, dtype=dtype) for q, d in zip(leg.charges, leg.dims)}
        return cls((leg, leg.conj()), blocks, 0, dtype, check=False)

    @classmethod
    def from_dense(cls, array, legs, n=0, atol=1e-12):
        """Cut ``array`` into charge blocks; raise if weight sits in forbidden blocks."""
        array = np.asarray(array)
        legs = tuple(legs)
        if array.shape != tuple(l.dim for l in legs):
            raise ChargeError(f"dense shape {array.shape} does not match legs")
        blocks = {}
        mask = np.zeros(array.shape, dtype=bool)
        for k in _allowed_keys(legs, n):
            sl = tuple(slice(l.offsets[q], l.offsets[q] + l.dim_of(q)) for l, q in zip(legs, k))
            blocks[k] = np.array(array[sl])
            mask[sl] = True
        stray = np.abs(array[~mask]).max(initial=0.0)
        if stray > atol:
            raise ChargeError(f"dense array has weight {stray:.3e} in charge-violating entries")
        return cls(legs, blocks, n, array.dtype, check=False)

    @classmethod
    def scalar(cls, value):
        value = np.asarray(value)
        return cls((), {(): value.reshape(())}, 0, value.dtype, check=False)

    # ---- basic properties ---------------------------------------------------

    @property
    def ndim(self) -> int:
        return len(self.legs)

    @property
    def shape(self) -> tuple:
        return tuple(l.dim for l in self.legs)

    def block_shape(self, key) -> tuple:
        return tuple(l.dim_of(q) for l, q in zip(self.legs, key))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=self.dtype)
        for k, blk in self.blocks.items():
            sl = tuple(
                slice(l.offsets[q], l.offsets[q] + l.dim_of(q)) for l, q in zip(self.legs, k)
            )
            out[sl] = blk
        return out

    def item(self):
        if self.ndim != 0:
            raise ValueError("item() needs a tensor without legs")
        blk = self.blocks.get(())
        return self.dtype.type(0) if blk is None else blk[()]

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(b, b).real for b in self.blocks.values())))

    def max_abs(self) -> float:
        return max((float(np.abs(b).max(initial=0.0)) for b in self.blocks.values()), default=0.0)

    def filled(self) -> "SymTensor":
        """Same tensor with every allowed block stored (missing ones as zeros)."""
        blocks = dict(self.blocks)
        for k in _allowed_keys(self.legs, self.n):
            if k not in blocks:
                blocks[k] = np.zeros(self.block_shape(k), dtype=self.dtype)
        return SymTensor(self.legs, blocks, self.n, self.dtype, check=False)

    def copy(self) -> "SymTensor":
        return SymTensor(self.legs, {k: b.copy() for k, b in self.blocks.items()}, self.n,
                         self.dtype, check=False)

    def astype(self, dtype) -> "SymTensor":
        return SymTensor(self.legs, {k: b.astype(dtype) for k, b in self.blocks.items()},
                         self.n, dtype, check=False)

    def conj(self) -> "SymTensor":
        return SymTensor([l.conj() for l in self.legs],
                         {k: b.conj() for k, b in self.blocks.items()}, -self.n, self.dtype,
                         check=False)

    def transpose(self, axes) -> "SymTensor":
        axes = tuple(axes)
        if sorted(axes) != list(range(self.ndim)):
            raise ValueError(f"bad permutation {axes}")
        blocks = {tuple(k[i] for i in axes): b.transpose(axes) for k, b in self.blocks.items()}
        return SymTensor([self.legs[i] for i in axes], blocks, self.n, self.dtype, check=False)

    def flip_signature(self) -> "SymTensor":
        """Reverse every leg direction and the total charge without conjugating data."""
        return SymTensor([l.conj() for l in self.legs], self.blocks, -self.n, self.dtype,
                         check=False)

    def drop_leg(self, axis: int) -> "SymTensor":
        """Remove a dimension-one leg with a single sector; its charge moves into ``n``."""
        leg = self.legs[axis]
        if leg.charges and (len(leg.charges) != 1 or leg.dims[0] != 1):
            raise ChargeError(f"can only drop a one-dimensional leg, got {leg}")
        q = leg.charges[0]
        blocks = {k[:axis] + k[axis + 1:]: b.reshape(b.shape[:axis] + b.shape[axis + 1:])
                  for k, b in self.blocks.items()}
        legs = self.legs[:axis] + self.legs[axis + 1:]
        return SymTensor(legs, blocks, self.n - leg.sig * q, self.dtype, check=False)

    def add_leg(self, axis: int, sig: int = 1, charge=None) -> "SymTensor":
        """Insert a dimension-one leg; by default it absorbs the total charge (n -> 0)."""
        q = self.n * sig if charge is None else int(charge)
        leg = Leg(sig, (q,), (1,))
        blocks = {k[:axis] + (q,) + k[axis:]: np.expand_dims(b, axis)
                  for k, b in self.blocks.items()}
        legs = self.legs[:axis] + (leg,) + self.legs[axis:]
        return SymTensor(legs, blocks, self.n - sig * q, self.dtype, check=False)

    # ---- arithmetic ---------------------------------------------------------

    def _same_structure(self, other):
        if self.legs != other.legs or self.n != other.n:
            raise LegMismatchError("tensors have different legs or total charge")

    def __add__(self, other):
        if isinstance(other, (int, float)) and other == 0:
            return self
        self._same_structure(other)
        blocks = dict(self.blocks)
        for k, b in other.blocks.items():
            blocks[k] = blocks[k] + b if k in blocks else b
        return SymTensor(self.legs, blocks, self.n, np.result_type(self.dtype, other.dtype),
                         check=False)

    __radd__ = __add__

    def __neg__(self):
        return SymTensor(self.legs, {k: -b for k, b in self.blocks.items()}, self.n,
                         self.dtype, check=False)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, x):
        if isinstance(x, SymTensor):
            return NotImplemented
        blocks = {k: b * x for k, b in self.blocks.items()}
        return SymTensor(self.legs, blocks, self.n, np.result_type(self.dtype, np.asarray(x)),
                         check=False)

    __rmul__ = __mul__

    def __truediv__(self, x):
        return self * (1.0 / x)

    def __repr__(self):
        return f"SymTensor(n={self.n}, legs={list(self.legs)}, blocks={len(self.blocks)})"


# ---- matrix views by charge sector ------------------------------------------


def _group(t, row_axes, col_axes, sign=1):
    """Blocks keyed by the row-leg charge ``sign * sum(sig*q)`` of the sector."""
    groups = {}
    perm = tuple(row_axes) + tuple(col_axes)
    for key, blk in t.blocks.items():
        rk = tuple(key[i] for i in row_axes)
        ck = tuple(key[i] for i in col_axes)
        q = sign * sum(t.legs[i].sig * key[i] for i in row_axes)
        groups.setdefault(q, []).append((rk, ck, blk, perm))
    return groups


def _index(keys, legs):
    """Offsets of each charge tuple inside a sector matrix dimension."""
    out = {}
    off = 0
    for k in keys:
        shape = tuple(l.dim_of(q) for l, q in zip(legs, k))
        size = int(np.prod(shape)) if shape else 1
        out[k] = (off, size, shape)
        off += size
    return out, off


def _assemble(entries, rows, nrow, cols, ncol, dtype, transpose_to_rows=True):
    mat = np.zeros((nrow, ncol), dtype=dtype)
    for rk, ck, blk, perm in entries:
        r = rows.get(rk)
        c = cols.get(ck)
        if r is None or c is None:
            continue
        mat[r[0]:r[0] + r[1], c[0]:c[0] + c[1]] = blk.transpose(perm).reshape(r[1], c[1])
    return mat


def _normalize_axes(axes, ndim_a):
    if isinstance(axes, int):
        return list(range(ndim_a - axes, ndim_a)), list(range(axes))
    ia, ib = axes
    ia = [ia] if isinstance(ia, (int, np.integer)) else list(ia)
    ib = [ib] if isinstance(ib, (int, np.integer)) else list(ib)
    if len(ia) != len(ib):
        raise ValueError("axes lists differ in length")
    return ia, ib


def tensordot(a: SymTensor, b: SymTensor, axes) -> SymTensor:
    """Contract ``a`` and ``b`` over paired legs, like :func:`numpy.tensordot`.

    Paired legs must be conjugate (same sectors, opposite direction).  The
    result carries total charge ``a.n + b.n``; free legs of ``a`` precede free
    legs of ``b``.
    """
    ia, ib = _normalize_axes(axes, a.ndim)
    ia = [i % a.ndim for i in ia]
    ib = [j % b.ndim for j in ib]
    for i, j in zip(ia, ib):
        if a.legs[i] != b.legs[j].conj():
            raise LegMismatchError(
                f"cannot contract leg {i} of the first tensor {a.legs[i]} "
                f"with leg {j} of the second {b.legs[j]}"
            )
    fa = [i for i in range(a.ndim) if i not in ia]
    fb = [j for j in range(b.ndim) if j not in ib]
    dtype = np.result_type(a.dtype, b.dtype)
    ga = _group(a, ia, fa, sign=1)
    gb = _group(b, ib, fb, sign=-1)
    legs_a_free = [a.legs[i] for i in fa]
    legs_b_free = [b.legs[j] for j in fb]
    legs_c = [a.legs[i] for i in ia]
    blocks = {}
    for q in ga.keys() & gb.keys():
        ea, eb = ga[q], gb[q]
        ckeys = sorted({e[0] for e in ea} & {e[0] for e in eb})
        if not ckeys:
            continue
        cset = set(ckeys)
        rows_a = sorted({e[1] for e in ea if e[0] in cset})
        cols_b = sorted({e[1] for e in eb if e[0] in cset})
        cidx, nc = _index(ckeys, legs_c)
        ridx, nr = _index(rows_a, legs_a_free)
        kidx, nk = _index(cols_b, legs_b_free)
        # a entries are stored as (contracted, free); swap to (free, contracted)
        ma = np.zeros((nr, nc), dtype=a.dtype)
        for ck, rk, blk, _ in ea:
            c = cidx.get(ck)
            if c is None:
                continue
            r = ridx[rk]
            ma[r[0]:r[0] + r[1], c[0]:c[0] + c[1]] = blk.transpose(fa + ia).reshape(r[1], c[1])
        mb = np.zeros((nc, nk), dtype=b.dtype)
        for ck, rk, blk, _ in eb:
            c = cidx.get(ck)
            if c is None:
                continue
            k = kidx[rk]
            mb[c[0]:c[0] + c[1], k[0]:k[0] + k[1]] = blk.transpose(ib + fb).reshape(c[1], k[1])
        mc = ma @ mb
        for rk, (r0, rs, rshape) in ridx.items():
            for kk, (k0, ks, kshape) in kidx.items():
                blocks[rk + kk] = mc[r0:r0 + rs, k0:k0 + ks].reshape(rshape + kshape)
    return SymTensor(legs_a_free + legs_b_free, blocks, a.n + b.n, dtype, check=False)


def vdot(a: SymTensor, b: SymTensor):
    """``sum(conj(a) * b)`` over all entries; legs must agree."""
    a._same_structure(b)
    return sum((np.vdot(blk, b.blocks[k]) for k, blk in a.blocks.items() if k in b.blocks),
               start=0.0 + 0.0j if np.iscomplexobj(np.zeros(0, np.result_type(a.dtype, b.dtype)))
               else 0.0)


def contract_all(a: SymTensor, b: SymTensor):
    """Full contraction of all legs in order, returning a Python scalar."""
    return tensordot(a, b, (list(range(a.ndim)), list(range(b.ndim)))).item()


# ---- fusion -----------------------------------------------------------------


def fuse_legs(t: SymTensor, groups) -> SymTensor:
    """Fuse groups of legs.  ``groups`` partitions ``range(t.ndim)`` in new order.

    A one-element group leaves that leg untouched.  The fused leg takes the
    direction of the group's first leg.
    """
    groups = [tuple(g) if not isinstance(g, (int, np.integer)) else (int(g),) for g in groups]
    flat = [i for g in groups for i in g]
    if sorted(flat) != list(range(t.ndim)):
        raise ValueError(f"groups {groups} do not partition {t.ndim} legs")
    new_legs = []
    for g in groups:
        new_legs.append(t.legs[g[0]] if len(g) == 1 else Leg.fuse([t.legs[i] for i in g]))
    lookups = []
    for g, nl in zip(groups, new_legs):
        if len(g) == 1:
            lookups.append(None)
        else:
            lookups.append({qs: (q, off) for q, rows in nl.fusion.items() for qs, _, off in rows})
    blocks = {}
    for key, blk in t.blocks.items():
        blk = blk.transpose(flat)
        newkey = []
        slices = []
        sub_shape = []
        pos = 0
        for g, nl, lk in zip(groups, new_legs, lookups):
            qs = tuple(key[i] for i in g)
            dims = blk.shape[pos:pos + len(g)]
            pos += len(g)
            size = int(np.prod(dims))
            if lk is None:
                newkey.append(qs[0])
                slices.append(slice(None))
            else:
                q, off = lk[qs]
                newkey.append(q)
                slices.append(slice(off, off + size))
            sub_shape.append(size)
        newkey = tuple(newkey)
        out = blocks.get(newkey)
        if out is None:
            out = np.zeros(tuple(l.dim_of(q) for l, q in zip(new_legs, newkey)), dtype=t.dtype)
            blocks[newkey] = out
        out[tuple(slices)] = blk.reshape(sub_shape)
    return SymTensor(new_legs, blocks, t.n, t.dtype, check=False)


def split_legs(t: SymTensor, axes=None) -> SymTensor:
    """Undo :func:`fuse_legs` on the given axes (default: every fused leg)."""
    if axes is None:
        axes = [i for i, l in enumerate(t.legs) if l.is_fused]
    axes = sorted({a % t.ndim for a in ([axes] if isinstance(axes, int) else axes)})
    for a in axes:
        if not t.legs[a].is_fused:
            raise ValueError(f"leg {a} is not fused")
    new_legs = []
    for i, l in enumerate(t.legs):
        new_legs.extend(l.sub if i in axes else (l,))
    blocks = {}
    for key, blk in t.blocks.items():
        options = []
        for i, (l, q) in enumerate(zip(t.legs, key)):
            if i in axes:
                options.append(l.fusion[q])
            else:
                options.append([((q,), (blk.shape[i],), None)])
        for combo in itertools.product(*options):
            sl = []
            shape = []
            newkey = []
            for qs, ds, off in combo:
                newkey.extend(qs)
                shape.extend(ds)
                sl.append(slice(None) if off is None else slice(off, off + int(np.prod(ds))))
            blocks[tuple(newkey)] = blk[tuple(sl)].reshape(shape)
    return SymTensor(new_legs, blocks, t.n, t.dtype, check=False)


# ---- factorizations ---------------------------------------------------------


def _sector_matrices(t, row_axes, col_axes):
    """Yield ``(q, M, rows_index, cols_index)`` for every row-charge sector."""
    groups = _group(t, row_axes, col_axes)
    rlegs = [t.legs[i] for i in row_axes]
    clegs = [t.legs[i] for i in col_axes]
    for q in sorted(groups):
        ent = groups[q]
        rows, nr = _index(sorted({e[0] for e in ent}), rlegs)
        cols, nc = _index(sorted({e[1] for e in ent}), clegs)
        yield q, _assemble(ent, rows, nr, cols, nc, t.dtype), rows, cols


def svd(t: SymTensor, row_axes, col_axes, max_dim=None, cutoff=DEFAULT_CUTOFF, nU=0, sU=-1):
    """Truncated SVD ``t ~ U S V``.

    Returns ``(U, S, V, rel_err)`` with ``U`` legs ``row legs + [bond]``, ``V``
    legs ``[bond] + col legs`` and ``S`` a dict ``bond charge -> singular
    values``.  Values are kept globally in descending order (ties: ascending
    bond charge, then lower index) up to ``max_dim``; values with
    ``s / s_max < cutoff`` are discarded regardless.  ``rel_err`` is
    ``sqrt(sum discarded s^2) / ||t||``.  ``U`` carries total charge ``nU``,
    ``V`` the remainder; ``sU`` is the direction of the bond leg on ``U``.
    """
    row_axes, col_axes = list(row_axes), list(col_axes)
    sectors = []
    for q, m, rows, cols in _sector_matrices(t, row_axes, col_axes):
        try:
            u, s, vh = np.linalg.svd(m, full_matrices=False)
        except np.linalg.LinAlgError:
            import scipy.linalg

            u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        qb = (nU - q) * sU
        sectors.append((qb, u, s, vh, rows, cols))
    vals = np.concatenate([sec[2] for sec in sectors]) if sectors else np.zeros(0)
    if len(vals) == 0 or np.max(vals) == 0.0:
        raise ValueError("cannot factor zero tensor")
    charges = np.concatenate([np.full(len(sec[2]), sec[0]) for sec in sectors])
    index = np.concatenate([np.arange(len(sec[2])) for sec in sectors])
    order = np.lexsort((index, charges, -vals))
    smax = vals[order[0]]
    keep = np.zeros(len(vals), dtype=bool)
    nkeep = len(vals) if max_dim is None else min(int(max_dim), len(vals))
    keep[order[:nkeep]] = True
    keep &= vals >= cutoff * smax
    keep &= vals > 0
    discarded = float(np.sum(vals[~keep] ** 2))
    rel_err = np.sqrt(discarded) / np.sqrt(float(np.sum(vals ** 2)))
    counts = {}
    pos = 0
    for qb, u, s, vh, rows, cols in sectors:
        k = int(np.sum(keep[pos:pos + len(s)]))
        pos += len(s)
        if k:
            counts[qb] = k
    bond = Leg.from_dict(counts, sig=sU)
    ublocks, vblocks, S = {}, {}, {}
    rlegs = [t.legs[i] for i in row_axes]
    clegs = [t.legs[i] for i in col_axes]
    for qb, u, s, vh, rows, cols in sectors:
        k = counts.get(qb, 0)
        if not k:
            continue
        S[qb] = s[:k].copy()
        for rk, (r0, rs, shape) in rows.items():
            ublocks[rk + (qb,)] = u[r0:r0 + rs, :k].reshape(shape + (k,))
        for ck, (c0, cs, shape) in cols.items():
            vblocks[(qb,) + ck] = vh[:k, c0:c0 + cs].reshape((k,) + shape)
    U = SymTensor(rlegs + [bond], ublocks, nU, t.dtype, check=False)
    V = SymTensor([bond.conj()] + clegs, vblocks, t.n - nU, t.dtype, check=False)
    return U, S, V, float(rel_err)


def qr(t: SymTensor, row_axes, col_axes, sQ=-1):
    """Reduced QR per sector: ``t = Q R`` with ``Q`` isometric, total charge 0."""
    row_axes, col_axes = list(row_axes), list(col_axes)
    rlegs = [t.legs[i] for i in row_axes]
    clegs = [t.legs[i] for i in col_axes]
    qblocks, rblocks, counts = {}, {}, {}
    for q, m, rows, cols in _sector_matrices(t, row_axes, col_axes):
        qm, rm = np.linalg.qr(m)
        k = qm.shape[1]
        qb = -q * sQ
        counts[qb] = k
        for rk, (r0, rs, shape) in rows.items():
            qblocks[rk + (qb,)] = qm[r0:r0 + rs].reshape(shape + (k,))
        for ck, (c0, cs, shape) in cols.items():
            rblocks[(qb,) + ck] = rm[:, c0:c0 + cs].reshape((k,) + shape)
    bond = Leg.from_dict(counts, sig=sQ)
    Q = SymTensor(rlegs + [bond], qblocks, 0, t.dtype, check=False)
    R = SymTensor([bond.conj()] + clegs, rblocks, t.n, t.dtype, check=False)
    return Q, R


def _square_sectors(t, row_axes, col_axes):
    """Square per-sector matrices for an operator whose rows and columns are dual."""
    rlegs = [t.legs[i] for i in row_axes]
    clegs = [t.legs[i] for i in col_axes]
    if rlegs != [l.conj() for l in clegs] or t.n != 0:
        raise LegMismatchError("row and column legs must be mutually conjugate with n = 0")
    groups = _group(t, row_axes, col_axes)
    for q in sorted(groups):
        ent = groups[q]
        keys = sorted({e[0] for e in ent} | {e[1] for e in ent})
        idx, nd = _index(keys, rlegs)
        yield q, _assemble(ent, idx, nd, idx, nd, t.dtype), idx


def eigh(t: SymTensor, row_axes, col_axes):
    """Eigen-decomposition of a Hermitian operator, sector by sector.

    Returns ``(w, V)``: ``w`` maps bond charge to ascending eigenvalues and
    ``V`` has legs ``row legs + [bond]``.
    """
    row_axes, col_axes = list(row_axes), list(col_axes)
    rlegs = [t.legs[i] for i in row_axes]
    w, vblocks, counts = {}, {}, {}
    for q, m, idx in _square_sectors(t, row_axes, col_axes):
        m = 0.5 * (m + m.conj().T)
        vals, vecs = np.linalg.eigh(m)
        qb = q
        w[qb] = vals
        counts[qb] = len(vals)
        for rk, (r0, rs, shape) in idx.items():
            vblocks[rk + (qb,)] = vecs[r0:r0 + rs].reshape(shape + (len(vals),))
    bond = Leg.from_dict(counts, sig=-1)
    return w, SymTensor(rlegs + [bond], vblocks, 0, t.dtype, check=False)


def pinv_hermitian(t: SymTensor, row_axes, col_axes, floor=1e-12):
    """Pseudo-inverse of a Hermitian operator with eigenvalues below
    ``floor * lambda_max`` dropped.  Same legs as ``t``."""
    row_axes, col_axes = list(row_axes), list(col_axes)
    sectors = list(_square_sectors(t, row_axes, col_axes))
    decomps = []
    lmax = 0.0
    for q, m, idx in sectors:
        m = 0.5 * (m + m.conj().T)
        vals, vecs = np.linalg.eigh(m)
        decomps.append((vals, vecs, idx))
        if len(vals):
            lmax = max(lmax, float(np.max(np.abs(vals))))
    blocks = {}
    perm = np.argsort(row_axes + col_axes)
    for vals, vecs, idx in decomps:
        good = vals > floor * lmax
        inv = (vecs[:, good] / vals[good]) @ vecs[:, good].conj().T
        for rk, (r0, rs, rshape) in idx.items():
            for ck, (c0, cs, cshape) in idx.items():
                blk = inv[r0:r0 + rs, c0:c0 + cs].reshape(rshape + cshape)
                key = rk + ck
                blocks[tuple(key[i] for i in perm)] = blk.transpose(perm)
    return SymTensor(t.legs, blocks, 0, t.dtype, check=False)


def scale_leg(t: SymTensor, axis: int, weights: dict, power: float = 1.0) -> SymTensor:
    """Multiply slices along ``axis`` by ``weights[charge] ** power``."""
    axis %= t.ndim
    blocks = {}
    for k, b in t.blocks.items():
        w = weights.get(k[axis])
        if w is None:
            continue
        shape = [1] * t.ndim
        shape[axis] = len(w)
        blocks[k] = b * (np.asarray(w) ** power).reshape(shape)
    return SymTensor(t.legs, blocks, t.n, np.result_type(t.dtype, np.float64), check=False)


def trace_vector(leg: Leg, dtype=np.float64) -> SymTensor:
    """Vector on ``leg.conj()`` that closes a fused ket-bra leg with a delta."""
    if len(leg.sub) != 2 or leg.sub[1] != leg.sub[0].conj():
        raise ValueError("trace_vector needs a fused (ket, bra) leg")
    ket = leg.sub[0]
    e = SymTensor.eye(ket.conj(), dtype)
    return fuse_legs(e, [(0, 1)])


# ---- serialization ----------------------------------------------------------

_MAGIC = b"SYMT"
_VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def _write_leg(buf, leg):
    buf.write(struct.pack("<bI", leg.sig, len(leg.charges)))
    buf.write(np.asarray(leg.charges, dtype="<i8").tobytes())
    buf.write(np.asarray(leg.dims, dtype="<i8").tobytes())
    buf.write(struct.pack("<H", len(leg.sub)))
    for s in leg.sub:
        _write_leg(buf, s)


def _read_exact(buf, n):
    data = buf.read(n)
    if len(data) != n:
        raise ValueError("truncated SymTensor stream")
    return data


def _read_leg(buf):
    sig, ns = struct.unpack("<bI", _read_exact(buf, 5))
    charges = np.frombuffer(_read_exact(buf, 8 * ns), dtype="<i8")
    dims = np.frombuffer(_read_exact(buf, 8 * ns), dtype="<i8")
    (nsub,) = struct.unpack("<H", _read_exact(buf, 2))
    sub = tuple(_read_leg(buf) for _ in range(nsub))
    return Leg(sig, tuple(charges.tolist()), tuple(dims.tolist()), sub)


def save(t: SymTensor, f) -> None:
    """Write ``t`` to a binary stream (format documented in docs/symtensor_format.md)."""
    code = 1 if np.iscomplexobj(np.zeros(0, t.dtype)) else 0
    dt = _DTYPES[code]
    f.write(_MAGIC)
    f.write(struct.pack("<HBHq", _VERSION, code, t.ndim, t.n))
    for leg in t.legs:
        _write_leg(f, leg)
    f.write(struct.pack("<Q", len(t.blocks)))
    for key in sorted(t.blocks):
        f.write(np.asarray(key, dtype="<i8").tobytes())
        f.write(np.ascontiguousarray(t.blocks[key], dtype=dt).tobytes())


def load(f) -> SymTensor:
    if _read_exact(f, 4) != _MAGIC:
        raise ValueError("not a SymTensor stream")
    version, code, ndim, n = struct.unpack("<HBHq", _read_exact(f, 13))
    if version != _VERSION:
        raise ValueError(f"unsupported SymTensor format version {version}")
    dt = _DTYPES[code]
    legs = [_read_leg(f) for _ in range(ndim)]
    (nb,) = struct.unpack("<Q", _read_exact(f, 8))
    blocks = {}
    for _ in range(nb):
        key = tuple(np.frombuffer(_read_exact(f, 8 * ndim), dtype="<i8").tolist())
        shape = tuple(l.dim_of(q) for l, q in zip(legs, key))
        size = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(_read_exact(f, size * dt.itemsize), dtype=dt).reshape(shape)
        blocks[key] = data.astype(dt.newbyteorder("="))
    return SymTensor(legs, blocks, n, dt.newbyteorder("="))


def to_bytes(t: SymTensor) -> bytes:
    buf = io.BytesIO()
    save(t, buf)
    return buf.getvalue()


def from_bytes(data: bytes) -> SymTensor:
    return load(io.BytesIO(data))
