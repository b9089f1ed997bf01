"""SDPA sparse format (``.dat-s``) reader and writer.

SDPA's dual problem is ``max F0 . Y  s.t.  Fi . Y = ci,  Y PSD`` with a
block-diagonal ``Y``; a negative block size declares a diagonal (LP) block.
A :class:`ConicStandardForm` maps onto it directly: ``ci = b_i``,
``Fi = A_i`` and ``F0 = C`` (``-C`` for minimisation).  Nonnegative scalars
and split free scalars share one trailing diagonal block ordered as
``[nonneg..., free+..., free-...]`` with ``x_free = free+ - free-``.

Comment lines before the header record the objective sense, constant offset
and the free-variable split so that :func:`parse_sdpa` inverts
:func:`export_sdpa`.
"""

from __future__ import annotations

import io
import os
import re
from pathlib import Path
from typing import List, TextIO, Union

import numpy as np

from .conic import ConicStandardForm


class SdpaParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fmt(v: float) -> str:
    return repr(float(v))


def dumps_sdpa(form: ConicStandardForm) -> str:
    form.check()
    nb = len(form.block_sizes)
    n_lp = form.n_nonneg + 2 * form.n_free
    has_lp = n_lp > 0
    sign = 1.0 if form.sense == "max" else -1.0

    lines: List[str] = []
    lines.append(f'"wassos sense={form.sense} offset={_fmt(form.offset)} '
                 f'nonneg={form.n_nonneg} free={form.n_free}"')
    lines.append(f"{form.m}")
    lines.append(f"{nb + (1 if has_lp else 0)}")
    struct = [str(n) for n in form.block_sizes]
    if has_lp:
        struct.append(str(-n_lp))
    lines.append(" ".join(struct))
    lines.append(" ".join(_fmt(v) for v in form.b))

    lp_blk = nb + 1
    entries = []  # (matno, blk, i, j, value), 1-based

    for blk, i, j, v in zip(form.c_psd_blk, form.c_psd_i, form.c_psd_j, form.c_psd_val):
        entries.append((0, int(blk) + 1, int(i) + 1, int(j) + 1, sign * v))
    for k, v in enumerate(form.c_nonneg):
        if v != 0.0:
            entries.append((0, lp_blk, k + 1, k + 1, sign * v))
    base_p = form.n_nonneg
    base_m = form.n_nonneg + form.n_free
    for k, v in enumerate(form.c_free):
        if v != 0.0:
            entries.append((0, lp_blk, base_p + k + 1, base_p + k + 1, sign * v))
            entries.append((0, lp_blk, base_m + k + 1, base_m + k + 1, -sign * v))

    for r, blk, i, j, v in zip(form.psd_row, form.psd_blk, form.psd_i, form.psd_j, form.psd_val):
        entries.append((int(r) + 1, int(blk) + 1, int(i) + 1, int(j) + 1, v))
    for r, c, v in zip(form.lin_row, form.lin_col, form.lin_val):
        entries.append((int(r) + 1, lp_blk, int(c) + 1, int(c) + 1, v))
    for r, c, v in zip(form.free_row, form.free_col, form.free_val):
        entries.append((int(r) + 1, lp_blk, base_p + int(c) + 1, base_p + int(c) + 1, v))
        entries.append((int(r) + 1, lp_blk, base_m + int(c) + 1, base_m + int(c) + 1, -v))

    # merge duplicates so the file is canonical
    merged = {}
    for mat, blk, i, j, v in entries:
        key = (mat, blk, i, j)
        merged[key] = merged.get(key, 0.0) + float(v)
    for key in sorted(merged):
        v = merged[key]
        if v == 0.0:
            continue
        lines.append(f"{key[0]} {key[1]} {key[2]} {key[3]} {_fmt(v)}")
    return "\n".join(lines) + "\n"


def export_sdpa(form: ConicStandardForm, destination: Union[str, os.PathLike, TextIO]) -> None:
    text = dumps_sdpa(form)
    if hasattr(destination, "write"):
        destination.write(text)
        return
    with open(destination, "w", newline="\n") as fh:
        fh.write(text)


_META = re.compile(
    r"wassos sense=(?P<sense>min|max) offset=(?P<offset>\S+) "
    r"nonneg=(?P<nonneg>\d+) free=(?P<free>\d+)"
)


def _numbers(line: str) -> List[str]:
    return [t for t in re.split(r"[\s,{}()]+", line.strip()) if t]


def loads_sdpa(text: str) -> ConicStandardForm:
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    pos = 0
    meta = None
    while pos < len(lines) and (not lines[pos].strip() or lines[pos].lstrip()[0] in '"*'):
        mm = _META.search(lines[pos])
        if mm:
            meta = mm
        pos += 1

    def header_value(kind: str):
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise SdpaParseError(f"missing {kind}", pos + 1)
        line = lines[pos]
        pos += 1
        return line

    try:
        lineno = pos + 1
        m = int(_numbers(header_value("constraint count"))[0])
        lineno = pos + 1
        nblocks = int(_numbers(header_value("block count"))[0])
        lineno = pos + 1
        struct = [int(t) for t in _numbers(header_value("block structure"))] if nblocks else []
        if nblocks == 0:
            pass
        if len(struct) < nblocks:
            raise SdpaParseError("block structure too short", lineno)
        struct = struct[:nblocks]
        lineno = pos + 1
        if m:
            cvals = [float(t) for t in _numbers(header_value("objective vector"))]
        else:
            # an empty c line may be present
            while pos < len(lines) and not lines[pos].strip():
                pos += 1
            cvals = []
        if len(cvals) < m:
            raise SdpaParseError("objective vector too short", lineno)
    except SdpaParseError:
        raise
    except (ValueError, IndexError) as exc:
        raise SdpaParseError(f"malformed header ({exc})", pos) from None

    entries = []
    for k in range(pos, len(lines)):
        toks = _numbers(lines[k])
        if not toks:
            continue
        if len(toks) != 5:
            raise SdpaParseError("expected 5 fields", k + 1)
        try:
            mat, blk, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
        except ValueError:
            raise SdpaParseError("malformed entry", k + 1) from None
        if not (0 <= mat <= m) or not (1 <= blk <= nblocks):
            raise SdpaParseError("matrix or block index out of range", k + 1)
        size = abs(struct[blk - 1])
        if not (1 <= i <= size and 1 <= j <= size):
            raise SdpaParseError("entry index out of range", k + 1)
        if i > j:
            i, j = j, i
        if struct[blk - 1] < 0 and i != j:
            raise SdpaParseError("off-diagonal entry in a diagonal block", k + 1)
        entries.append((mat, blk, i, j, v))

    sense = "max"
    offset = 0.0
    n_nonneg_meta = None
    n_free = 0
    if meta:
        sense = meta.group("sense")
        offset = float(meta.group("offset"))
        n_nonneg_meta = int(meta.group("nonneg"))
        n_free = int(meta.group("free"))

    psd_blocks = [k for k, s in enumerate(struct) if s > 0]
    lp_blocks = [k for k, s in enumerate(struct) if s < 0]
    # several LP blocks are concatenated into one nonnegative segment
    lp_offset = {}
    total_lp = 0
    for k in lp_blocks:
        lp_offset[k] = total_lp
        total_lp += -struct[k]
    psd_index = {k: t for t, k in enumerate(psd_blocks)}
    if n_nonneg_meta is None:
        n_nonneg = total_lp
        n_free = 0
    else:
        n_nonneg = n_nonneg_meta
        if n_nonneg + 2 * n_free != total_lp:
            raise SdpaParseError("metadata does not match the diagonal block size", 1)
    sign = 1.0 if sense == "max" else -1.0

    psd = [[], [], [], [], []]
    cpsd = [[], [], [], []]
    lin = [[], [], []]
    fre = [[], [], []]
    c_nonneg = np.zeros(n_nonneg)
    c_free = np.zeros(n_free)
    for mat, blk, i, j, v in entries:
        k = blk - 1
        if struct[k] > 0:
            if mat == 0:
                cpsd[0].append(psd_index[k]); cpsd[1].append(i - 1); cpsd[2].append(j - 1)
                cpsd[3].append(sign * v)
            else:
                for lst, val in zip(psd, (mat - 1, psd_index[k], i - 1, j - 1, v)):
                    lst.append(val)
            continue
        idx = lp_offset[k] + i - 1
        if idx < n_nonneg:
            if mat == 0:
                c_nonneg[idx] += sign * v
            else:
                lin[0].append(mat - 1); lin[1].append(idx); lin[2].append(v)
        elif idx < n_nonneg + n_free:
            f = idx - n_nonneg
            if mat == 0:
                c_free[f] += sign * v
            else:
                fre[0].append(mat - 1); fre[1].append(f); fre[2].append(v)
        # the mirrored "free-" half carries no extra information

    return ConicStandardForm(
        block_sizes=[struct[k] for k in psd_blocks],
        n_nonneg=n_nonneg,
        n_free=n_free,
        b=np.array(cvals[:m], dtype=float),
        psd_row=psd[0], psd_blk=psd[1], psd_i=psd[2], psd_j=psd[3], psd_val=psd[4],
        lin_row=lin[0], lin_col=lin[1], lin_val=lin[2],
        free_row=fre[0], free_col=fre[1], free_val=fre[2],
        c_psd_blk=cpsd[0], c_psd_i=cpsd[1], c_psd_j=cpsd[2], c_psd_val=cpsd[3],
        c_nonneg=c_nonneg, c_free=c_free,
        sense=sense, offset=offset,
        meta={"free_split": n_free > 0},
    )


def parse_sdpa(source: Union[str, os.PathLike, TextIO]) -> ConicStandardForm:
    """Read a ``.dat-s`` file (path or open text stream)."""
    if hasattr(source, "read"):
        return loads_sdpa(source.read())
    return loads_sdpa(Path(source).read_text())
