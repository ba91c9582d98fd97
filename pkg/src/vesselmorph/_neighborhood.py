"""3x3 neighborhood lookup tables and the pure-Python thinning kernel.

A neighborhood is encoded as an 8-bit integer, one bit per neighbor, walking
clockwise from north::

    bit 7 (NW)  bit 0 (N)  bit 1 (NE)
    bit 6 (W)       P      bit 2 (E)
    bit 5 (SW)  bit 4 (S)  bit 3 (SE)

The same tables drive the compiled kernel, so both backends produce
identical skeletons.
"""
import numpy as np

# (drow, dcol) for bits 0..7
OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def _bits(code):
    return [(code >> k) & 1 for k in range(8)]


def _crossings(bits):
    return sum(1 for k in range(8) if bits[k] == 0 and bits[(k + 1) % 8] == 1)


def _components(cells, adjacent):
    cells = list(cells)
    seen = set()
    comps = []
    for c in cells:
        if c in seen:
            continue
        stack = [c]
        seen.add(c)
        comp = []
        while stack:
            a = stack.pop()
            comp.append(a)
            for b in cells:
                if b not in seen and adjacent(a, b):
                    seen.add(b)
                    stack.append(b)
        comps.append(comp)
    return comps


def is_simple(code):
    """True if deleting the centre pixel preserves topology.

    Foreground uses 8-connectivity, background 4-connectivity.
    """
    bits = _bits(code)
    fg = [OFFSETS[k] for k in range(8) if bits[k]]
    bg = [OFFSETS[k] for k in range(8) if not bits[k]]

    def adj8(a, b):
        return max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1

    def adj4(a, b):
        return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1

    if len(_components(fg, adj8)) != 1:
        return False
    four = {(-1, 0), (0, 1), (1, 0), (0, -1)}
    touching = [c for c in _components(bg, adj4) if four.intersection(c)]
    return len(touching) == 1


def _end_guard(b):
    """Neighbours spread over at least two direction pairs (thick line tips fail this)."""
    n, ne, e, se, s, sw, w, nw = b
    n1 = (e | ne) + (n | nw) + (w | sw) + (s | se)
    n2 = (ne | n) + (nw | w) + (sw | s) + (se | e)
    return min(n1, n2) >= 2


def _build_tables():
    zs1 = np.zeros(256, dtype=np.uint8)
    zs2 = np.zeros(256, dtype=np.uint8)
    post = np.zeros(256, dtype=np.uint8)
    simple = np.zeros(256, dtype=np.uint8)
    degree = np.zeros(256, dtype=np.uint8)
    for code in range(256):
        b = _bits(code)
        n, e, s, w = b[0], b[2], b[4], b[6]
        count = sum(b)
        degree[code] = count
        simple[code] = is_simple(code)
        base = 2 <= count <= 6 and _crossings(b) == 1 and _end_guard(b) and simple[code]
        if base and n * e * s == 0 and e * s * w == 0:
            zs1[code] = 1
        if base and n * e * w == 0 and n * s * w == 0:
            zs2[code] = 1
        if count >= 2 and simple[code] and _end_guard(b):
            post[code] = 1
    return zs1, zs2, post, simple, degree


ZS_STEP1, ZS_STEP2, POST, SIMPLE, DEGREE = _build_tables()

# masks clearing the east, west, south and north neighbour bits
_NOT_E, _NOT_W, _NOT_S, _NOT_N = (np.uint8(0xFF ^ (1 << k)) for k in (2, 6, 4, 0))


def neighborhood_codes(img):
    """Vectorised neighborhood code of every pixel of a 0/1 uint8 image."""
    padded = np.pad(img, 1)
    h, w = img.shape
    codes = np.zeros((h, w), dtype=np.uint8)
    for k, (dr, dc) in enumerate(OFFSETS):
        codes |= padded[1 + dr:1 + dr + h, 1 + dc:1 + dc + w] << k
    return codes


def _code_at(img, r, c):
    code = 0
    for k, (dr, dc) in enumerate(OFFSETS):
        if img[r + dr, c + dc]:
            code |= 1 << k
    return code


def deletable(img, table):
    """Pixels one parallel subiteration removes.

    Candidates come from ``table``. A 4-adjacent candidate pair is held back
    when either pixel would stop being simple once the other is gone, and an
    isolated 2x2 block is never removed whole; with those two checks the
    simultaneous deletion cannot change topology.
    """
    codes = neighborhood_codes(img)
    cand = (img == 1) & (table[codes] == 1)
    hold = np.zeros_like(cand)
    pair = cand[:, :-1] & cand[:, 1:]
    bad = pair & ~((SIMPLE[codes[:, :-1] & _NOT_E] == 1) & (SIMPLE[codes[:, 1:] & _NOT_W] == 1))
    hold[:, :-1] |= bad
    hold[:, 1:] |= bad
    pair = cand[:-1, :] & cand[1:, :]
    bad = pair & ~((SIMPLE[codes[:-1, :] & _NOT_S] == 1) & (SIMPLE[codes[1:, :] & _NOT_N] == 1))
    hold[:-1, :] |= bad
    hold[1:, :] |= bad
    three = cand & (DEGREE[codes] == 3)
    sq = three[:-1, :-1] & three[:-1, 1:] & three[1:, :-1] & three[1:, 1:]
    hold[:-1, :-1] |= sq
    hold[:-1, 1:] |= sq
    hold[1:, :-1] |= sq
    hold[1:, 1:] |= sq
    return cand & ~hold


def thin_py(img):
    """Pure-Python thinning on a padded 0/1 uint8 image (modified in place).

    Zhang-Suen subiterations run in parallel until stable (see ``deletable``),
    then a raster pass removes the remaining simple non-end pixels (staircase
    corners, pairs held back above) until stable.
    Returns the number of Zhang-Suen iterations.
    """
    iterations = 0
    while True:
        deleted = 0
        for table in (ZS_STEP1, ZS_STEP2):
            gone = deletable(img, table)
            img[gone] = 0
            deleted += int(gone.sum())
        iterations += 1
        if not deleted:
            break
    while True:
        deleted = 0
        rows, cols = np.nonzero(img)
        for r, c in zip(rows.tolist(), cols.tolist()):
            if img[r, c] and POST[_code_at(img, r, c)]:
                img[r, c] = 0
                deleted += 1
        if not deleted:
            break
    return iterations
