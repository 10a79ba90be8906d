'''
Coordinate <-> text codec.

A point is rendered as "<loc>x, y, z</loc>" and a box as "<obj>cx, cy, cz, w, h, l</obj>",
every value an unsigned integer in [0, 255] relative to the scene bounds.
'''
import math
from dataclasses import dataclass

import regex

from utils.errors import DataError
from utils.geometry import Box3D, SceneBounds

LEVELS = 255
ARITY = {'point': 3, 'box': 6}
TAGS = {'point': 'loc', 'box': 'obj'}
KINDS = {'loc': 'point', 'obj': 'box'}

SPAN_RE = regex.compile(r"<(loc|obj)>(.*?)</\1>", regex.DOTALL)
INT_RE = regex.compile(r"[0-9]+")


def _check_bounds(bounds):
    lo, hi = bounds
    if not hi > lo:
        raise DataError("degenerate axis bounds ({}, {})".format(lo, hi))
    return float(lo), float(hi)


def quantize_coord(x, bounds):
    ''' round-half-up of (x - lo) / (hi - lo) * 255, clamped to [0, 255] '''
    lo, hi = _check_bounds(bounds)
    q = math.floor((float(x) - lo) / (hi - lo) * LEVELS + 0.5)
    return min(LEVELS, max(0, q))


def dequantize_coord(q, bounds):
    lo, hi = _check_bounds(bounds)
    if isinstance(q, bool) or int(q) != q or not 0 <= q <= LEVELS:
        raise DataError("quantized coordinate {} outside [0, {}]".format(q, LEVELS))
    return lo + (int(q) / LEVELS) * (hi - lo)


@dataclass(frozen=True)
class SpatialToken:
    kind: str
    values: tuple

    def __post_init__(self):
        if self.kind not in ARITY:
            raise DataError("unknown spatial token kind {!r}".format(self.kind))
        values = tuple(self.values)
        if len(values) != ARITY[self.kind]:
            raise DataError("{} token needs {} values, got {}".format(self.kind, ARITY[self.kind], len(values)))
        for v in values:
            if isinstance(v, bool) or int(v) != v or not 0 <= v <= LEVELS:
                raise DataError("spatial value {} outside [0, {}]".format(v, LEVELS))
        if self.kind == 'box' and min(values[3:]) < 1:
            raise DataError("box size values must be >= 1, got {}".format(values[3:]))
        object.__setattr__(self, 'values', tuple(int(v) for v in values))


def render_spatial(token):
    tag = TAGS[token.kind]
    return "<{}>{}</{}>".format(tag, ", ".join(str(v) for v in token.values), tag)


def parse_spatial(text):
    '''
    Returns (tokens, skipped): every well-formed loc/obj span in order of appearance,
    and the number of spans dropped for wrong arity, non-integer or out-of-range values.
    '''
    tokens, skipped = [], 0
    for match in SPAN_RE.finditer(text):
        kind = KINDS[match.group(1)]
        parts = [p.strip() for p in match.group(2).split(",")]
        if not all(INT_RE.fullmatch(p) for p in parts):
            skipped += 1
            continue
        try:
            tokens.append(SpatialToken(kind, tuple(int(p) for p in parts)))
        except DataError:
            skipped += 1
    return tokens, skipped


def point_to_token(point, bounds):
    return SpatialToken('point', tuple(quantize_coord(point[i], bounds.axis(i)) for i in range(3)))


def box_to_token(box, bounds):
    ''' center quantized against the bounds, size against the extent with a floor of 1 '''
    center = [quantize_coord(box.center[i], bounds.axis(i)) for i in range(3)]
    extent = bounds.extent
    size = [min(LEVELS, max(1, math.floor(box.size[i] / extent[i] * LEVELS + 0.5))) for i in range(3)]
    return SpatialToken('box', tuple(center + size))


def token_to_box(token, bounds):
    if token.kind != 'box':
        raise DataError("expected a box token, got {}".format(token.kind))
    extent = bounds.extent
    center = [dequantize_coord(token.values[i], bounds.axis(i)) for i in range(3)]
    size = [token.values[3 + i] / LEVELS * extent[i] for i in range(3)]
    return Box3D(center, size)


def render_box(box, bounds):
    return render_spatial(box_to_token(box, bounds))


def parse_boxes(text, bounds):
    ''' every box span of text as a Box3D in scene coordinates '''
    tokens, skipped = parse_spatial(text)
    return [token_to_box(t, bounds) for t in tokens if t.kind == 'box'], skipped


if __name__ == '__main__':
    bounds = SceneBounds((0, 0, 0), (10, 10, 3))
    text = "the chair is at " + render_box(Box3D((5, 5, 0.5), (1, 1, 1)), bounds) + "."
    print(text)
    print(parse_boxes(text, bounds))
