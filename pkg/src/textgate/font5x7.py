"""Built-in 5x7 bitmap font for the 36 alphanumeric glyphs.

Kept in-repo so rendering is hermetic and deterministic. Each glyph is
seven 5-character rows; '#' marks a lit cell.
"""

import numpy as np

_GLYPHS = {
    "a": (".....",
          ".....",
          ".###.",
          "....#",
          ".####",
          "#...#",
          ".####"),
    "b": ("#....",
          "#....",
          "#.##.",
          "##..#",
          "#...#",
          "##..#",
          "#.##."),
    "c": (".....",
          ".....",
          ".###.",
          "#....",
          "#....",
          "#....",
          ".###."),
    "d": ("....#",
          "....#",
          ".##.#",
          "#..##",
          "#...#",
          "#..##",
          ".##.#"),
    "e": (".....",
          ".....",
          ".###.",
          "#...#",
          "#####",
          "#....",
          ".###."),
    "f": ("..##.",
          ".#..#",
          ".#...",
          "###..",
          ".#...",
          ".#...",
          ".#..."),
    "g": (".....",
          ".####",
          "#...#",
          "#...#",
          ".####",
          "....#",
          ".###."),
    "h": ("#....",
          "#....",
          "#.##.",
          "##..#",
          "#...#",
          "#...#",
          "#...#"),
    "i": ("..#..",
          ".....",
          ".##..",
          "..#..",
          "..#..",
          "..#..",
          ".###."),
    "j": ("...#.",
          ".....",
          "..##.",
          "...#.",
          "...#.",
          "#..#.",
          ".##.."),
    "k": ("#....",
          "#....",
          "#..#.",
          "#.#..",
          "##...",
          "#.#..",
          "#..#."),
    "l": (".##..",
          "..#..",
          "..#..",
          "..#..",
          "..#..",
          "..#..",
          ".###."),
    "m": (".....",
          ".....",
          "##.#.",
          "#.#.#",
          "#.#.#",
          "#.#.#",
          "#.#.#"),
    "n": (".....",
          ".....",
          "#.##.",
          "##..#",
          "#...#",
          "#...#",
          "#...#"),
    "o": (".....",
          ".....",
          ".###.",
          "#...#",
          "#...#",
          "#...#",
          ".###."),
    "p": (".....",
          "#.##.",
          "##..#",
          "#...#",
          "##..#",
          "#.##.",
          "#...."),
    "q": (".....",
          ".##.#",
          "#..##",
          "#...#",
          "#..##",
          ".##.#",
          "....#"),
    "r": (".....",
          ".....",
          "#.##.",
          "##..#",
          "#....",
          "#....",
          "#...."),
    "s": (".....",
          ".....",
          ".####",
          "#....",
          ".###.",
          "....#",
          "####."),
    "t": (".#...",
          ".#...",
          "###..",
          ".#...",
          ".#...",
          ".#..#",
          "..##."),
    "u": (".....",
          ".....",
          "#...#",
          "#...#",
          "#...#",
          "#..##",
          ".##.#"),
    "v": (".....",
          ".....",
          "#...#",
          "#...#",
          "#...#",
          ".#.#.",
          "..#.."),
    "w": (".....",
          ".....",
          "#...#",
          "#.#.#",
          "#.#.#",
          "#.#.#",
          ".#.#."),
    "x": (".....",
          ".....",
          "#...#",
          ".#.#.",
          "..#..",
          ".#.#.",
          "#...#"),
    "y": (".....",
          "#...#",
          "#...#",
          ".#..#",
          "..##.",
          "...#.",
          ".##.."),
    "z": (".....",
          ".....",
          "#####",
          "...#.",
          "..#..",
          ".#...",
          "#####"),
    "0": (".###.",
          "#...#",
          "#..##",
          "#.#.#",
          "##..#",
          "#...#",
          ".###."),
    "1": ("..#..",
          ".##..",
          "..#..",
          "..#..",
          "..#..",
          "..#..",
          ".###."),
    "2": (".###.",
          "#...#",
          "....#",
          "...#.",
          "..#..",
          ".#...",
          "#####"),
    "3": (".###.",
          "#...#",
          "....#",
          "..##.",
          "....#",
          "#...#",
          ".###."),
    "4": ("...#.",
          "..##.",
          ".#.#.",
          "#..#.",
          "#####",
          "...#.",
          "...#."),
    "5": ("#####",
          "#....",
          "####.",
          "....#",
          "....#",
          "#...#",
          ".###."),
    "6": ("..##.",
          ".#...",
          "#....",
          "####.",
          "#...#",
          "#...#",
          ".###."),
    "7": ("#####",
          "....#",
          "...#.",
          "...#.",
          "..#..",
          "..#..",
          "..#.."),
    "8": (".###.",
          "#...#",
          "#...#",
          ".###.",
          "#...#",
          "#...#",
          ".###."),
    "9": (".###.",
          "#...#",
          "#...#",
          ".####",
          "....#",
          "...#.",
          ".##.."),
}

GLYPH_H = 7
GLYPH_W = 5

BITMAPS = {
    c: np.array([[cell == "#" for cell in row] for row in rows], dtype=bool)
    for c, rows in _GLYPHS.items()
}


def lit_cells(c):
    """Number of lit cells in one glyph bitmap."""
    return int(BITMAPS[c].sum())
