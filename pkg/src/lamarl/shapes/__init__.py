"""Built-in target shapes: the 26 capital letters and a square.

Letters come from a 5x7 bitmap font, upscaled by ``LETTER_UPSCALE`` and with
diagonal-only joints filled so every glyph is one 4-connected component.
The ``letters/`` and ``desk/`` directories ship the rendered ASCII grids.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..region import GridRegion, region_from_mask, to_ascii

SHAPES_DIR = Path(__file__).parent
LETTERS_DIR = SHAPES_DIR / "letters"
DESK_DIR = SHAPES_DIR / "desk"
LETTER_UPSCALE = 2

_FONT = {
    "A": [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "B": ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
    "C": [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
    "D": ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
    "E": ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
    "F": ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
    "G": [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"],
    "H": ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    "I": [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."],
    "J": ["..###", "...#.", "...#.", "...#.", "#..#.", "#..#.", ".##.."],
    "K": ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
    "L": ["#....", "#....", "#....", "#....", "#....", "#....", "#####"],
    "M": ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"],
    "N": ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"],
    "O": [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "P": ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."],
    "Q": [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"],
    "R": ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"],
    "S": [".####", "#....", "#....", ".###.", "....#", "....#", "####."],
    "T": ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
    "U": ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."],
    "V": ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."],
    "W": ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."],
    "X": ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"],
    "Y": ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."],
    "Z": ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"],
}


def _fill_diagonal_joints(mask: np.ndarray) -> np.ndarray:
    mask = mask.copy()
    changed = True
    while changed:
        changed = False
        a, b = mask[:-1, :-1], mask[:-1, 1:]
        c, d = mask[1:, :-1], mask[1:, 1:]
        falling = a & d & ~b & ~c  # "\" joint: fill the lower-left cell
        rising = b & c & ~a & ~d  # "/" joint: fill the lower-right cell
        if falling.any():
            rr, cc = np.nonzero(falling)
            mask[rr + 1, cc] = True
            changed = True
        if rising.any():
            rr, cc = np.nonzero(rising)
            mask[rr + 1, cc + 1] = True
            changed = True
    return mask


def letter_mask(letter: str, upscale: int = LETTER_UPSCALE) -> np.ndarray:
    glyph = np.array([[ch == "#" for ch in row] for row in _FONT[letter.upper()]], dtype=bool)
    big = np.kron(glyph, np.ones((upscale, upscale), dtype=bool))
    return _fill_diagonal_joints(big)


def letter_region(letter: str, scale: float) -> GridRegion:
    return region_from_mask(letter_mask(letter), scale, name=letter.upper())


def builtin_letters(scale: float) -> list[GridRegion]:
    return [letter_region(ch, scale) for ch in sorted(_FONT)]


def square_region(side_cells: int, scale: float) -> GridRegion:
    return region_from_mask(np.ones((side_cells, side_cells), dtype=bool), scale, name=f"square{side_cells}")


def write_builtin_shapes() -> None:
    """Regenerate the shipped ASCII files from the font table."""
    LETTERS_DIR.mkdir(exist_ok=True)
    DESK_DIR.mkdir(exist_ok=True)
    for region in builtin_letters(1.0):
        (LETTERS_DIR / f"{region.name}.txt").write_text(to_ascii(region), encoding="utf-8")
    (DESK_DIR / "square6.txt").write_text(to_ascii(square_region(6, 1.0)), encoding="utf-8")
