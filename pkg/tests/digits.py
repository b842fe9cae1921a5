"""Procedurally rendered 28x28 digit images for end-to-end tests.

Real handwritten-digit files are not available in the test environment, so
the pipeline tests render a stand-in corpus: seven-segment glyphs with random
stroke intensity, small random translation, and pixel noise, written through
the same IDX format the production loader parses. Digit 1 (the positive
instance class for bag labeling) renders as the two right-hand verticals,
clearly distinct from every other class.
"""

import numpy as np

SIZE = 28

# segment name -> (row slice, col slice) on the canonical 28x28 canvas
_SEGS = {
    "A": (slice(4, 6), slice(9, 19)),     # top bar
    "B": (slice(5, 14), slice(17, 19)),   # top-right vertical
    "C": (slice(14, 23), slice(17, 19)),  # bottom-right vertical
    "D": (slice(22, 24), slice(9, 19)),   # bottom bar
    "E": (slice(14, 23), slice(9, 11)),   # bottom-left vertical
    "F": (slice(5, 14), slice(9, 11)),    # top-left vertical
    "G": (slice(13, 15), slice(9, 19)),   # middle bar
}

_DIGIT_SEGS = {
    0: "ABCDEF",
    1: "BC",
    2: "ABGED",
    3: "ABGCD",
    4: "FGBC",
    5: "AFGCD",
    6: "AFGEDC",
    7: "ABC",
    8: "ABCDEFG",
    9: "ABCDFG",
}


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One noisy uint8 image [28, 28] of the requested digit."""
    canvas = np.zeros((SIZE, SIZE), dtype=np.float64)
    intensity = rng.uniform(0.55, 1.0)
    for seg in _DIGIT_SEGS[digit]:
        rows, cols = _SEGS[seg]
        canvas[rows, cols] = intensity
    dr, dc = rng.integers(-2, 3, size=2)
    canvas = np.roll(np.roll(canvas, dr, axis=0), dc, axis=1)
    canvas += rng.normal(0.0, 0.04, size=canvas.shape)
    return (np.clip(canvas, 0.0, 1.0) * 255).astype(np.uint8)


def render_corpus(per_class: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """(images uint8 [N,28,28], labels uint8 [N]) with per_class of each digit."""
    rng = np.random.default_rng(seed)
    images = np.empty((per_class * 10, SIZE, SIZE), dtype=np.uint8)
    labels = np.empty(per_class * 10, dtype=np.uint8)
    i = 0
    for digit in range(10):
        for _ in range(per_class):
            images[i] = render_digit(digit, rng)
            labels[i] = digit
            i += 1
    order = rng.permutation(i)
    return images[order], labels[order]
