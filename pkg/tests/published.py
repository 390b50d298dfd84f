"""Reference values printed alongside the dispersion results."""

# published v*(n_t, T) for n_t <= T <= 8: exact values or [lower, upper]
VSTAR_TABLE = {
    (1, 1): 1, (1, 2): 2, (1, 3): 3, (1, 4): 4, (1, 5): 5, (1, 6): 6, (1, 7): 7, (1, 8): 8,
    (2, 2): 8, (2, 3): 10, (2, 4): 16, (2, 5): 18, (2, 6): 24, (2, 7): 26, (2, 8): 32,
    (3, 3): 21, (3, 4): 36, (3, 5): (39, 45), (3, 6): (46, 54), (3, 7): (57, 63), (3, 8): 72,
    (4, 4): 64, (4, 5): (68, 80), (4, 6): (80, 96), (4, 7): (100, 112), (4, 8): 128,
    (5, 5): (89, 125), (5, 6): (118, 150), (5, 7): (155, 175), (5, 8): 200,
    (6, 6): (168, 216), (6, 7): (222, 252), (6, 8): 288,
    (7, 7): (301, 343), (7, 8): 392,
    (8, 8): 512,
}  # fmt: skip
