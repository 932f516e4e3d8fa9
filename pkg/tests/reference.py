"""Reference numbers the acceptance suite compares against.

Rows are indexed by level; columns follow BETAS.  None marks a nonconverged
(dagger) cell.
"""

BETAS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)

DOF = {
    ("stationary", 3): 1062, ("stationary", 4): 4422, ("stationary", 5): 18054,
    ("cn", 2): 984, ("cn", 3): 8496, ("cn", 4): 70752,
    ("be", 2): 10086,
}

# Oseen iteration counts (the Stokes start counts as the first)
OSEEN = {
    ("stationary", 1 / 20): {3: (5, 5, 5, 5, 4, 4, 3), 4: (5, 5, 4, 4, 4, 4, 4)},
    ("stationary", 1 / 100): {3: (13, 9, 7, 5, 4, 4, 3), 4: (8, 6, 6, 5, 4, 4, 4)},
    ("be", 1 / 100): {2: (15, 8, 6, 5, 5, 5, 5), 3: (9, 8, 6, 5, 5, 5, 5)},
    ("be", 1 / 500): {2: (None, None, None, None, 10, 8, 8)},
    ("cn", 1 / 20): {2: (6, 6, 6, 6, 5, 4, 3), 3: (5, 5, 5, 6, 5, 4, 4),
                     4: (4, 4, 4, 4, 4, 4, 3)},
    ("cn", 1 / 100): {2: (12, 7, 7, 7, 5, 4, 4), 3: (8, 8, 6, 7, 6, 4, 4),
                      4: (6, 6, 5, 5, 4, 4, 3)},
}

# average outer FGMRES iterations per Oseen step
AVG_FGMRES = {
    ("stationary", 1 / 20): {3: (21, 19, 15, 12, 11, 10, 9),
                             4: (22, 20, 18, 15, 12, 11, 10)},
    ("stationary", 1 / 100): {3: (38, 24, 13, 11, 11, 9, 9),
                              4: (31, 24, 18, 12, 11, 11, 10)},
    ("be", 1 / 100): {2: (17, 14, 11, 11, 10, 12, 21),
                      3: (22, 19, 14, 11, 11, 13, 21),
                      4: (23, 22, 18, 14, 13, 15, 23)},
    ("cn", 1 / 20): {2: (16, 15, 12, 10, 9, 9, 8),
                     3: (18, 17, 15, 12, 10, 10, 9),
                     4: (18, 19, 18, 15, 12, 11, 10)},
    ("cn", 1 / 100): {2: (16, 13, 11, 10, 9, 9, 8),
                      3: (21, 19, 13, 10, 10, 9, 9),
                      4: (23, 22, 18, 12, 11, 10, 10)},
}

# manufactured Crank-Nicolson Stokes control: (it, v_err, zeta_err)
MANUFACTURED = {
    (2, 1.0): (22, 4.76e-1, 2.49e-1),
    (2, 1e-2): (22, 5.66e-1, 1.16e-1),
    (2, 1e-4): (16, 8.63e0, 5.45e-2),
    (3, 1.0): (22, 3.34e-2, 5.68e-2),
    (3, 1e-2): (22, 7.07e-2, 3.42e-2),
    (3, 1e-4): (19, 2.47e0, 2.67e-2),
    (4, 1.0): (23, 2.25e-3, 1.15e-2),
    (4, 1e-2): (24, 7.35e-3, 7.79e-3),
    (4, 1e-4): (20, 3.73e-1, 7.30e-3),
    (5, 1.0): (23, 1.74e-4, 2.15e-3),
}
