"""Pure-Python (numpy) geometry kernels; the reference for ``_geomkern``.

All functions take float64 ``(n, 3)`` coordinate arrays and int64 index
arrays and return float64 arrays in degrees / Angstrom plus uint8
degeneracy masks.
"""

from __future__ import annotations

import numpy as np

# sin of the angle below which a bond triple is treated as collinear
COLLINEAR_EPS = 1e-8
ZERO_LENGTH = 1e-12


def bond_lengths(pos, pairs):
    pos = np.asarray(pos, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    d = pos[pairs[:, 0]] - pos[pairs[:, 1]]
    return np.sqrt(np.einsum("ij,ij->i", d, d))


def bond_angles(pos, triples):
    pos = np.asarray(pos, dtype=np.float64)
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    u = pos[t[:, 0]] - pos[t[:, 1]]
    v = pos[t[:, 2]] - pos[t[:, 1]]
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    degenerate = (nu <= ZERO_LENGTH) | (nv <= ZERO_LENGTH)
    cross = np.linalg.norm(np.cross(u, v), axis=1)
    dot = np.einsum("ij,ij->i", u, v)
    ang = np.degrees(np.arctan2(cross, dot))
    ang[degenerate] = np.nan
    return ang, degenerate.astype(np.uint8)


def dihedrals(pos, quads):
    """Signed dihedral angles in (-180, 180]."""
    pos = np.asarray(pos, dtype=np.float64)
    q = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
    b1 = pos[q[:, 1]] - pos[q[:, 0]]
    b2 = pos[q[:, 2]] - pos[q[:, 1]]
    b3 = pos[q[:, 3]] - pos[q[:, 2]]
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    l1 = np.linalg.norm(b1, axis=1)
    l2 = np.linalg.norm(b2, axis=1)
    l3 = np.linalg.norm(b3, axis=1)
    m1 = np.linalg.norm(n1, axis=1)
    m2 = np.linalg.norm(n2, axis=1)
    degenerate = (
        (l1 <= ZERO_LENGTH) | (l2 <= ZERO_LENGTH) | (l3 <= ZERO_LENGTH)
        | (m1 <= COLLINEAR_EPS * l1 * l2) | (m2 <= COLLINEAR_EPS * l2 * l3)
    )
    x = np.einsum("ij,ij->i", n1, n2)
    y = l2 * np.einsum("ij,ij->i", b1, n2)
    phi = np.degrees(np.arctan2(y, x))
    phi[phi <= -180.0] = 180.0
    phi[degenerate] = np.nan
    return phi, degenerate.astype(np.uint8)


def angle_wrap(a, b):
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return np.minimum(d, 180.0 - d)


def torsion_wrap(a, b):
    d = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    return np.minimum(d, 360.0 - d)


def deviations(pos_a, pos_b, pairs, triples, quads):
    """Per-primitive deviations between two conformers.

    Returns ``(dr, dtheta, dtheta_raw, angle_degenerate, dphi, torsion_degenerate)``;
    deltas of degenerate primitives are NaN.
    """
    dr = np.abs(bond_lengths(pos_a, pairs) - bond_lengths(pos_b, pairs))
    ta, da = bond_angles(pos_a, triples)
    tb, db = bond_angles(pos_b, triples)
    adeg = (da | db).astype(np.uint8)
    raw = np.abs(ta - tb)
    dtheta = np.minimum(raw, 180.0 - raw)
    pa, ea = dihedrals(pos_a, quads)
    pb, eb = dihedrals(pos_b, quads)
    tdeg = (ea | eb).astype(np.uint8)
    d = np.abs(pa - pb)
    dphi = np.minimum(d, 360.0 - d)
    return dr, dtheta, raw, adeg, dphi, tdeg
