import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molbench.geometry import (
    PER_MOLECULE,
    POOLED,
    ConformerPair,
    DegenerateAngle,
    DegenerateTorsion,
    MoleculeDeviation,
    TopologyMismatch,
    angle_difference,
    bond_angle,
    bond_angle_delta,
    bond_length_delta,
    deviation_rows_csv,
    dihedral,
    fold_deviations,
    histogram_csv,
    molecule_deviations,
    summarize_deviations,
    torsion_delta,
    torsion_difference,
)
from molbench.model import enumerate_torsions
from molbuild import benzene, butane_skeleton, methane, mol, random_positions, random_tree_molecule, water, S

angles = st.floats(0.0, 180.0)
torsions = st.floats(-180.0, 180.0, exclude_min=True)


def _dev(name, dr):
    empty = np.zeros(0)
    return MoleculeDeviation(name, np.asarray(dr, dtype=float), empty, empty, empty)


def random_rotation(rng):
    q = np.array([rng.gauss(0, 1) for _ in range(4)])
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def test_formula_examples():
    assert angle_difference(120.0, 119.0) == pytest.approx(1.0)
    assert angle_difference(179.0, 1.0) == pytest.approx(2.0)
    assert torsion_difference(170.0, -170.0) == pytest.approx(20.0)
    assert torsion_difference(-90.0, 90.0) == pytest.approx(180.0)
    assert angle_difference(33.3, 33.3) == 0.0


def test_bond_length_example():
    a = mol("h2", [("H", 0, (0, 0, 0)), ("H", 0, (1.50, 0, 0))], [(0, 1, S)])
    b = a.with_positions([(0, 0, 0), (1.39, 0, 0)])
    assert bond_length_delta(ConformerPair(a, b), (0, 1)) == pytest.approx(0.11)
    assert bond_length_delta(ConformerPair(a, a), (0, 1)) == 0.0
    with pytest.raises(ValueError):
        bond_length_delta(ConformerPair(water(), water()), (1, 2))


def test_bond_angle_values():
    assert bond_angle([(1, 0, 0), (0, 0, 0), (0, 1, 0)], 0, 1, 2) == pytest.approx(90.0)
    assert bond_angle([(1, 0, 0), (0, 0, 0), (-1, 0, 0)], 0, 1, 2) == pytest.approx(180.0)
    assert bond_angle([(1, 0, 0), (0, 0, 0), (2, 0, 0)], 0, 1, 2) == pytest.approx(0.0)
    with pytest.raises(DegenerateAngle):
        bond_angle([(0, 0, 0), (0, 0, 0), (1, 0, 0)], 0, 1, 2)


def test_dihedral_values_and_sign():
    base = [(1, 0, 0), (0, 0, 0), (0, 0, 1)]
    assert dihedral(base + [(1, 0, 1)], 0, 1, 2, 3) == pytest.approx(0.0)
    assert dihedral(base + [(-1, 0, 1)], 0, 1, 2, 3) == pytest.approx(180.0)
    assert dihedral(base + [(0, 1, 1)], 0, 1, 2, 3) == pytest.approx(-dihedral(base + [(0, -1, 1)], 0, 1, 2, 3))
    assert abs(dihedral(base + [(0, 1, 1)], 0, 1, 2, 3)) == pytest.approx(90.0)
    with pytest.raises(DegenerateTorsion):
        dihedral([(0, 0, -1), (0, 0, 0), (0, 0, 1), (1, 0, 1)], 0, 1, 2, 3)


def test_topology_mismatch():
    with pytest.raises(TopologyMismatch):
        ConformerPair(benzene(), benzene(aromatic=False))


@settings(max_examples=500, deadline=None)
@given(angles, angles)
def test_angle_bounds_and_symmetry(a, b):
    d = angle_difference(a, b)
    assert 0.0 <= d <= 90.0
    assert d == angle_difference(b, a)


@settings(max_examples=500, deadline=None)
@given(torsions, torsions)
def test_torsion_bounds_and_symmetry(a, b):
    d = torsion_difference(a, b)
    assert 0.0 <= d <= 180.0
    assert d == torsion_difference(b, a)


def test_identity_is_zero():
    rng = random.Random(1)
    m = random_tree_molecule(rng, 15)
    s = summarize_deviations([ConformerPair(m, m), ConformerPair(benzene(), benzene())])
    assert (s.mean_bond_length_delta, s.mean_bond_angle_delta, s.mean_torsion_delta) == (0.0, 0.0, 0.0)


def test_pooling_example():
    devs = [_dev("a", [0.1]), _dev("b", [0.3, 0.3])]
    assert summarize_deviations(devs, POOLED).mean_bond_length_delta == pytest.approx(0.7 / 3)
    assert summarize_deviations(devs, PER_MOLECULE).mean_bond_length_delta == pytest.approx(0.2)
    with pytest.raises(ValueError):
        summarize_deviations(devs, "median")


def test_empty_summary_flags_undefined():
    s = summarize_deviations([])
    assert s.n_bonds == s.n_angles == s.n_torsions == 0
    assert s.mean_bond_length_delta is None
    assert "mean_torsion_delta" in s.undefined
    # water has no torsions: torsion mean undefined but others defined
    w = summarize_deviations([ConformerPair(water(), water())])
    assert w.undefined == ["mean_torsion_delta"]


def _perturbed(rng, m, scale=0.3):
    return m.with_positions([tuple(c + rng.uniform(-scale, scale) for c in p) for p in m.positions])


def test_rigid_motion_invariance():
    rng = random.Random(7)
    for n in range(100):
        m = random_tree_molecule(rng, rng.randint(4, 20), name=f"t{n}")
        opt = _perturbed(rng, m)
        ref = molecule_deviations(ConformerPair(m, opt))
        rot = random_rotation(rng)
        shift = np.array([rng.uniform(-10, 10) for _ in range(3)])
        moved = opt.with_positions([tuple(rot @ np.array(p) + shift) for p in opt.positions])
        got = molecule_deviations(ConformerPair(m, moved))
        np.testing.assert_allclose(got.bond_deltas, ref.bond_deltas, rtol=0, atol=1e-9)
        np.testing.assert_allclose(got.angle_deltas, ref.angle_deltas, rtol=0, atol=1e-9)
        np.testing.assert_allclose(got.torsion_deltas, ref.torsion_deltas, rtol=0, atol=1e-9)


def test_pair_symmetry_and_reversal():
    rng = random.Random(8)
    for _ in range(30):
        m = random_tree_molecule(rng, 10)
        opt = _perturbed(rng, m)
        fwd, back = ConformerPair(m, opt), ConformerPair(opt, m)
        a, b = molecule_deviations(fwd), molecule_deviations(back)
        np.testing.assert_allclose(a.torsion_deltas, b.torsion_deltas, atol=1e-12)
        np.testing.assert_allclose(a.angle_deltas, b.angle_deltas, atol=1e-12)
        for q in enumerate_torsions(m):
            assert torsion_delta(fwd, q) == pytest.approx(torsion_delta(fwd, q[::-1]), abs=1e-9)
            assert bond_angle_delta(fwd, q[:3]) == pytest.approx(bond_angle_delta(back, q[:3]), abs=1e-12)


def test_degenerate_torsions_counted_not_zeroed():
    straight = mol("lin", [("C", 0, (0, 0, 0)), ("C", 0, (1, 0, 0)), ("C", 0, (2, 0, 0)), ("C", 0, (2, 1, 0))],
                   [(0, 1, S), (1, 2, S), (2, 3, S)])
    bent = straight.with_positions([(0, 0, 0), (1, 0, 0), (2, 0.5, 0), (2, 1, 1)])
    d = molecule_deviations(ConformerPair(straight, bent))
    assert d.degenerate_torsions == 1
    assert len(d.torsion_deltas) == 0
    s = summarize_deviations([d])
    assert s.n_degenerate == 1 and s.mean_torsion_delta is None


def test_butane_torsion_delta():
    m = butane_skeleton()
    p = m.positions
    phi = dihedral(p, 0, 1, 2, 3)
    # rotate atom 3 about the 1-2 axis by 40 degrees
    axis = np.subtract(p[2], p[1])
    axis /= np.linalg.norm(axis)
    t = math.radians(40)
    v = np.subtract(p[3], p[2])
    v = v * math.cos(t) + np.cross(axis, v) * math.sin(t) + axis * axis.dot(v) * (1 - math.cos(t))
    moved = m.with_positions(list(p[:3]) + [tuple(np.add(p[2], v))])
    pair = ConformerPair(m, moved)
    assert torsion_delta(pair, (0, 1, 2, 3)) == pytest.approx(40.0)
    assert torsion_difference(dihedral(moved.positions, 0, 1, 2, 3), phi) == pytest.approx(40.0)
    assert bond_length_delta(pair, (2, 3)) == pytest.approx(0.0, abs=1e-12)


def test_raw_angle_diagnostic_kept():
    a = mol("v", [("O", 0, (1, 0, 0)), ("O", 0, (0, 0, 0)), ("O", 0, (-1, 0.01, 0))], [(0, 1, S), (1, 2, S)])
    b = a.with_positions([(1, 0, 0), (0, 0, 0), (1, 0.01, 0)])
    d = molecule_deviations(ConformerPair(a, b))
    assert d.angle_raw_deltas[0] > 170
    assert d.angle_deltas[0] < 10


def test_fold_deviations_and_csv():
    devs = [molecule_deviations(ConformerPair(m, m)) for m in (methane(), water(), benzene(), butane_skeleton())]
    folded = fold_deviations(devs, k=2)
    assert folded["bond_length"]["per_fold"] == [0.0, 0.0]
    text = deviation_rows_csv(devs)
    lines = text.splitlines()
    assert lines[0] == "name,bond_count,mean_dr,angle_count,mean_dtheta,torsion_count,mean_dphi,degenerate_count"
    assert lines[2].startswith("water,2,0.0,1,0.0,0,,0")
    h = histogram_csv([0.1, 0.2, 0.2], bins=2, value_range=(0, 0.4))
    assert h.splitlines()[1:] == ["0.0,0.2,1", "0.2,0.4,2"]


def test_random_positions_helper_keeps_topology():
    rng = random.Random(0)
    m = benzene()
    assert ConformerPair(m, random_positions(m, rng)).name == "benzene"
