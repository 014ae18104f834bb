import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molbench.model import (
    Atom,
    Bond,
    BondOrder,
    ChemModelError,
    Element,
    Molecule,
    UnknownElementError,
    connected_components,
    enumerate_angles,
    enumerate_torsions,
)
from molbuild import benzene, butane_skeleton, fragmented_benzene, mol, water, S


def brute_angles(m):
    """Every ordered bonded triple, collapsed under reversal."""
    n = len(m.atoms)
    seen = set()
    for i, j, k in itertools.permutations(range(n), 3):
        if m.has_bond(i, j) and m.has_bond(j, k):
            seen.add((min(i, k), j, max(i, k)))
    return seen


def brute_torsions(m):
    n = len(m.atoms)
    seen = set()
    for i, j, k, l in itertools.permutations(range(n), 4):
        if m.has_bond(i, j) and m.has_bond(j, k) and m.has_bond(k, l):
            q = (i, j, k, l)
            seen.add(q if j < k else q[::-1])
    return seen


def test_element_closed_set():
    assert len(Element) == 16
    assert Element.parse("Cl") is Element.Cl
    with pytest.raises(UnknownElementError):
        Element.parse("Xx")
    with pytest.raises(UnknownElementError):
        Atom("Na")


@pytest.mark.parametrize("charge", [-3, 4, 1.5])
def test_atom_charge_range(charge):
    with pytest.raises(ChemModelError):
        Atom("C", charge)


def test_atom_position_finite():
    with pytest.raises(ChemModelError):
        Atom("C", 0, (0.0, float("nan"), 0.0))


def test_bond_normalization_and_self_bond():
    b = Bond(5, 2, BondOrder.DOUBLE)
    assert (b.i, b.j) == (2, 5)
    with pytest.raises(ChemModelError):
        Bond(3, 3)


def test_bond_order_half_units():
    assert [o.half_units for o in BondOrder] == [2, 4, 6, None]


def test_molecule_rejects_bad_bonds():
    atoms = (Atom("C"), Atom("C"))
    with pytest.raises(ChemModelError):
        Molecule("x", atoms, (Bond(0, 2),))
    with pytest.raises(ChemModelError):
        Molecule("x", atoms, (Bond(0, 1), Bond(1, 0)))


def test_components_examples():
    assert len(connected_components(benzene())) == 1
    assert len(connected_components(fragmented_benzene())) == 2
    assert connected_components(Molecule("empty")) == []


def test_angle_examples():
    assert enumerate_angles(water()) == [(1, 0, 2)]
    chain = butane_skeleton()
    assert len(enumerate_angles(chain)) == 2
    # every ring C has 3 neighbours -> C(3,2) = 3 angles, H none: 6 * 3
    b = benzene()
    assert len(enumerate_angles(b)) == 18
    assert set(enumerate_angles(b)) == brute_angles(b)


def test_torsion_examples():
    assert enumerate_torsions(butane_skeleton()) == [(0, 1, 2, 3)]
    assert enumerate_torsions(water()) == []
    ring = mol("c6", [("C", 0)] * 6, [(k, (k + 1) % 6, S) for k in range(6)])
    assert len(enumerate_torsions(ring)) == 6
    assert set(enumerate_torsions(ring)) == brute_torsions(ring)


def test_torsions_exclude_three_rings():
    # cyclopropane: i-j-k-l would need l == i
    tri = mol("c3", [("C", 0)] * 3, [(0, 1, S), (1, 2, S), (0, 2, S)])
    assert enumerate_torsions(tri) == []


@st.composite
def random_graphs(draw, max_atoms=12):
    n = draw(st.integers(0, max_atoms))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=min(len(pairs), 18))) if pairs else []
    return mol("g", [("C", 0)] * n, [(i, j, S) for i, j in chosen])


@settings(max_examples=150, deadline=None)
@given(random_graphs())
def test_enumeration_matches_brute_force(m):
    angles = enumerate_angles(m)
    torsions = enumerate_torsions(m)
    assert len(angles) == len(set(angles))
    assert len(torsions) == len(set(torsions))
    assert set(angles) == brute_angles(m)
    assert set(torsions) == brute_torsions(m)


@settings(max_examples=100, deadline=None)
@given(random_graphs(), st.randoms(use_true_random=False))
def test_components_invariant_under_reindexing(m, rnd):
    n = len(m.atoms)
    perm = list(range(n))
    rnd.shuffle(perm)
    atoms = [None] * n
    for old, new in enumerate(perm):
        atoms[new] = m.atoms[old]
    bonds = [Bond(perm[b.i], perm[b.j], b.order) for b in m.bonds]
    m2 = Molecule("p", tuple(atoms), tuple(bonds))
    before = sorted(sorted(perm[x] for x in comp) for comp in connected_components(m))
    after = sorted(connected_components(m2))
    assert before == after
    assert len(after) >= n - len(m.bonds)


def test_components_partition_union():
    rng = random.Random(3)
    for _ in range(50):
        n = rng.randint(1, 15)
        edges = {tuple(sorted(rng.sample(range(n), 2))) for _ in range(rng.randint(0, n))} if n > 1 else set()
        m = mol("r", [("C", 0)] * n, [(i, j, S) for i, j in edges])
        comps = connected_components(m)
        assert sorted(x for c in comps for x in c) == list(range(n))
        # no bond crosses components
        where = {x: k for k, c in enumerate(comps) for x in c}
        assert all(where[b.i] == where[b.j] for b in m.bonds)


def test_same_topology_and_positions():
    b = benzene()
    moved = b.with_positions([(x + 1, y, z) for x, y, z in b.positions])
    assert b.same_topology(moved)
    assert not b.same_topology(benzene(aromatic=False))
    assert b.net_charge == 0
    assert fragmented_benzene().net_charge == 1
