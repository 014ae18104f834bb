import itertools
import random

import numpy as np
import pytest

from molbench.chemio import SdfRecord
from molbench.kekulize import (
    KekulizeError,
    NoKekuleStructure,
    UnkekulizableAtom,
    double_bond_demand,
    double_bond_options,
    format_failure_log,
    kekulize,
    kekulize_dataset,
)
from molbench.model import BondOrder
from molbench.valency import atom_environment, corrected_table, molecule_stability, StabilityMode
from molbuild import (
    benzene,
    cyclopentadienyl_ch,
    kekulizable_aromatic_system,
    methane,
    mol,
    pyridine,
    pyrrole,
    random_aromatic_system,
    thiophene,
    triphenylene,
    S,
    A,
)

TABLE = corrected_table()


def kekule_oracle(m, chunk=1 << 15):
    """Exhaustive search over single/double choices for every aromatic bond.

    An assignment is valid when no atom gets two aromatic doubles and every
    aromatic atom lands on an allowed valence. Returns the set of valid
    assignments as tuples of 0/1 aligned with the aromatic bonds.
    """
    arom = [b for b in m.bonds if b.order is BondOrder.AROMATIC]
    atoms = sorted({x for b in arom for x in (b.i, b.j)})
    col = {a: k for k, a in enumerate(atoms)}
    inc = np.zeros((len(arom), len(atoms)), dtype=np.float32)
    for r, b in enumerate(arom):
        inc[r, col[b.i]] = inc[r, col[b.j]] = 1
    base = np.array([atom_environment(m, a).v_other + 2 * atom_environment(m, a).n_arom
                     for a in atoms])
    ok_half = [TABLE.allowed(m.atoms[a].element, m.atoms[a].formal_charge, 0) for a in atoms]
    # valid[k, d]: atom k accepts d aromatic doubles
    valid = np.array([[base[k] + 2 * d in ok_half[k] for d in (0, 1, 2)] for k in range(len(atoms))])
    valid[:, 2] = False
    nb = len(arom)
    bits = np.arange(nb, dtype=np.int64)
    found = set()
    for start in range(0, 1 << nb, chunk):
        codes = np.arange(start, min(start + chunk, 1 << nb), dtype=np.int64)
        masks = ((codes[:, None] >> bits) & 1).astype(np.float32)
        dbl = np.minimum((masks @ inc).astype(np.int64), 2)
        good = valid[np.arange(len(atoms)), dbl].all(axis=1)
        for row in masks[good]:
            found.add(tuple(int(x) for x in row))
    return found


def assignment_of(original, kek):
    arom = [(b.i, b.j) for b in original.bonds if b.order is BondOrder.AROMATIC]
    return tuple(int(kek.bond_between(i, j).order is BondOrder.DOUBLE) for i, j in arom)


def test_demand_examples():
    assert double_bond_demand(benzene(), 0) == 1
    assert double_bond_demand(pyrrole(), 0) == 0
    assert double_bond_demand(pyridine(), 0) == 1
    assert double_bond_demand(thiophene(), 0) == 0


def test_demand_unreachable():
    # C with two aromatic bonds and three H already exceeds 4
    m = mol("x", [("C", 0), ("C", 0), ("C", 0), ("H", 0), ("H", 0), ("H", 0)],
            [(0, 1, A), (0, 2, A), (0, 3, S), (0, 4, S), (0, 5, S)])
    with pytest.raises(UnkekulizableAtom):
        double_bond_demand(m, 0)


def test_sulfur_options_flexible():
    # neutral S allows 2 and 3: a thiophene S can go either way
    assert double_bond_options(thiophene(), 0) == frozenset({0, 1})


def test_benzene():
    k = kekulize(benzene())
    ring = [k.bond_between(i, (i + 1) % 6).order for i in range(6)]
    assert ring.count(BondOrder.DOUBLE) == 3
    assert all(ring[i] != ring[(i + 1) % 6] for i in range(6))
    assert molecule_stability(k, StabilityMode.KEKULIZED, TABLE) == (1.0, True)


def test_triphenylene_all_carbons_four():
    k = kekulize(triphenylene())
    for idx in range(18):
        assert atom_environment(k, idx).v_other == 8
    assert molecule_stability(k, StabilityMode.KEKULIZED, TABLE) == (1.0, True)


@pytest.mark.parametrize("build", [pyrrole, pyridine, thiophene])
def test_heteroaromatics(build):
    assert molecule_stability(kekulize(build()), StabilityMode.KEKULIZED, TABLE)[1]


def test_odd_ring_no_structure():
    with pytest.raises(NoKekuleStructure):
        kekulize(cyclopentadienyl_ch())


def test_six_ring_with_blocked_atom():
    # atom 0 is CH2 inside the ring: it cannot take a double, leaving a 5-atom path
    atoms = [("C", 0)] * 6 + [("H", 0)] * 7
    bonds = [(k, (k + 1) % 6, A) for k in range(6)] + [(k, k + 6, S) for k in range(6)] + [(0, 12, S)]
    m = mol("blocked", atoms, bonds)
    assert double_bond_options(m, 0) == frozenset({0})
    with pytest.raises(NoKekuleStructure):
        kekulize(m)
    assert kekule_oracle(m) == set()


def test_non_aromatic_unchanged_and_idempotent():
    m = methane()
    assert kekulize(m) is m
    k = kekulize(triphenylene())
    assert kekulize(k) == k


def test_exocyclic_untouched():
    m = benzene()
    k = kekulize(m)
    for b in m.bonds:
        if b.order is not BondOrder.AROMATIC:
            assert k.bond_between(b.i, b.j).order is b.order


def test_deterministic():
    rng = random.Random(11)
    for _ in range(30):
        m = random_aromatic_system(rng)
        try:
            a = kekulize(m)
        except KekulizeError:
            continue
        assert kekulize(m) == a


def _valence_sum(m, arom_half=3):
    return sum(atom_environment(m, i).v_other + arom_half * atom_environment(m, i).n_arom
               for i in range(len(m.atoms)))


def test_oracle_equivalence_and_conservation():
    rng = random.Random(2024)
    agreed = {"ok": 0, "fail": 0}
    for n in range(150):
        make = random_aromatic_system if n % 2 else kekulizable_aromatic_system
        m = make(rng, name=f"r{n}")
        valid = kekule_oracle(m)
        try:
            k = kekulize(m)
        except KekulizeError:
            assert not valid, m
            agreed["fail"] += 1
            continue
        assert valid, m
        assert assignment_of(m, k) in valid
        agreed["ok"] += 1
        orders = sum(b.order.value for b in k.bonds)
        assert _valence_sum(k) == 4 * orders
        assert not k.has_aromatic
    # the generator must exercise both outcomes
    assert agreed["ok"] > 10 and agreed["fail"] > 10


def test_oracle_matches_on_small_rings_exhaustively():
    # every C/N charge pattern on a bare 5-ring with H on carbons
    for pattern in itertools.product([("C", 0), ("N", 0), ("N", 1), ("C", -1)], repeat=5):
        atoms = list(pattern)
        bonds = [(k, (k + 1) % 5, A) for k in range(5)]
        for k, (el, _) in enumerate(pattern):
            if el == "C":
                atoms.append(("H", 0))
                bonds.append((k, len(atoms) - 1, S))
        m = mol("p", atoms, bonds)
        valid = kekule_oracle(m)
        try:
            k = kekulize(m)
            assert assignment_of(m, k) in valid
        except KekulizeError:
            assert not valid


def test_dataset_examples():
    kept, fails = kekulize_dataset([SdfRecord(benzene()), SdfRecord(methane())])
    assert len(kept) == 2 and fails == []
    rec = SdfRecord(benzene(), {"id": "7"})
    kept, fails = kekulize_dataset([rec, SdfRecord(cyclopentadienyl_ch())])
    assert len(kept) == 1 and kept[0].properties == {"id": "7"}
    assert format_failure_log(fails) == "c5h5\tNoKekuleStructure\n"
    assert kekulize_dataset([]) == ([], [])


def test_dataset_parallel_same_order():
    rng = random.Random(4)
    recs = [SdfRecord(random_aromatic_system(rng, name=f"m{k}")) for k in range(80)]
    serial = kekulize_dataset(recs, workers=1)
    parallel = kekulize_dataset(recs, workers=3)
    assert [r.molecule for r in serial[0]] == [r.molecule for r in parallel[0]]
    assert serial[1] == parallel[1]
