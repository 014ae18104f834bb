import random

import pytest

from molbench.kekulize import KekulizeError, kekulize
from molbench.valency import (
    AromaticBondsInKekulizedMode,
    AromaticInputForTotalMode,
    AtomEnvironment,
    IncompatibleTable,
    LEGACY_ANNOTATIONS,
    StabilityMode,
    ValencyTable,
    atom_environment,
    build_valency_table,
    corrected_table,
    diff_tables,
    evaluate_stability,
    is_atom_stable,
    legacy_table,
    merge_tables,
    molecule_stability,
    resolve_table,
    total_valence,
    tuple_table,
    valid_and_connected,
)
from molbench.model import Element
from molbuild import (
    benzene,
    fragmented_benzene,
    methane,
    mol,
    pyridine,
    pyrrole,
    random_aromatic_system,
    thiophene,
    triphenylene,
    S,
    T,
    A,
)

C = Element.C


def test_environment_examples():
    assert atom_environment(benzene(), 0) == AtomEnvironment(C, 0, 2, 2)
    assert atom_environment(triphenylene(), 0) == AtomEnvironment(C, 0, 3, 0)
    assert atom_environment(methane(), 0) == AtomEnvironment(C, 0, 0, 8)


def test_total_valence_examples():
    env = atom_environment(benzene(), 0)
    assert total_valence(env, 1) == 6       # 3
    assert total_valence(env, 1.5) == 8     # 4
    fusion = atom_environment(triphenylene(), 0)
    assert total_valence(fusion, 1.5) == 9  # 4.5
    with pytest.raises(ValueError):
        total_valence(env, 2)


def test_legacy_pathologies_direct():
    carbon = mol("c3", [("C", 0), ("H", 0), ("H", 0), ("H", 0)], [(0, 1, S), (0, 2, S), (0, 3, S)])
    assert is_atom_stable(carbon, 0, StabilityMode.LEGACY_AROM1, legacy_table())
    assert not is_atom_stable(carbon, 0, StabilityMode.KEKULIZED, corrected_table())
    # N+ with one triple and one aromatic bond
    n = mol("n", [("C", 0), ("N", 1), ("C", 0)], [(0, 1, A), (1, 2, T)])
    assert not is_atom_stable(n, 1, StabilityMode.AROM_TUPLE, tuple_table())
    assert is_atom_stable(n, 1, StabilityMode.LEGACY_AROM1, legacy_table())


def test_incompatible_table():
    with pytest.raises(IncompatibleTable):
        is_atom_stable(benzene(), 0, StabilityMode.AROM_TUPLE, legacy_table())
    with pytest.raises(IncompatibleTable):
        is_atom_stable(benzene(), 0, StabilityMode.AROM15, tuple_table())


def test_kekulized_mode_rejects_aromatic():
    with pytest.raises(AromaticBondsInKekulizedMode):
        molecule_stability(benzene(), StabilityMode.KEKULIZED, corrected_table())


def test_missing_key_is_unstable():
    # Hg is absent from the corrected table
    hg = mol("hg", [("Hg", 0), ("C", 0)], [(0, 1, S)])
    assert not is_atom_stable(hg, 0, StabilityMode.KEKULIZED, corrected_table())


def test_molecule_stability_examples():
    assert molecule_stability(benzene(), StabilityMode.AROM_TUPLE, tuple_table()) == (1.0, True)
    frac, ok = molecule_stability(triphenylene(), StabilityMode.AROM15, legacy_table())
    # 18 carbons + 12 H; the 6 fusion carbons sit at 4.5
    assert (frac, ok) == (24 / 30, False)
    for mode, table in [(StabilityMode.LEGACY_AROM1, legacy_table()),
                        (StabilityMode.AROM15, legacy_table()),
                        (StabilityMode.AROM_TUPLE, tuple_table()),
                        (StabilityMode.KEKULIZED, corrected_table())]:
        assert molecule_stability(methane(), mode, table) == (1.0, True)


def test_legacy_arom1_inflates_benzene():
    # aromatic counted as 1: ring C at valence 3, accepted only by the legacy table
    assert molecule_stability(benzene(), StabilityMode.LEGACY_AROM1, legacy_table())[1]
    assert not molecule_stability(benzene(), StabilityMode.LEGACY_AROM1, corrected_table())[1]


def test_valid_and_connected():
    assert valid_and_connected(benzene(), tuple_table())
    assert valid_and_connected(kekulize(benzene()), corrected_table())
    assert not valid_and_connected(fragmented_benzene(), tuple_table())
    nh2 = mol("nh2", [("N", 0), ("H", 0), ("H", 0)], [(0, 1, S), (0, 2, S)])
    assert not valid_and_connected(nh2, corrected_table())


def test_build_table_examples():
    t = build_valency_table([benzene(), methane()], "tuple")
    assert dict(t.entries) == {(C, 0, 2): {2}, (C, 0, 0): {8}, (Element.H, 0, 0): {2}}
    assert t.counts[(C, 0, 2, 2)] == 6
    assert t.counts[(Element.H, 0, 0, 2)] == 10
    k = build_valency_table([kekulize(benzene())], "total")
    assert dict(k.entries) == {(C, 0, 0): {8}, (Element.H, 0, 0): {2}}
    assert len(build_valency_table([], "tuple")) == 0


def test_build_total_rejects_aromatic():
    with pytest.raises(AromaticInputForTotalMode):
        build_valency_table([benzene()], "total")


def test_serialization_roundtrip(tmp_path):
    t = build_valency_table([benzene(), methane(), pyridine()], "tuple")
    path = tmp_path / "t.tsv"
    t.dump(path)
    text = path.read_text()
    assert text.splitlines()[0] == "C\t0\t0\t4\t1"
    back = ValencyTable.load(path)
    assert back.entries == t.entries
    assert back.counts == t.counts
    assert back.dumps() == text


def test_builtin_serialization_counts_zero():
    rows = corrected_table().dumps().splitlines()
    assert "S\t3\t0\t5\t0" in rows
    assert rows == sorted(rows, key=lambda r: (r.split("\t")[0], *map(int, r.split("\t")[1:])))


def test_resolve_table():
    assert resolve_table("builtin:legacy").flavor == "legacy"
    with pytest.raises(ValueError):
        resolve_table("builtin:nope")


def test_legacy_annotations_point_at_entries():
    legacy = legacy_table()
    for (el, chg, val) in LEGACY_ANNOTATIONS:
        assert 2 * val in legacy.allowed(Element(el), chg, 0)
    assert not (corrected_table().allowed(C, 0, 0) & {6})


def test_diff_tables():
    d = diff_tables(legacy_table(), corrected_table())
    assert ("C", 0, 0, 3) in d.added
    assert ("Hg", 0, 0, 1) in d.added
    assert ("S", 0, 0, 3) in d.missing


def test_stability_report_folds():
    mols = [benzene(), fragmented_benzene(), methane(), pyrrole()]
    rep = evaluate_stability(mols, StabilityMode.AROM_TUPLE, tuple_table(), folds=2)
    # fragmented benzene: the bare H+ (H, +1, 0) is absent from the tuple table
    assert [m.all_stable for m in rep.molecules] == [True, False, True, True]
    assert rep.molecule_stability.per_fold == (0.5, 1.0)
    assert rep.valid_connected.mean == pytest.approx(0.75)
    # atom stability pools atoms inside each fold: (12 + 12) / (12 + 13)
    assert rep.atom_stability.per_fold[0] == pytest.approx(24 / 25)
    assert rep.molecule_stability.mean <= rep.atom_stability.mean


# ------------------------------------------------------------- properties

def _corpus(seed, n=60):
    rng = random.Random(seed)
    out = [benzene(), pyridine(), pyrrole(), thiophene(), triphenylene(), methane()]
    while len(out) < n:
        out.append(random_aromatic_system(rng))
    return out


def test_mode_bug_reproduction_on_simple_aromatics():
    # benzene-like atoms: Arom15 on the corrected table agrees with the tuple table
    for m in (benzene(), pyridine()):
        for i in range(len(m.atoms)):
            a = is_atom_stable(m, i, StabilityMode.AROM15, corrected_table())
            b = is_atom_stable(m, i, StabilityMode.AROM_TUPLE, tuple_table())
            assert a == b


@pytest.mark.parametrize("seed", range(3))
def test_kekulization_consistency(seed):
    for m in _corpus(seed):
        try:
            k = kekulize(m)
        except KekulizeError:
            continue
        if molecule_stability(m, StabilityMode.AROM_TUPLE, tuple_table())[1]:
            assert molecule_stability(k, StabilityMode.KEKULIZED, corrected_table())[1], m


@pytest.mark.parametrize("seed", range(3))
def test_table_derivation_closure(seed):
    corpus = _corpus(seed)
    tup = build_valency_table(corpus, "tuple")
    for m in corpus:
        assert molecule_stability(m, StabilityMode.AROM_TUPLE, tup) == (1.0, True)
    kek = []
    for m in corpus:
        try:
            kek.append(kekulize(m))
        except KekulizeError:
            pass
    tot = build_valency_table(kek, "total")
    for m in kek:
        assert molecule_stability(m, StabilityMode.KEKULIZED, tot) == (1.0, True)


def test_monotonicity_and_merge():
    corpus = _corpus(7, 40)
    prev = set()
    for k in range(1, len(corpus) + 1):
        rows = {r[:4] for r in build_valency_table(corpus[:k], "tuple").rows()}
        assert prev <= rows
        prev = rows
    a = build_valency_table(corpus[:20], "tuple")
    b = build_valency_table(corpus[20:], "tuple")
    whole = build_valency_table(corpus, "tuple")
    assert merge_tables(a, b).dumps() == whole.dumps()
    assert merge_tables(b, a).dumps() == whole.dumps()
