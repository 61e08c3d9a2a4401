"""Regenerates golden_smiles.tsv with heavy-atom and bond counts from RDKit.

Run manually; the output file is checked in and read by the C++ tests.
"""
from rdkit import Chem

MOLECULES = [
    ("ethanol", "CCO"),
    ("benzene", "c1ccccc1"),
    ("cyclopropane", "C1CC1"),
    ("isobutane", "CC(C)C"),
    ("toluene", "Cc1ccccc1"),
    ("aspirin", "CC(=O)Oc1ccccc1C(=O)O"),
    ("caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C"),
    ("acetic_acid", "CC(=O)O"),
    ("pyridine", "c1ccncc1"),
    ("naphthalene", "c1ccc2ccccc2c1"),
    ("ibuprofen", "CC(C)Cc1ccc(cc1)C(C)C(=O)O"),
    ("paracetamol", "CC(=O)Nc1ccc(O)cc1"),
    ("nicotine", "CN1CCCC1c1cccnc1"),
    ("acetonitrile", "CC#N"),
    ("chloroform", "ClC(Cl)Cl"),
    ("bromobenzene", "Brc1ccccc1"),
    ("pyrrole", "c1cc[nH]c1"),
    ("tetramethylammonium", "C[N+](C)(C)C"),
    ("decalin_pct", "C%10CCC2CCCCC2C%10"),
    ("fluoxetine", "CNCCC(Oc1ccc(cc1)C(F)(F)F)c1ccccc1"),
]

with open("golden_smiles.tsv", "w") as out:
    out.write("# name\tsmiles\tatom_count\tbond_count (RDKit %s)\n" % Chem.rdBase.rdkitVersion)
    for name, smi in MOLECULES:
        mol = Chem.MolFromSmiles(smi)
        assert mol is not None, smi
        out.write("%s\t%s\t%d\t%d\n" % (name, smi, mol.GetNumAtoms(), mol.GetNumBonds()))
