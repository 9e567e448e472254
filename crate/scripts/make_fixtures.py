"""Freeze reference outputs (selfies 1.0.3, RDKit) used by the Rust tests."""
import gzip
import os
import random
import sys

import selfies as sf
from rdkit import Chem, RDLogger
from rdkit.Chem import RDConfig

RDLogger.DisableLog("rdApp.*")
sys.path.append(os.path.join(RDConfig.RDContribDir, "SA_Score"))
import sascorer  # noqa: E402

out = sys.argv[1]
with gzip.open("data/moses_60k.smi.gz", "rt") as f:
    corpus = [l.strip() for l in f if l.strip()]

extra = [
    "C1=CNCC1", "C", "CC(=O)O", "c1ccccc1", "c1cc[nH]c1", "C[N+](C)(C)C",
    "[O-]C(=O)CC", "F/C=C/F", "C1CC2CCC1CC2", "N#CC#N", "O=S(=O)(O)O",
    "c1ccc2ccccc2c1", "C1CCCCCCCCCCCCCCCCCCCC1", "CC(C)(C)c1ccc(O)cc1",
    "Clc1ccc(Br)cc1I", "C[C@@H](N)C(=O)O", "[NH4+]", "C%10CC%10",
    "c1ccc(-c2ccccc2)cc1", "O=c1cc[nH]c(=O)[nH]1", "CC(C)C.CC",
]
with open(os.path.join(out, "selfies_parity.tsv"), "w") as f:
    for smi in extra + corpus[:3000]:
        enc = sf.encoder(smi)
        dec = sf.decoder(enc) if enc is not None else None
        if enc is None:
            continue
        f.write(f"{smi}\t{enc}\t{dec}\n")

alphabet = sorted(sf.get_alphabet_from_selfies(sf.encoder(s) for s in corpus[:5000]))
rng = random.Random(7)
with open(os.path.join(out, "random_decode.tsv"), "w") as f:
    for _ in range(1000):
        n = rng.randint(1, 20)
        s = "".join(rng.choice(alphabet) for _ in range(n))
        dec = sf.decoder(s)
        valid = Chem.MolFromSmiles(dec) is not None
        f.write(f"{s}\t{dec}\t{int(valid)}\n")

with open(os.path.join(out, "sa_scores.tsv"), "w") as f:
    for smi in extra + corpus[3000:3100]:
        m = Chem.MolFromSmiles(smi)
        f.write(f"{smi}\t{Chem.MolToSmiles(m)}\t{sascorer.calculateScore(m):.10f}\n")
