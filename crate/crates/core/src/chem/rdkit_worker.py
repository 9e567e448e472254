"""Line-oriented JSON worker exposing a few RDKit operations.

Each request is one JSON object per line; each response is one JSON line.
"""
import json
import os
import sys


def main():
    try:
        from rdkit import Chem, RDLogger
        from rdkit.Chem import AllChem, RDConfig

        RDLogger.DisableLog("rdApp.*")
        sys.path.append(os.path.join(RDConfig.RDContribDir, "SA_Score"))
        import sascorer
        import rdkit
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"ready": False, "error": repr(exc)}), flush=True)
        return

    print(json.dumps({"ready": True, "version": rdkit.__version__}), flush=True)

    def mol(s):
        try:
            return Chem.MolFromSmiles(s)
        except Exception:  # noqa: BLE001
            return None

    def sa(s):
        m = mol(s)
        if m is None or m.GetNumAtoms() == 0:
            return None
        return float(sascorer.calculateScore(m))

    def canonical(s):
        m = mol(s)
        return None if m is None else Chem.MolToSmiles(m)

    def morgan(s, radius, nbits):
        m = mol(s)
        if m is None:
            return None
        fp = AllChem.GetMorganFingerprintAsBitVect(m, radius, nBits=nbits)
        return list(fp.GetOnBits())

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
            op, items = req["op"], req["smiles"]
            if op == "validate":
                res = [mol(s) is not None for s in items]
            elif op == "canonical":
                res = [canonical(s) for s in items]
            elif op == "sa":
                res = [sa(s) for s in items]
            elif op == "morgan":
                r, n = int(req["radius"]), int(req["nbits"])
                res = [morgan(s, r, n) for s in items]
            else:
                raise ValueError("unknown op " + repr(op))
            out = {"ok": True, "result": res}
        except Exception as exc:  # noqa: BLE001
            out = {"ok": False, "error": repr(exc)}
        sys.stdout.write(json.dumps(out) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
