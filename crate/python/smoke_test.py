"""Smoke test of the coxbvs Python extension."""

import math
import sys
import tempfile
from pathlib import Path

import coxbvs


def main() -> int:
    train, test = coxbvs.simulate_reference(p=10, n=40, seed=3)
    assert train.p == 10 and train.n_subgroups == 2
    assert len(train) == 80 and train.subgroup_sizes() == [40, 40]

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "train.csv"
        train.to_csv(path)
        again = coxbvs.Dataset.from_csv(path)
        assert again.times == train.times
        assert again.covariates == train.covariates

    fits = {}
    for model in ["coxbvs-sl", "sub-struct", "subgroup", "pooled"]:
        fit = coxbvs.fit(train, model=model, iterations=200, burn_in=100, seed=1)
        probs = fit.selection_probabilities
        assert all(0.0 <= v <= 1.0 for row in probs for v in row)
        scores = fit.integrated_brier(test)
        assert len(scores) == 2 and all(0.0 <= ibs <= 1.0 for _, _, ibs in scores)
        fits[model] = fit
        print(f"{model:>10}: ibs(mpm) = {[round(s, 4) for _, _, s in scores]}")

    repeat = coxbvs.fit(train, model="coxbvs-sl", iterations=200, burn_in=100, seed=1)
    assert repeat.selection_probabilities == fits["coxbvs-sl"].selection_probabilities

    edges = fits["coxbvs-sl"].within_edge_probabilities(0)
    assert len(edges) == 10 and edges[0][1] == edges[1][0]

    s = fits["pooled"].predict_survival(test.covariates[0], test.subgroups[0], 1.0)
    assert 0.0 <= s <= 1.0

    marg = coxbvs.mrf_marginals(p=1, n_subgroups=2, a=0.0, b_within=0.0, b_between=1.0, between=[(0, 1, 0)])
    expected = (1 + math.e**2) / (3 + math.e**2)
    assert all(abs(m - expected) < 1e-12 for m in marg), marg

    try:
        coxbvs.fit(train, model="nonsense")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid model accepted")

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
