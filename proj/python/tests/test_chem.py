#
# Project madgen - Copyright 2026 The madgen Authors.
# SPDX-License-Identifier: Apache-2.0
#
import numpy as np
import pytest

import madgen


def test_canonical_smiles_is_order_free():
    assert madgen.canonical_smiles("OCC") == madgen.canonical_smiles("CCO")
    assert madgen.canonical_smiles("c1ccccc1O") == madgen.canonical_smiles("Oc1ccccc1")


def test_scaffold_and_formula():
    assert madgen.murcko_scaffold("CCc1ccccc1") == "c1ccccc1"
    assert madgen.murcko_scaffold("CCCO") == ""
    assert madgen.formula("CCO") == "C2H6O"


def test_bad_smiles_raises_user_error():
    with pytest.raises(madgen.ParseError):
        madgen.canonical_smiles("C1CC")
    with pytest.raises(madgen.UserError):
        madgen.canonical_smiles("C(C)(C)(C)(C)C")


def test_similarity_metrics():
    assert madgen.tanimoto("CCO", "OCC") == pytest.approx(1.0)
    assert 0.0 <= madgen.tanimoto("CCO", "c1ccccc1") < 0.5
    dist, exact = madgen.mces_distance("CCO", "CCO")
    assert dist == 0 and exact
    dist, exact = madgen.mces_distance("CCCC", "CCC")
    assert dist == 1 and exact


def test_simulated_spectrum():
    s = madgen.simulate_spectrum("CCc1ccccc1O", seed=3)
    assert s["formula"] == "C8H10O"
    assert 0 < len(s["peaks"]) <= 32
    mz = [p[0] for p in s["peaks"]]
    assert mz == sorted(mz)
    assert max(p[1] for p in s["peaks"]) == pytest.approx(1.0)
    assert s == madgen.simulate_spectrum("CCc1ccccc1O", seed=3)


def test_bridge_marginals():
    T = 50
    alphas = np.asarray(madgen.cosine_alphas(T))
    assert alphas.shape[0] >= T
    for t in (0, 10, 25, T - 1):
        q = madgen.marginal_matrix(T, t, 2)
        assert q.shape == (5, 5)
        np.testing.assert_allclose(q.sum(axis=0), 1.0, atol=1e-12)
    # The last step lands every column on the endpoint.
    np.testing.assert_allclose(madgen.marginal_matrix(T, T - 1, 2)[2], 1.0, atol=1e-9)
    with pytest.raises(madgen.UserError):
        madgen.marginal_matrix(T, T, 2)


def test_guidance_combination():
    rng = np.random.default_rng(0)
    c = rng.normal(size=(4, 5))
    u = rng.normal(size=(4, 5))
    np.testing.assert_array_equal(madgen.cfg_logits(c, u, 0.0), c)
    np.testing.assert_allclose(madgen.cfg_logits(c, u, 2.0), 3 * c - 2 * u, atol=1e-12)
