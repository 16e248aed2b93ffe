#
# Project madgen - Copyright 2026 The madgen Authors.
# SPDX-License-Identifier: Apache-2.0
#
import os
import re
import subprocess

import pytest

import madgen

def heavy(formula):
    return re.sub(r"H\d*", "", formula)


TINY_GENERATOR = {
    "node_dim": 16, "edge_dim": 16, "token_dim": 16, "heads": 2, "layers": 1,
    "node_ffn": 32, "edge_ffn": 32, "spectrum_hidden": 32, "time_dim": 8,
    "steps": 10, "batch_size": 8, "train_steps": 20, "lr": 1e-3,
}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    cfg = {"seed": 5, "paths": {"data_dir": str(root)},
           "synthetic": {"n_molecules": 40, "pool_size": 8}}
    out = madgen.run("simulate", cfg)
    return root, cfg, out


def test_simulate_writes_corpus(corpus):
    root, _, out = corpus
    assert out["stats"]["n_molecules"] == 40
    for name in ("dataset.tsv", "pools.tsv", "spectra.mgf", "stats.json"):
        assert (root / name).exists()
    records = madgen.read_dataset(str(root / "dataset.tsv"))
    assert len(records) == 40
    assert {r["split"] for r in records} <= {"train", "val", "test"}
    for r in records:
        assert madgen.murcko_scaffold(r["smiles"]) == r["scaffold_smiles"]


def test_simulate_is_deterministic(corpus, tmp_path):
    root, cfg, _ = corpus
    again = dict(cfg, paths={"data_dir": str(tmp_path)})
    madgen.run("simulate", again)
    assert (root / "dataset.tsv").read_bytes() == (tmp_path / "dataset.tsv").read_bytes()


def test_generator_round_trip(corpus):
    root, cfg, _ = corpus
    cfg = dict(cfg, generator=TINY_GENERATOR,
               generation={"samples": 4, "valence_masking": True},
               evaluate={"split": "train", "max_queries": 2, "retriever": "oracle"})
    lines = []
    trained = madgen.run("train-generator", cfg, log=lines.append)
    assert trained["final_loss"] > 0
    ckpt = root / "generator.ckpt"
    assert ckpt.exists()

    result = madgen.run("generate-evaluate", cfg)
    assert result["report"]["n_queries"] == 2
    assert "Top-1" in result["table"] or "top" in result["table"].lower()

    rec = next(r for r in madgen.read_dataset(str(root / "dataset.tsv"))
               if r["split"] == "train" and r["scaffold_smiles"])
    ranked, valid = madgen.generate(str(ckpt), rec["spectrum"], rec["scaffold_smiles"],
                                    samples=4, valence_masking=True, seed=1)
    assert valid == pytest.approx(1.0)
    assert [e["rank"] for e in ranked] == list(range(1, len(ranked) + 1))
    for e in ranked:
        # Heavy atoms are fixed by the formula; hydrogens follow the bonds.
        assert heavy(madgen.formula(e["smiles"])) == heavy(rec["spectrum"]["formula"])


def test_unknown_config_key_rejected():
    with pytest.raises(madgen.ConfigError):
        madgen.run("simulate", {"synthetic": {"n_mol": 3}})


@pytest.mark.skipif(not os.environ.get("MADGEN_TOOL"), reason="CLI path not provided")
def test_cli_exit_codes(tmp_path):
    tool = os.environ["MADGEN_TOOL"]
    missing = subprocess.run([tool, "rank", "--data-dir", str(tmp_path), "-q"],
                             capture_output=True)
    assert missing.returncode == 2
    bad = subprocess.run([tool, "simulate", "--n-molecules", "abc"], capture_output=True)
    assert bad.returncode == 2
