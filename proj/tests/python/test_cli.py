# SPDX-License-Identifier: Apache-2.0
# Copyright 2026 The dgd-lab Authors

import csv
import json
import os
import subprocess

import pytest

EXE = os.environ.get("DGD_LAB_EXE", "dgd_lab")


def run(*args, cwd=None):
    return subprocess.run([EXE, *map(str, args)], capture_output=True, text=True, cwd=cwd)


def test_usage_errors():
    assert run().returncode == 1
    assert run("pipeline", "--bogus").returncode == 1
    assert run("--version").returncode == 0


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "domains": [,]\n}\n')
    r = run("--config", bad, "pipeline", "--out", tmp_path / "out")
    assert r.returncode == 2
    assert ":2:" in r.stderr + r.stdout
    assert run("--config", tmp_path / "missing.json", "generate").returncode == 2


def test_generate(tiny_config, tmp_path):
    out = tmp_path / "data"
    r = run("--config", tiny_config, "--out", out, "generate")
    assert r.returncode == 0, r.stderr
    for d in (1, 2):
        assert (out / "data" / f"domain{d}.jsonl").exists()
        assert (out / "protocol" / f"domain{d}_probes.jsonl").exists()
        gallery = (out / "protocol" / f"domain{d}_gallery.jsonl").read_text().splitlines()
        assert len(gallery) == 4
    index = json.loads((out / "data" / "merged_index.json").read_text())
    assert index


def test_pipeline_stages_and_eval(tiny_config, tmp_path):
    out = tmp_path / "runs"
    r = run("--config", tiny_config, "--out", out, "--seed", 1, "--stages", "jstl", "pipeline")
    assert r.returncode == 0, r.stderr
    seed_dir = out / "seed_1"
    assert (seed_dir / "reports" / "jstl.json").exists()
    assert not (seed_dir / "reports" / "individual.json").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"

    data = tmp_path / "data"
    assert run("--config", tiny_config, "--out", data, "generate").returncode == 0
    ckpt = seed_dir / "checkpoints" / "jstl.json"
    cmc_csv = tmp_path / "cmc.csv"
    r = run("eval", "--checkpoint", ckpt, "--probes", data / "protocol" / "domain2_probes.jsonl",
            "--gallery", data / "protocol" / "domain2_gallery.jsonl", "--out", cmc_csv)
    assert r.returncode == 0, r.stderr
    rows = list(csv.DictReader(cmc_csv.open()))
    assert rows[-1]["accuracy"] == "1"

    # Probes whose identity is missing from the gallery break the protocol.
    r = run("eval", "--checkpoint", ckpt, "--probes", data / "protocol" / "domain1_probes.jsonl",
            "--gallery", data / "protocol" / "domain2_gallery.jsonl")
    assert r.returncode == 4


def test_impact_and_report(tiny_config, tmp_path):
    out = tmp_path / "runs"
    assert run("--config", tiny_config, "--out", out, "pipeline").returncode == 0
    assert (out / "summary.json").exists()
    assert (out / "table.csv").exists()
    ckpt = out / "seed_1" / "checkpoints" / "jstl.json"
    imp = tmp_path / "impact"
    r = run("--config", tiny_config, "--out", imp, "impact", "--checkpoint", ckpt,
            "--method", "both", "--domain", 2)
    assert r.returncode == 0, r.stderr
    assert (imp / "compare_domain2.csv").exists()
    assert "spearman" in r.stdout.lower()
    assert run("--out", out, "report").returncode == 0
