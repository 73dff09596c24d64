import json
import subprocess
import sys

import numpy as np
import pytest

from delightcap.cli import run
from delightcap.io import load_checkpoint, read_pfm

DATA = ["seed=3", "n_olat=2", "n_rendered=2", "n_olat_subjects=1", "n_olat_views=1", "n_scan_subjects=1",
        "n_lights=16", "hdri_height=8", "n_hdri_train=3", "n_hdri_eval=2", "render_size=48", "size=32",
        "tex_res=32", "focal=55.0"]
MODEL = ["image_size=32", "patch=8", "dim=16", "depth=1", "heads=2", "n_tokens=2"]


def cli(*args, sets=()):
    argv = list(args)
    for s in sets:
        argv += ["--set", s]
    return run(argv)


def last_error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def digests(path):
    return json.loads((path / "run_manifest.json").read_text())["outputs"]


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv("DELIGHTCAP_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


@pytest.fixture
def dataset(root):
    assert cli("generate", sets=DATA + ["out=data"]) == 0
    return root / "data"


def test_generate_is_reproducible(root, dataset):
    assert cli("generate", sets=DATA + ["out=again"]) == 0
    assert digests(dataset) == digests(root / "again")
    man = json.loads((dataset / "run_manifest.json").read_text())
    assert man["config"]["n_olat"] == 2 and man["config"]["beta"] == 4.0  # defaults echoed too
    assert man["seeds"]["seed"] == 3 and "wall_time_s" in man


def test_unknown_key_exits_2_naming_it(root, capsys):
    assert cli("generate", sets=["bogus_key=1"]) == 2
    err = last_error(capsys)
    assert err["exit_code"] == 2 and err["key"] == "bogus_key" and "bogus_key" in err["message"]


def test_config_file_with_overrides(root, capsys):
    cfg = root / "gen.cfg"
    cfg.write_text("# generate\n" + "\n".join(s.replace("=", " = ") for s in DATA) + "\nout = from_file\n")
    assert cli("generate", "--config", str(cfg), sets=["out=from_flag"]) == 0
    assert (root / "from_flag" / "manifest.jsonl").exists() and not (root / "from_file").exists()
    assert cli("generate", "--config", str(root / "missing.cfg")) == 2


def test_bad_override_syntax(root, capsys):
    assert cli("generate", sets=["novalue"]) == 2


def test_train_base_checkpoints(root, dataset):
    steps = ["steps=5", "batch=2", "data=data"]
    assert cli("train-base", sets=MODEL + steps + ["out=a"]) == 0
    assert cli("train-base", sets=MODEL + steps + ["out=b"]) == 0
    assert (root / "a" / "model.ckpt").read_bytes() == (root / "b" / "model.ckpt").read_bytes()
    cfg, params = load_checkpoint(root / "a" / "model.ckpt")
    assert cfg["kind"] == "base" and any(k.startswith("tokens.") for k in params)
    log = (root / "a" / "train_log.jsonl").read_text().splitlines()
    assert len(log) == 5
    assert cli("train-base", sets=MODEL + steps + ["out=c", "regime=mixed_no_dlm"]) == 0
    cfg, params = load_checkpoint(root / "c" / "model.ckpt")
    assert cfg["model"]["n_tokens"] == 0 and not any(k.startswith("tokens.") for k in params)


def test_train_base_regime_mismatch_is_a_data_error(root, capsys):
    assert cli("generate", sets=DATA + ["out=ronly", "n_olat=0"]) == 0
    assert cli("train-base", sets=MODEL + ["steps=1", "data=ronly", "regime=olat_only"]) == 3


@pytest.mark.filterwarnings("ignore:channel")
def test_delight_and_evaluate(root, dataset, capsys):
    assert cli("train-base", sets=MODEL + ["steps=2", "batch=2", "data=data", "out=base"]) == 0
    assert cli("delight", sets=["input=data", "checkpoint=base/model.ckpt", "out=d_r"]) == 0
    assert cli("delight", sets=["input=data", "checkpoint=base/model.ckpt", "out=d_o", "source=olat"]) == 0
    outs = sorted(p.name for p in (root / "d_r").glob("*_albedo.pfm"))
    assert len(outs) == 4
    man = json.loads((root / "d_r" / "run_manifest.json").read_text())
    assert len([k for k in man["outputs"] if k.endswith("_albedo.pfm")]) == 4 and man["inputs"]
    assert digests(root / "d_r") != digests(root / "d_o")
    assert cli("evaluate", sets=["pred=d_r", "gt=data", "out=ev", "method=toy"]) == 0
    summary = json.loads((root / "ev" / "summary.json").read_text())
    assert summary["toy"]["count"] == 4
    assert cli("report", sets=["runs=[\"ev\"]", "out=rep"]) == 0
    assert "toy" in (root / "rep" / "report.md").read_text()


def test_delight_missing_checkpoint(root, dataset, capsys):
    assert cli("delight", sets=["input=data", "checkpoint=nope.ckpt"]) == 3
    err = last_error(capsys)
    assert err["error"] == "data" and "nope.ckpt" in err["message"]


def test_train_detail(root, dataset):
    sets = ["data=data", "size=32", "channels=4", "levels=2", "steps=2", "batch=2"]
    assert cli("train-detail", sets=sets + ["out=e1"]) == 0
    assert cli("train-detail", sets=sets + ["out=e2"]) == 0
    assert (root / "e1" / "enhancer.ckpt").read_bytes() == (root / "e2" / "enhancer.ckpt").read_bytes()
    assert load_checkpoint(root / "e1" / "enhancer.ckpt")[0]["kind"] == "detail"


BUNDLE = ["kind=bundle", "tex_res=32", "bundle_size=48"]
RECON = ["resolution=32", "iters=20"]


def test_reconstruct_bundle_reproducible(root):
    assert cli("generate", sets=BUNDLE + ["out=bundle", "bundle_views=4"]) == 0
    assert cli("reconstruct", sets=RECON + ["bundle=bundle", "out=r1"]) == 0
    assert cli("reconstruct", sets=RECON + ["bundle=bundle", "out=r2"]) == 0
    assert digests(root / "r1") == digests(root / "r2")
    nums = (root / "r1" / "sh.txt").read_text().split("\n", 1)[1].split()
    assert len(nums) == 27 and all(np.isfinite(float(x)) for x in nums)
    assert read_pfm(root / "r1" / "albedo_uv.pfm").shape == (32, 32, 3)


def test_reconstruct_two_views(root):
    assert cli("generate", sets=BUNDLE + ["out=two", "bundle_views=2"]) == 0
    assert cli("reconstruct", sets=RECON + ["bundle=two", "out=r", "n_views=16"]) == 0
    assert json.loads((root / "r" / "report.json").read_text())["n_views"] == 2


def test_reconstruct_corrupt_camera(root, capsys):
    assert cli("generate", sets=BUNDLE + ["out=bad", "bundle_views=3"]) == 0
    cams = root / "bad" / "cameras.txt"
    lines = cams.read_text().splitlines()
    lines[2] = lines[2].rsplit(" ", 3)[0]
    cams.write_text("\n".join(lines) + "\n")
    assert cli("reconstruct", sets=RECON + ["bundle=bad"]) == 3
    assert "view01" in last_error(capsys)["message"]


def test_inputs_are_not_modified(root):
    assert cli("generate", sets=BUNDLE + ["out=b", "bundle_views=3"]) == 0
    before = digests(root / "b")
    assert cli("reconstruct", sets=RECON + ["bundle=b", "out=r"]) == 0
    from delightcap.io import tree_digests
    after = {k: v for k, v in tree_digests(root / "b").items() if k != "run_manifest.json"}
    assert after == before


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "delightcap.cli", "generate", "--set", "nonsense=1"],
                         capture_output=True, text=True, env={"DELIGHTCAP_OUTPUT_ROOT": str(tmp_path),
                                                              "PATH": "/usr/bin:/bin"})
    assert res.returncode == 2
    assert json.loads(res.stderr.strip())["key"] == "nonsense"
