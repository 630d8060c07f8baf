"""End-to-end CLI behaviour on a small generated world."""

import contextlib
import io
import json
from pathlib import Path

import pytest

from kbadapter import kprs
from kbadapter.cli import main
from kbadapter.manifest import read_manifest
from kbadapter.model import load_checkpoint

CONFIG = {
    "world": {
        "facts_per_domain": 6,
        "pretrain_facts_per_domain": 16,
        "train_dialogues_per_domain": 4,
        "eval_dialogues_per_domain": 4,
        "multi_train": 2,
        "multi_eval": 2,
    },
    "model": {
        "d_model": 64, "n_heads": 4, "enc_layers": 2, "dec_layers": 2,
        "ffn_dim": 128, "max_len": 128, "dropout": 0.1,
    },
    "train": {
        "learning_rate": 0.001, "max_epochs": 2, "early_stop_patience": 5,
        "batch_size": 16,
    },
}


def run_cli(*args):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in args])
    return code, out.getvalue(), err.getvalue()


def run_ok(*args):
    code, out, err = run_cli(*args)
    assert code == 0, err or out
    return out


def tree_bytes(root, skip=()):
    root = Path(root)
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name not in skip
    }


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Config, generated world, corpus, and one memorized checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "config.json"
    config.write_text(json.dumps(CONFIG), encoding="utf-8")
    world = root / "world"
    run_ok("gen-world", "--out", world, "--config", config, "--seed", 3)
    corpus = root / "corpus.jsonl"
    run_ok("verbalize", "--kb", world / "kb", "--templates", world / "templates",
           "--out", corpus, "--config", config)
    mem = root / "mem-bistro"
    run_ok("memorize", "--model", "new", "--vocab", world / "vocab.txt",
           "--corpus", corpus, "--domain", "bistro", "--out", mem,
           "--config", config, "--seed", 3)
    return {"root": root, "config": config, "world": world,
            "corpus": corpus, "mem": mem}


# -------------------------------------------------------------- gen-world


def test_gen_world_layout(ws):
    world = ws["world"]
    for rel in ("kb/bistro.json", "kb/coach.json", "kb/lodge.json",
                "kb/museum.json", "pretrain_kb/bistro.json",
                "templates/bistro.json", "dialogues/train.json",
                "dialogues/eval.json", "entity_split.json", "vocab.txt",
                "manifest.json"):
        assert (world / rel).is_file(), rel
    manifest = read_manifest(world / "manifest.json")
    assert manifest.command == "gen-world" and manifest.seed == 3


def test_gen_world_rerun_byte_identical(ws, tmp_path):
    again = tmp_path / "world"
    out = run_ok("gen-world", "--out", again, "--config", ws["config"], "--seed", 3)
    stats = json.loads(out)
    assert stats["domains"] == ["bistro", "coach", "lodge", "museum"]
    assert stats["facts"] == {d: 6 for d in stats["domains"]}
    ours = tree_bytes(ws["world"], skip=("manifest.json",))
    theirs = tree_bytes(again, skip=("manifest.json",))
    assert ours == theirs


def test_gen_world_seed_changes_world(ws, tmp_path):
    other = tmp_path / "world"
    run_ok("gen-world", "--out", other, "--config", ws["config"], "--seed", 4)
    assert (other / "kb/bistro.json").read_bytes() != (
        ws["world"] / "kb/bistro.json"
    ).read_bytes()


# ----------------------------------------------------------------- ingest


RESTAURANT = {
    "name": "Pizza Hut City Centre",
    "address": "Regent Street City Centre",
    "area": "centre",
    "food": "Italian",
    "phone": "01223323737",
    "postcode": "cb21ab",
    "pricerange": "cheap",
    "type": "restaurant",
    "location": "[51.20103, 0.126023]",
}


def test_ingest_validates_and_reruns(tmp_path):
    raw = tmp_path / "raw.json"
    bad = dict(RESTAURANT, name="No Phone Place")
    del bad["phone"]
    raw.write_text(json.dumps([RESTAURANT, bad]), encoding="utf-8")
    out_dir = tmp_path / "kb"
    stdout = run_ok("ingest", "--kb", raw, "--domain", "restaurant", "--out", out_dir)
    report = json.loads(stdout)
    assert report["kept"] == 1 and report["dropped"] == 1
    assert (out_dir / "restaurant.json").is_file()
    first = tree_bytes(out_dir)
    run_ok("ingest", "--kb", raw, "--domain", "restaurant", "--out", out_dir)
    assert tree_bytes(out_dir) == first


# -------------------------------------------------------------- verbalize


def test_verbalize_counts_and_rerun(ws):
    stdout = run_ok("verbalize", "--kb", ws["world"] / "kb",
                    "--templates", ws["world"] / "templates",
                    "--out", ws["corpus"], "--config", ws["config"])
    assert json.loads(stdout)["statements"] == 4 * 6 * (5 + 1)
    first = ws["corpus"].read_bytes()
    manifest_first = (ws["root"] / "corpus.jsonl.manifest.json").read_bytes()
    run_ok("verbalize", "--kb", ws["world"] / "kb",
           "--templates", ws["world"] / "templates",
           "--out", ws["corpus"], "--config", ws["config"])
    assert ws["corpus"].read_bytes() == first
    assert (ws["root"] / "corpus.jsonl.manifest.json").read_bytes() == manifest_first


# --------------------------------------------------------------- memorize


def test_memorize_checkpoint_contents(ws):
    mem = ws["mem"]
    for name in ("config.json", "vocab.txt", "shapes.json", "plm.bin",
                 "adapter.bistro.enc.bin", "adapter.bistro.dec.bin", "gate.bin",
                 "stage_report.json", "manifest.json"):
        assert (mem / name).is_file(), name
    report = json.loads((mem / "stage_report.json").read_text(encoding="utf-8"))
    assert report["stage"] == "memorization"
    assert report["frozen_checksum_ok"] is True
    assert report["epochs_run"] == 2
    model, tokenizer = load_checkpoint(mem)
    assert model.domains == ("bistro",)


def test_memorize_rerun_byte_identical(ws, tmp_path):
    out = tmp_path / "mem"
    args = ("memorize", "--model", "new", "--vocab", ws["world"] / "vocab.txt",
            "--corpus", ws["corpus"], "--domain", "bistro", "--out", out,
            "--config", ws["config"], "--seed", 3)
    run_ok(*args)
    first = tree_bytes(out, skip=("manifest.json",))
    assert first == tree_bytes(ws["mem"], skip=("manifest.json",))
    run_ok(*args)
    assert tree_bytes(out, skip=("manifest.json",)) == first


def test_memorize_extends_checkpoint_and_freezes_backbone(ws, tmp_path):
    out = tmp_path / "mem2"
    run_ok("memorize", "--model", ws["mem"], "--corpus", ws["corpus"],
           "--domain", "lodge", "--out", out, "--config", ws["config"], "--seed", 5)
    model, _ = load_checkpoint(out)
    assert model.domains == ("bistro", "lodge")
    assert (out / "plm.bin").read_bytes() == (ws["mem"] / "plm.bin").read_bytes()


def test_memorize_unknown_domain_fails(ws, tmp_path):
    code, _, err = run_cli("memorize", "--model", "new",
                           "--vocab", ws["world"] / "vocab.txt",
                           "--corpus", ws["corpus"], "--domain", "castle",
                           "--out", tmp_path / "x", "--config", ws["config"])
    assert code == 1
    payload = json.loads(err)
    assert payload["error"] == "ValueError" and "castle" in payload["message"]


def test_memorize_cache_round_trip(ws, tmp_path, monkeypatch):
    monkeypatch.setenv("KBADAPTER_CACHE", str(tmp_path / "cache"))
    args = lambda out: ("memorize", "--model", "new",
                        "--vocab", ws["world"] / "vocab.txt",
                        "--corpus", ws["corpus"], "--domain", "bistro",
                        "--out", out, "--config", ws["config"], "--seed", 3)
    run_ok(*args(tmp_path / "miss"))
    assert (tmp_path / "cache" / "init").is_dir()
    run_ok(*args(tmp_path / "hit"))
    skip = ("manifest.json",)
    assert tree_bytes(tmp_path / "hit", skip=skip) == tree_bytes(tmp_path / "miss", skip=skip)
    assert tree_bytes(tmp_path / "hit", skip=skip) == tree_bytes(ws["mem"], skip=skip)


# ---------------------------------------------------------------- utilize


def test_utilize_freezes_adapter_bytes(ws, tmp_path):
    out = tmp_path / "util"
    run_ok("utilize", "--model", ws["mem"], "--adapters", ws["mem"],
           "--data", ws["world"] / "dialogues" / "train.json",
           "--out", out, "--config", ws["config"], "--seed", 7)
    for name in ("adapter.bistro.enc.bin", "adapter.bistro.dec.bin"):
        assert (out / name).read_bytes() == (ws["mem"] / name).read_bytes()
    assert (out / "plm.bin").read_bytes() != (ws["mem"] / "plm.bin").read_bytes()
    report = json.loads((out / "stage_report.json").read_text(encoding="utf-8"))
    assert report["stage"] == "utilization"
    manifest = read_manifest(out / "manifest.json")
    assert "adapters[0]" in manifest.inputs


def test_utilize_rejects_duplicate_adapter_domains(ws, tmp_path):
    code, _, err = run_cli("utilize", "--model", ws["mem"],
                           "--adapters", ws["mem"], ws["mem"],
                           "--data", ws["world"] / "dialogues" / "train.json",
                           "--out", tmp_path / "dup", "--config", ws["config"])
    assert code == 1 and json.loads(err)["error"] == "ValueError"


# --------------------------------------------------------------- baseline


def test_baseline_seq_orders_domains(ws, tmp_path):
    out = tmp_path / "seq"
    run_ok("baseline", "--mode", "seq", "--model", "new",
           "--vocab", ws["world"] / "vocab.txt", "--data", ws["corpus"],
           "--out", out, "--config", ws["config"], "--seed", 3)
    report = json.loads((out / "stage_report.json").read_text(encoding="utf-8"))
    assert report["stage"] == "sequential"
    assert report["domain_order"] == ["bistro", "coach", "lodge", "museum"]
    model, _ = load_checkpoint(out)
    assert model.domains == ()


def test_baseline_rand_requires_domains(ws, tmp_path):
    code, _, err = run_cli("baseline", "--mode", "rand", "--model", ws["mem"],
                           "--data", ws["world"] / "dialogues" / "train.json",
                           "--out", tmp_path / "rand", "--config", ws["config"])
    assert code == 1 and "--domains" in json.loads(err)["message"]


def test_baseline_rand_trains_with_frozen_random_adapters(ws, tmp_path):
    out = tmp_path / "rand"
    run_ok("baseline", "--mode", "rand", "--model", ws["mem"],
           "--data", ws["world"] / "dialogues" / "train.json",
           "--domains", "bistro,lodge", "--out", out,
           "--config", ws["config"], "--seed", 9)
    report = json.loads((out / "stage_report.json").read_text(encoding="utf-8"))
    assert report["stage"] == "rand_init"
    model, _ = load_checkpoint(out)
    assert model.domains == ("bistro", "lodge")


# --------------------------------------------------------------- gen-kprs


def test_gen_kprs_jobs_invariant(ws, tmp_path):
    eval_file = ws["world"] / "dialogues" / "eval.json"
    one = tmp_path / "kprs1.jsonl"
    two = tmp_path / "kprs2.jsonl"
    out1 = run_ok("gen-kprs", "--dialogues", eval_file, "--kbs", ws["world"] / "kb",
                  "--out", one, "--seed", 0, "--jobs", 1)
    out2 = run_ok("gen-kprs", "--dialogues", eval_file, "--kbs", ws["world"] / "kb",
                  "--out", two, "--seed", 0, "--jobs", 2)
    assert one.read_bytes() == two.read_bytes()
    assert json.loads(out1) == json.loads(out2)
    stats = json.loads(out1)
    assert stats["total"] == len(kprs.read_samples(one)) > 0
    rerun = run_ok("gen-kprs", "--dialogues", eval_file, "--kbs", ws["world"] / "kb",
                   "--out", one, "--seed", 0, "--jobs", 1)
    assert one.read_bytes() == two.read_bytes() and json.loads(rerun) == stats


def test_gen_kprs_model_filter(ws, tmp_path):
    src = json.loads(
        (ws["world"] / "dialogues" / "eval.json").read_text(encoding="utf-8")
    )
    head = tmp_path / "head.json"
    head.write_text(json.dumps(src[:4]), encoding="utf-8")
    plain = tmp_path / "plain.jsonl"
    filtered = tmp_path / "filtered.jsonl"
    run_ok("gen-kprs", "--dialogues", head, "--kbs", ws["world"] / "kb",
           "--out", plain, "--seed", 0)
    run_ok("gen-kprs", "--dialogues", head, "--kbs", ws["world"] / "kb",
           "--filter-lm", ws["mem"], "--out", filtered, "--seed", 0)
    assert len(kprs.read_samples(filtered)) <= len(kprs.read_samples(plain))
    first = filtered.read_bytes()
    run_ok("gen-kprs", "--dialogues", head, "--kbs", ws["world"] / "kb",
           "--filter-lm", ws["mem"], "--out", filtered, "--seed", 0)
    assert filtered.read_bytes() == first


# ------------------------------------------------------------------- eval


@pytest.fixture(scope="module")
def kprs_file(ws):
    path = ws["root"] / "kprs.jsonl"
    run_ok("gen-kprs", "--dialogues", ws["world"] / "dialogues" / "eval.json",
           "--kbs", ws["world"] / "kb", "--out", path, "--seed", 0)
    return path


def test_eval_kprs_report(ws, kprs_file, tmp_path):
    report_path = tmp_path / "kprs-report.json"
    run_ok("eval", "--task", "kprs", "--model", ws["mem"], "--data", kprs_file,
           "--out", report_path)
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert 0.0 <= report["accuracy"] <= 1.0
    assert report["n"] == len(kprs.read_samples(kprs_file))
    assert set(report["per_domain"]) <= {"bistro", "coach", "lodge", "museum", "multi"}
    first = report_path.read_bytes()
    run_ok("eval", "--task", "kprs", "--model", ws["mem"], "--data", kprs_file,
           "--out", report_path)
    assert report_path.read_bytes() == first


def test_eval_memorization_report(ws):
    stdout = run_ok("eval", "--task", "memorization", "--model", ws["mem"],
                    "--data", ws["corpus"], "--seed", 0)
    report = json.loads(stdout)
    assert set(report) == {"overall", "per_domain", "n"}
    assert set(report["per_domain"]) == {"bistro", "coach", "lodge", "museum"}
    assert report["n"] == 4 * 6 * 6


def test_eval_rg_gold_generations(ws, tmp_path):
    dialogues = kprs.load_dialogues(ws["world"] / "dialogues" / "eval.json")
    rows = []
    for dlg in dialogues[:2]:
        i = next(
            i for i, t in enumerate(dlg.turns) if t.speaker == "system" and i > 0
        )
        rows.append({
            "context": [t.to_json() for t in dlg.turns[:i]],
            "gold_response": dlg.turns[i].text,
            "generated_response": dlg.turns[i].text,
        })
    data = tmp_path / "rg.jsonl"
    data.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    stdout = run_ok("eval", "--task", "rg", "--model", ws["mem"], "--data", data,
                    "--kbs", ws["world"] / "kb")
    report = json.loads(stdout)
    assert report["inform_rate"] == 1.0
    assert report["success_rate"] == 1.0
    assert report["bleu"] == 100.0
    assert report["n"] == 2


def test_eval_rg_generates_missing_responses(ws, tmp_path):
    dialogues = kprs.load_dialogues(ws["world"] / "dialogues" / "eval.json")
    dlg = dialogues[0]
    i = next(i for i, t in enumerate(dlg.turns) if t.speaker == "system" and i > 0)
    row = {
        "context": [t.to_json() for t in dlg.turns[:i]],
        "gold_response": dlg.turns[i].text,
    }
    data = tmp_path / "rg.jsonl"
    data.write_text(json.dumps(row) + "\n", encoding="utf-8")
    stdout = run_ok("eval", "--task", "rg", "--model", ws["mem"], "--data", data,
                    "--kbs", ws["world"] / "kb")
    report = json.loads(stdout)
    assert report["n"] == 1 and 0.0 <= report["inform_rate"] <= 1.0


def test_eval_rg_requires_kbs(ws, kprs_file):
    code, _, err = run_cli("eval", "--task", "rg", "--model", ws["mem"],
                           "--data", kprs_file)
    assert code == 1 and "--kbs" in json.loads(err)["message"]


def test_missing_input_reports_json_error(tmp_path):
    code, _, err = run_cli("ingest", "--kb", tmp_path / "absent.json",
                           "--domain", "restaurant", "--out", tmp_path / "o")
    assert code == 1
    payload = json.loads(err)
    assert set(payload) == {"error", "message"}
