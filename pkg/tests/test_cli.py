import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from attncite import synth
from attncite.baselines import save_embeddings
from attncite.chunking import IMG
from attncite.cli import main
from attncite.engine import citation_map_to_record
from attncite.trace import Trace, save_trace

FIXTURES = Path(__file__).parent / "fixtures"


def run_cli(args, env_threads=None):
    """Run in-process but with isolated env; returns (code, captured paths)."""
    old = os.environ.get("ATTN_CITE_THREADS")
    try:
        if env_threads is None:
            os.environ.pop("ATTN_CITE_THREADS", None)
        else:
            os.environ["ATTN_CITE_THREADS"] = str(env_threads)
        return main(args)
    finally:
        if old is None:
            os.environ.pop("ATTN_CITE_THREADS", None)
        else:
            os.environ["ATTN_CITE_THREADS"] = old


@pytest.fixture()
def planted_set(tmp_path):
    """Five planted traces + refs file + corpus file."""
    traces_dir = tmp_path / "traces"
    refs = {}
    for i in range(5):
        spec = synth.PlantSpec(
            n_src_sentences=5,
            tokens_per_sentence=6,
            n_gen_sentences=2,
            tokens_per_gen_sentence=10,
            support_map={0: frozenset({1}), 1: frozenset({3, i % 2 and IMG or 2})},
            noise_eps=0.05,
            seed=100 + i,
            margin=0.1,
        )
        meta, matrix, planted = synth.plant_trace(spec, 0.16)
        sample_id = f"sample_{i}"
        save_trace(Trace(meta=meta, attn=matrix), traces_dir / sample_id)
        refs[sample_id] = planted
    refs_path = tmp_path / "refs.jsonl"
    lines = [
        json.dumps({"id": sid, **citation_map_to_record(refs[sid])}, sort_keys=True)
        for sid in sorted(refs)
    ]
    refs_path.write_text("\n".join(lines) + "\n")
    return traces_dir, refs_path, refs


class TestAttribute:
    def test_single_trace(self, tmp_path):
        out = tmp_path / "pred.jsonl"
        code = run_cli(["attribute", "--trace", str(FIXTURES / "mini_text"), "--out", str(out)])
        assert code == 0
        record = json.loads(out.read_text())
        assert record["sid_map"] == {"0": [1], "1": [3], "2": [0, 2]}

    def test_trace_collection_and_determinism_across_threads(self, planted_set, tmp_path):
        traces_dir, _, _ = planted_set
        out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        assert run_cli(["attribute", "--trace", str(traces_dir), "--out", str(out1)], env_threads=1) == 0
        assert run_cli(["attribute", "--trace", str(traces_dir), "--out", str(out2)], env_threads=8) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_missing_trace_exit_3(self, tmp_path, capsys):
        code = run_cli(["attribute", "--trace", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert code == 3
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert "error" in err

    def test_mode_mismatch_exit_4(self, planted_set, tmp_path, capsys):
        traces_dir, _, _ = planted_set
        # sample_0 is TEXT-mode: forcing img-cap must fail with code 4
        code = run_cli(
            [
                "attribute",
                "--trace", str(traces_dir / "sample_0"),
                "--mode", "img-cap",
                "--out", str(tmp_path / "o.jsonl"),
            ]
        )
        assert code == 4

    def test_unknown_flag_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["attribute", "--bogus", "x"])
        assert exc.value.code == 2


class TestEval:
    def test_identity_scores_100(self, planted_set, tmp_path, capsys):
        traces_dir, refs_path, _ = planted_set
        pred = tmp_path / "pred.jsonl"
        assert run_cli(["attribute", "--trace", str(traces_dir), "--out", str(pred)]) == 0
        out = tmp_path / "report.json"
        code = run_cli(["eval", "--pred", str(pred), "--ref", str(refs_path), "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "Text Macro-F1   100.00" in stdout
        report = json.loads(out.read_text())
        assert report["text_macro_f1"] == 1.0
        assert report["joint_em"] == 1.0

    def test_block_format_refs(self, planted_set, tmp_path):
        traces_dir, _, refs = planted_set
        from attncite.corpus import format_reference_annotations

        block_path = tmp_path / "refs.txt"
        block_path.write_text(format_reference_annotations(refs))
        pred = tmp_path / "pred.jsonl"
        run_cli(["attribute", "--trace", str(traces_dir), "--out", str(pred)])
        assert run_cli(["eval", "--pred", str(pred), "--ref", str(block_path)]) == 0


class TestSweep:
    def test_grid_shape_and_table(self, planted_set, tmp_path):
        traces_dir, refs_path, _ = planted_set
        out = tmp_path / "sweep.json"
        code = run_cli(
            [
                "sweep",
                "--traces", str(traces_dir),
                "--refs", str(refs_path),
                "--k", "3,4",
                "--vote", "majority,max",
                "--tau", "0.10:0.20:0.05",
                "--out", str(out),
            ]
        )
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["cells"]) == 2 * 2 * 3
        cells = [(c["k"], c["vote"], c["tau"]) for c in payload["cells"]]
        assert cells == sorted(cells)
        table = out.with_suffix(".txt").read_text()
        assert table.count("\n") == 2 + len(payload["cells"])
        assert "Top-k" in table

    def test_majority_rows_dominate_max_rows_on_sink_fixtures(self, tmp_path):
        fixtures = tmp_path / "fx"
        assert run_cli(
            [
                "synth", "--out", str(fixtures), "--n-samples", "6", "--seed", "11",
                "--max-supports", "2", "--noise-eps", "0.1", "--tau", "0.3", "--sink",
            ]
        ) == 0
        out = tmp_path / "sweep.json"
        assert run_cli(
            [
                "sweep",
                "--traces", str(fixtures),
                "--refs", str(fixtures / "refs.jsonl"),
                "--k", "3,4,5",
                "--vote", "majority,max",
                "--tau", "0.1,0.16,0.2,0.3",
                "--out", str(out),
            ]
        ) == 0
        cells = json.loads(out.read_text())["cells"]
        by_key = {(c["k"], c["vote"], c["tau"]): c["report"]["text_macro_f1"] for c in cells}
        for k in (3, 4, 5):
            for tau in (0.1, 0.16, 0.2, 0.3):
                assert by_key[(k, "majority", tau)] > by_key[(k, "max", tau)], (k, tau)

    def test_determinism_across_threads(self, planted_set, tmp_path):
        traces_dir, refs_path, _ = planted_set
        outs = []
        for name, threads in (("s1.json", 1), ("s8.json", 8)):
            out = tmp_path / name
            run_cli(
                [
                    "sweep",
                    "--traces", str(traces_dir),
                    "--refs", str(refs_path),
                    "--k", "3",
                    "--vote", "majority",
                    "--tau", "0.1,0.2",
                    "--out", str(out),
                ],
                env_threads=threads,
            )
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]


class TestSynthCommand:
    def test_generates_loadable_fixtures(self, tmp_path):
        out = tmp_path / "fixtures"
        code = run_cli(
            ["synth", "--out", str(out), "--n-samples", "3", "--seed", "5", "--mode", "img-raw"]
        )
        assert code == 0
        pred = tmp_path / "pred.jsonl"
        assert run_cli(["attribute", "--trace", str(out), "--out", str(pred)]) == 0
        # planted refs are recovered by the default config
        assert (
            run_cli(["eval", "--pred", str(pred), "--ref", str(out / "refs.jsonl")]) == 0
        )

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run_cli(["synth", "--out", str(out), "--n-samples", "2", "--seed", "9"])
        for rel in ("sample_0000/meta.json", "sample_0000/attn.bin", "refs.jsonl"):
            assert (a / rel).read_bytes() == (b / rel).read_bytes()


class TestOtherCommands:
    def test_baseline_embed(self, tmp_path):
        from test_baselines import random_embedding_set

        emb_dir = tmp_path / "embs"
        emb_dir.mkdir()
        for i in range(3):
            save_embeddings(random_embedding_set(i, with_image=True), emb_dir / f"s{i}.json")
        out = tmp_path / "pred.jsonl"
        code = run_cli(["baseline-embed", "--emb", str(emb_dir), "--out", str(out)])
        assert code == 0
        assert len(out.read_text().splitlines()) == 3

    def test_parse_self(self, tmp_path):
        raw = tmp_path / "model_output.txt"
        raw.write_text("Output:\n[0] [1, IMG]\n[1] [0]\n")
        out = tmp_path / "pred.jsonl"
        assert run_cli(["parse-self", "--input", str(raw), "--out", str(out)]) == 0
        record = json.loads(out.read_text())
        assert record["sid_map"] == {"0": [1, "IMG"], "1": [0]}

    def test_parse_self_skip_bad(self, tmp_path, capsys):
        raw = tmp_path / "model_output.txt"
        raw.write_text("[0] [1]\n[1] [what]\n")
        out = tmp_path / "pred.jsonl"
        assert run_cli(["parse-self", "--input", str(raw), "--out", str(out)]) != 0
        assert (
            run_cli(["parse-self", "--input", str(raw), "--skip-bad", "--out", str(out)]) == 0
        )
        record = json.loads(out.read_text())
        assert record["sid_map"] == {"0": [1]}

    def test_filter_mimic_jsonl(self, tmp_path, capsys):
        from test_corpus import report_text

        reports = tmp_path / "reports.jsonl"
        lines = [
            json.dumps({"patient_id": "a", "text": report_text(9, 5)}),
            json.dumps({"patient_id": "b", "text": report_text(3, 5)}),
        ]
        reports.write_text("\n".join(lines) + "\n")
        out = tmp_path / "kept.jsonl"
        assert run_cli(["filter-mimic", "--input", str(reports), "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "kept             1" in stdout
        assert len(out.read_text().splitlines()) == 1

    def test_rouge_text_files(self, tmp_path, capsys):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        a.write_text("the cat")
        b.write_text("the cat sat")
        assert run_cli(["rouge", "--pred", str(a), "--ref", str(b)]) == 0
        stdout = capsys.readouterr().out
        assert "ROUGE-1 F       80.00" in stdout
        assert "ROUGE-L F       80.00" in stdout

    def test_report_table(self, tmp_path, capsys):
        f = tmp_path / "run.json"
        f.write_text(json.dumps({"text_macro_f1": 0.5, "text_em": 0.25, "joint_em": 0.1}))
        assert run_cli(["report", "--eval", str(f)]) == 0
        stdout = capsys.readouterr().out
        assert "50.00" in stdout and "25.00" in stdout

    def test_attribute_output_round_trips(self, planted_set, tmp_path):
        traces_dir, _, _ = planted_set
        out = tmp_path / "pred.jsonl"
        run_cli(["attribute", "--trace", str(traces_dir), "--out", str(out)])
        from attncite.engine import citation_map_from_record

        for line in out.read_text().splitlines():
            record = json.loads(line)
            back = citation_map_to_record(citation_map_from_record(record))
            assert back["sid_map"] == record["sid_map"]


class TestConfigFile:
    def test_config_sets_defaults_flags_override(self, planted_set, tmp_path):
        traces_dir, _, _ = planted_set
        cfg = tmp_path / "run.cfg"
        # tau=0.9 empties every sentence whose support splits the vote
        cfg.write_text("k=5\ntau=0.9\nvote=max\n")
        out_cfg = tmp_path / "cfg.jsonl"
        out_flag = tmp_path / "flag.jsonl"
        out_base = tmp_path / "base.jsonl"
        # config changes the result vs. built-in defaults
        assert run_cli(["attribute", "--trace", str(traces_dir), "--out", str(out_base)]) == 0
        assert run_cli(
            ["attribute", "--config", str(cfg), "--trace", str(traces_dir), "--out", str(out_cfg)]
        ) == 0
        # explicit flags override the config values
        assert run_cli(
            [
                "attribute", "--config", str(cfg), "--vote", "majority", "--k", "3",
                "--tau", "0.16", "--trace", str(traces_dir), "--out", str(out_flag),
            ]
        ) == 0
        assert run_cli(["attribute", "--trace", str(traces_dir), "--out", str(out_base)]) == 0
        assert out_flag.read_bytes() == out_base.read_bytes()
        assert out_cfg.read_bytes() != out_base.read_bytes()

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus_key=1\n")
        code = run_cli(["attribute", "--config", str(cfg), "--trace", "x", "--out", "y"])
        assert code == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert "bogus_key" in err["detail"]

    def test_missing_config_exit_3(self, tmp_path):
        code = run_cli(
            ["attribute", "--config", str(tmp_path / "none.cfg"), "--trace", "x", "--out", "y"]
        )
        assert code == 3


class TestEvalExtras:
    def test_pooled_flag(self, planted_set, tmp_path, capsys):
        traces_dir, refs_path, _ = planted_set
        pred = tmp_path / "pred.jsonl"
        run_cli(["attribute", "--trace", str(traces_dir), "--out", str(pred)])
        assert run_cli(
            ["eval", "--pred", str(pred), "--ref", str(refs_path), "--pooled"]
        ) == 0
        stdout = capsys.readouterr().out
        assert "pooled over sentences:" in stdout

    def test_corpus_validation_catches_out_of_range_ref(self, tmp_path):
        from attncite.corpus import Sample, save_corpus

        corpus_path = tmp_path / "corpus.jsonl"
        save_corpus([Sample(id="s", source="One two. Three four.", image=False)], corpus_path)
        refs = tmp_path / "refs.jsonl"
        refs.write_text(json.dumps({"id": "s", "sid_map": {"0": [7]}}) + "\n")
        pred = tmp_path / "pred.jsonl"
        pred.write_text(json.dumps({"id": "s", "sid_map": {"0": [0]}}) + "\n")
        code = run_cli(
            ["eval", "--pred", str(pred), "--ref", str(refs), "--corpus", str(corpus_path)]
        )
        assert code == 1


class TestBaselineThresholdSweep:
    def test_threshold_grid_picks_best(self, tmp_path, capsys):
        from test_baselines import random_embedding_set

        emb_dir = tmp_path / "embs"
        emb_dir.mkdir()
        refs = {}
        for i in range(4):
            emb = random_embedding_set(i, with_image=False)
            save_embeddings(emb, emb_dir / f"s{i}.json")
            # references = what a mid threshold would produce, so the sweep
            # has a meaningful optimum
            from attncite.baselines import BaselineConfig, embed_attribute

            refs[f"s{i}"] = embed_attribute(emb, BaselineConfig(threshold_text=0.4))
        refs_path = tmp_path / "refs.jsonl"
        refs_path.write_text(
            "\n".join(
                json.dumps({"id": sid, **citation_map_to_record(refs[sid])}, sort_keys=True)
                for sid in sorted(refs)
            )
            + "\n"
        )
        out = tmp_path / "pred.jsonl"
        code = run_cli(
            [
                "baseline-embed",
                "--emb", str(emb_dir),
                "--thresholds", "0.2:0.6:0.2",
                "--refs", str(refs_path),
                "--out", str(out),
            ]
        )
        assert code == 0
        stdout = capsys.readouterr().out
        assert "best threshold by Text F1: 0.40" in stdout
        assert len(out.read_text().splitlines()) == 4


def test_console_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "attncite.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "attribute" in proc.stdout
