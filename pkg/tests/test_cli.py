import numpy as np
import pytest

from nomadlite.audio_core import Waveform, save_wav
from nomadlite.cli import build_parser, main
from nomadlite.degrade import read_manifest
from nomadlite.net import load_checkpoint
from nomadlite.score import read_scores
from nomadlite.triplets import read_triplets

from conftest import make_utterance


def write_clean_corpus(d, n=4, duration_s=1.0):
    d.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        save_wav(make_utterance(seed=100 + i, duration_s=duration_s), d / f"src{i}.wav")


class TestParser:
    def test_no_command_fails(self, capsys):
        assert main([]) == 1

    def test_unknown_command_fails(self):
        assert main(["frobnicate"]) == 1

    def test_unknown_flag_fails(self):
        assert main(["nsim", "--ref", "a.wav", "--deg", "b.wav", "--bogus"]) == 1

    def test_missing_required_flag_fails(self):
        assert main(["nsim", "--ref", "a.wav"]) == 1

    def test_help_exits_zero(self):
        for cmd in ([], ["synth"], ["nsim"], ["triplets"], ["train"],
                    ["score"], ["eval-mos"], ["eval-rank"], ["feature-loss"]):
            with pytest.raises(SystemExit) as e:
                build_parser().parse_args(cmd + ["--help"])
            assert e.value.code == 0

    def test_train_defaults(self):
        parser = build_parser()
        args = parser.parse_args(["train", "--triplets", "t", "--val", "v", "--out", "o"])
        assert args.margin == 0.2
        assert args.batch == 8
        assert args.lr == 1e-3

    def test_missing_input_file_exit_one(self, tmp_path):
        assert main(["--quiet", "nsim", "--ref", str(tmp_path / "no.wav"),
                     "--deg", str(tmp_path / "no.wav")]) == 1


class TestNsimCommand:
    def test_identity_prints_one(self, tmp_path, capsys):
        path = tmp_path / "u.wav"
        save_wav(make_utterance(seed=1, duration_s=1.0), path)
        assert main(["--quiet", "nsim", "--ref", str(path), "--deg", str(path)]) == 0
        assert capsys.readouterr().out.strip() == "1.000000"

    def test_degraded_below_one(self, tmp_path, capsys):
        ref = tmp_path / "ref.wav"
        deg = tmp_path / "deg.wav"
        w = make_utterance(seed=2, duration_s=1.0)
        save_wav(w, ref)
        noisy = w.samples + 0.05 * np.random.default_rng(0).standard_normal(len(w.samples))
        save_wav(Waveform(np.clip(noisy, -1, 1), w.sample_rate), deg)
        assert main(["--quiet", "nsim", "--ref", str(ref), "--deg", str(deg)]) == 0
        value = float(capsys.readouterr().out)
        assert 0.0 < value < 1.0


class TestConfigFile:
    def test_overrides_defaults_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text("# comment\nmargin = 0.5\nbatch=4\n")
        parser = build_parser()
        from nomadlite.cli import _load_config_file
        overrides = _load_config_file(cfg)
        assert overrides == {"margin": "0.5", "batch": "4"}

    def test_applied_through_main(self, tmp_path, capsys):
        # a malformed config file is a usage error
        cfg = tmp_path / "bad.txt"
        cfg.write_text("no equals sign here\n")
        assert main(["--config", str(cfg), "nsim", "--ref", "a", "--deg", "b"]) == 1


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Small end-to-end run: synth -> triplets -> train -> score."""
    root = tmp_path_factory.mktemp("cli_pipeline")
    clean = root / "clean"
    write_clean_corpus(clean, n=4)
    data = root / "data"
    rc = main(["--quiet", "--seed", "7", "synth", "--clean-dir", str(clean),
               "--out", str(data), "--families", "clip,noise"])
    assert rc == 0
    rc = main(["--quiet", "--seed", "7", "triplets", "--manifest", str(data / "manifest.csv"),
               "--count", "40", "--out", str(root)])
    assert rc == 0
    ckpt = root / "model.ckpt"
    rc = main(["--quiet", "--seed", "7", "train",
               "--triplets", str(root / "triplets_train.csv"),
               "--val", str(root / "triplets_val.csv"),
               "--max-epochs", "1", "--patience", "1", "--out", str(ckpt)])
    assert rc == 0
    return root, clean, data, ckpt


class TestPipeline:
    def test_synth_outputs(self, pipeline):
        root, clean, data, ckpt = pipeline
        manifest = read_manifest(data / "manifest.csv")
        # 4 sources x (clean + 2 families x 5 levels)
        assert len(manifest) == 4 * 11
        assert all((data / r.clip_path).name for r in manifest)

    def test_triplets_outputs(self, pipeline):
        root, *_ = pipeline
        train = read_triplets(root / "triplets_train.csv")
        val = read_triplets(root / "triplets_val.csv")
        assert len(train) + len(val) == 40
        assert {r.source_id for r in train} & {r.source_id for r in val} == set()

    def test_train_outputs(self, pipeline):
        root, clean, data, ckpt = pipeline
        model = load_checkpoint(ckpt)
        assert model.config.embed_dim == 256
        report = (str(ckpt) + ".report.csv")
        with open(report) as f:
            assert f.readline().strip() == "epoch,train_loss,val_loss,lr"

    def test_score_nmr_and_rank(self, pipeline, capsys):
        root, clean, data, ckpt = pipeline
        scores_path = root / "scores.csv"
        rc = main(["--quiet", "score", "--model", str(ckpt), "--input-dir", str(data),
                   "--pool-dir", str(clean), "--mode", "nmr", "--out", str(scores_path)])
        assert rc == 0
        rows = read_scores(scores_path)
        assert len(rows) == 4 * 11
        assert all(r.mode == "nmr" and 0.0 <= r.nomad <= 2.0 for r in rows)
        rc = main(["--quiet", "eval-rank", "--scores", str(scores_path),
                   "--manifest", str(data / "manifest.csv")])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("family,spearman")
        assert "noise," in out and "clip," in out

    def test_score_fr(self, pipeline):
        root, clean, data, ckpt = pipeline
        # fr mode needs <source>__clean.wav counterparts; synth writes them
        # into the data dir itself
        scores_path = root / "scores_fr.csv"
        rc = main(["--quiet", "score", "--model", str(ckpt), "--input-dir", str(data),
                   "--pool-dir", str(data), "--mode", "fr", "--out", str(scores_path)])
        assert rc == 0
        rows = read_scores(scores_path)
        by_clip = {r.clip_path: r for r in rows}
        clean_rows = [r for p, r in by_clip.items() if p.endswith("__clean.wav")]
        assert clean_rows and all(r.nomad == 0.0 for r in clean_rows)

    def test_eval_mos(self, pipeline, tmp_path, capsys):
        root, clean, data, ckpt = pipeline
        scores = read_scores(root / "scores.csv")
        mos_path = tmp_path / "mos.csv"
        manifest = {r.clip_path: r for r in read_manifest(data / "manifest.csv")}
        with open(mos_path, "w") as f:
            f.write("clip_path,condition_id,mos\n")
            for s in scores:
                row = manifest[s.clip_path]
                # synthetic MOS: linear in the distance score itself
                f.write(f"{s.clip_path},{row.family}_l{row.level_index},{5 - 2 * s.nomad}\n")
        rc = main(["--quiet", "eval-mos", "--scores", str(root / "scores.csv"),
                   "--mos", str(mos_path)])
        assert rc == 0
        first = capsys.readouterr().out.splitlines()[0]
        assert "PC: -1.0000" in first and "SC: -1.0000" in first

    def test_feature_loss_command(self, pipeline, capsys):
        root, clean, data, ckpt = pipeline
        ref = str(clean / "src0.wav")
        deg = str(data / "src0__noise_l0.wav")
        assert main(["--quiet", "feature-loss", "--model", str(ckpt),
                     "--clean", ref, "--estimate", ref]) == 0
        assert float(capsys.readouterr().out) == 0.0
        assert main(["--quiet", "feature-loss", "--model", str(ckpt),
                     "--clean", ref, "--estimate", deg]) == 0
        assert float(capsys.readouterr().out) > 0.0

    def test_synth_rerun_deterministic(self, pipeline, tmp_path):
        root, clean, data, ckpt = pipeline
        again = tmp_path / "again"
        rc = main(["--quiet", "--seed", "7", "synth", "--clean-dir", str(clean),
                   "--out", str(again), "--families", "clip,noise"])
        assert rc == 0
        for p in sorted(data.glob("*.wav")):
            assert (again / p.name).read_bytes() == p.read_bytes()
