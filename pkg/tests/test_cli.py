import hashlib
import math

import numpy as np
import pytest

from helios import cli, operator_net as on, rng


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def kv(text):
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k.strip()] = v.strip()
    return out


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("HELIOS_OUT_DIR", str(tmp_path / "out"))
    return tmp_path / "out"


class TestUsage:
    def test_no_arguments(self, capsys):
        code, out, err = run([], capsys)
        assert code == 1
        assert "usage" in err and out == ""

    def test_unknown_flag(self, capsys):
        code, _, err = run(["bounds", "--k", "4", "--xi", "6", "--theta", "4.2", "--bogus"], capsys)
        assert code == 1
        assert "unrecognized arguments" in err

    def test_unknown_command(self, capsys):
        assert run(["frobnicate"], capsys)[0] == 1

    @pytest.mark.parametrize("command", sorted(cli.COMMANDS))
    def test_help_on_every_subcommand(self, command, capsys):
        code, out, _ = run([command, "--help"], capsys)
        assert code == 0
        assert "usage" in out
        if command != "model-info":
            assert "--seed" in out

    def test_runtime_error_exit_code(self, capsys, tmp_path):
        code, _, err = run(["model-info", "--model", str(tmp_path / "missing.donx")], capsys)
        assert code == 2
        assert "error" in err

    def test_bad_model_file(self, capsys, tmp_path):
        (tmp_path / "bad.donx").write_bytes(b"nope")
        assert run(["model-info", "--model", str(tmp_path / "bad.donx")], capsys)[0] == 2


class TestBounds:
    def test_reference_values(self, capsys):
        code, out, _ = run(["bounds", "--k", "4", "--xi", "6", "--theta", "4.1715", "-q"], capsys)
        assert code == 0
        vals = kv(out)
        assert float(vals["prior_bound"]) == pytest.approx(1 / 60)
        assert float(vals["posterior_root"]) == pytest.approx(1.0392e-2, abs=5e-6)
        assert vals["seed"] == str(rng.CANONICAL_SEED)

    def test_seed_echo(self, capsys):
        code, out, _ = run(["bounds", "--k", "4", "--xi", "6", "--theta", "4.2", "--seed", "0x10"], capsys)
        assert code == 0 and kv(out)["seed"] == "16"

    def test_progress_on_stderr_only(self, capsys):
        _, out, err = run(["bounds", "--k", "4", "--xi", "6", "--theta", "4.2"], capsys)
        assert "helios" in err and "threads" in err
        assert "threads" not in out


class TestConfigFile:
    def test_values_and_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "b.cfg"
        cfg.write_text("# reference geometry\nk = 4\nxi = 6   # metres\ntheta = 4.1715\n\nlam = 5\n")
        _, out, _ = run(["bounds", "--config", str(cfg), "-q"], capsys)
        base = kv(out)
        assert float(base["posterior_root"]) == pytest.approx(1.0392e-2, abs=5e-6)
        _, out, _ = run(["bounds", "--config", str(cfg), "--xi", "8", "-q"], capsys)
        assert kv(out)["xi"] == "8.0"

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "b.cfg"
        cfg.write_text("colour = blue\n")
        assert run(["bounds", "--config", str(cfg)], capsys)[0] == 1

    def test_malformed_line(self, tmp_path, capsys):
        cfg = tmp_path / "b.cfg"
        cfg.write_text("k 4\n")
        assert run(["bounds", "--config", str(cfg)], capsys)[0] == 1


class TestGenData:
    def test_deterministic_file(self, tmp_path, capsys):
        args = ["gen-data", "--n-sources", "2", "--aperture", "s1", "--n-cfg", "10", "--n-aux", "4", "--seed", "7"]
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        assert run(args + ["--out", str(a)], capsys)[0] == 0
        assert run(args + ["--out", str(b)], capsys)[0] == 0
        assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()

    def test_csv_and_summary(self, tmp_path, capsys):
        code, out, _ = run(["gen-data", "--aperture", "s3", "--n-cfg", "2", "--n-aux", "3", "--out",
                            str(tmp_path / "d.bin"), "--csv", str(tmp_path / "d.csv")], capsys)
        assert code == 0
        assert kv(out)["triplets"] == "6"
        header = (tmp_path / "d.csv").read_text().splitlines()[0].split(",")
        assert len(header) == 2 * 6 + 3

    def test_overrides(self, tmp_path, capsys):
        from helios.dataset import load_dataset
        run(["gen-data", "--sensors", "5", "--half-angle", "1.0", "--n-cfg", "1", "--n-aux", "2",
             "--out", str(tmp_path / "d.bin")], capsys)
        ap = load_dataset(tmp_path / "d.bin").header.aperture
        assert (ap.sensor_count, ap.half_angle) == (5, 1.0)


class TestTrainPredict:
    def test_train_predict_model_info(self, tmp_path, capsys):
        data, model, loss = tmp_path / "d.bin", tmp_path / "m.donx", tmp_path / "loss.csv"
        run(["gen-data", "--aperture", "s3", "--n-cfg", "4", "--n-aux", "8", "--out", str(data)], capsys)
        code, out, _ = run(["train", "--data", str(data), "--iters", "3", "--batch-size", "16",
                            "--out", str(model), "--loss-csv", str(loss), "-q"], capsys)
        assert code == 0
        assert int(kv(out)["iterations"]) == 3
        assert len(loss.read_text().splitlines()) == 4

        code, out, _ = run(["model-info", "--model", str(model)], capsys)
        info = kv(out)
        assert code == 0
        assert info["sensor_count"] == "6" and info["q"] == "256"
        assert info["branch_dims"] == "12,256,512" and info["trunk_dims"] == "1,256,256,256"

        u = ";".join(["0.1,0.2"] * 6)
        code, out, _ = run(["predict", "--model", str(model), "--u", u, "--phi", "0,0.5", "-q"], capsys)
        assert code == 0
        rows = [l for l in out.splitlines() if l and not l.startswith("#")]
        assert rows[0] == "angle,re,im" and len(rows) == 3
        m = on.load_model(model)
        expected = on.predict(m, np.full(6, 0.1 + 0.2j), 0.5)
        re, im = map(float, rows[2].split(",")[1:])
        assert complex(re, im) == expected

    def test_predict_outside_aperture(self, tmp_path, capsys):
        model = tmp_path / "m.donx"
        on.save_model(on.DeepOnetModel.initialize(2, 0.5, 1, q=4, branch_hidden=(4,), trunk_hidden=(4,)), model)
        code, _, _ = run(["predict", "--model", str(model), "--u", "1,0;0,1", "--phi", "0.6"], capsys)
        assert code == 1


class TestDsm:
    def test_simulated_source(self, capsys, tmp_path):
        code, out, _ = run(["dsm", "--sources", "1,0,5", "--sensors", "51", "--radius", "7",
                            "--out", str(tmp_path / "i.csv"), "-q"], capsys)
        assert code == 0
        vals = kv(out)
        assert vals["argmax"] == "1,0"
        assert float(vals["mae"]) == 0.0
        assert len((tmp_path / "i.csv").read_text().splitlines()) == 1 + 101 * 101

    def test_trace_file(self, capsys, tmp_path):
        from helios.forward import Aperture, SourceConfig, measure
        ap = Aperture(6.5, math.pi / 2, 20)
        tr = measure(SourceConfig.from_arrays([(-0.52, 0.8)], [6.0]), ap, 4.0)
        path = tmp_path / "t.csv"
        path.write_text("angle,re,im\n" + "".join(f"{a!r},{v.real!r},{v.imag!r}\n" for a, v in tr))
        code, out, _ = run(["dsm", "--trace", str(path), "--k", "4", "--sensors", "20", "-q"], capsys)
        assert code == 0
        assert kv(out)["argmax"] == "-0.52,0.8"

    def test_needs_input(self, capsys):
        assert run(["dsm"], capsys)[0] == 1


class TestExperiments:
    def test_example_2_1(self, out_dir, capsys):
        code, out, _ = run(["example-2-1", "--seed", "3", "-q"], capsys)
        assert code == 0
        report = (out_dir / "example-2-1" / "3" / "report.txt").read_text()
        assert report == out
        vals = kv(report)
        assert vals["seed"] == "3"
        for i in (1, 2, 3):
            assert vals[f"s{i}.argmax"] == "1.0;0.0"
            assert (out_dir / "example-2-1" / "3" / f"indicator_s{i}.csv").exists()

    def test_out_dir_flag(self, tmp_path, capsys):
        code, _, _ = run(["example-2-1", "--out-dir", str(tmp_path / "elsewhere"), "-q"], capsys)
        assert code == 0
        assert (tmp_path / "elsewhere" / "example-2-1" / str(rng.CANONICAL_SEED) / "report.txt").exists()

    def test_table_with_missing_model(self, out_dir, tmp_path, capsys):
        code, _, err = run(["table-2", "--model-dir", str(tmp_path / "none"), "-q"], capsys)
        assert code == 2
        assert "model file not found" in err

    def test_table_bad_mode(self, out_dir, capsys):
        assert run(["table-3", "--modes", "raw,magic"], capsys)[0] == 1

    def test_table_raw_only(self, out_dir, capsys):
        code, out, _ = run(["table-3", "--modes", "raw,pl", "-q"], capsys)
        assert code == 0
        vals = kv(out)
        assert {f"s{a}.{m}.mae" for a in (1, 2, 3) for m in ("raw", "pl")} <= set(vals)
