import json

import pytest

from tncsim.cli import main

from oracles import random_bits, random_circuit_text, statevector_amplitude
from tncsim import parse_circuit


@pytest.fixture
def circuit_file(tmp_path):
    path = tmp_path / "circ.txt"
    path.write_text(random_circuit_text(5, 5, seed=77))
    return str(path)


@pytest.fixture
def deep_circuit_file(tmp_path):
    path = tmp_path / "deep.txt"
    path.write_text(random_circuit_text(8, 8, seed=81))
    return str(path)


def run_cli(args):
    return main(args)


def strip_timing(obj):
    obj = dict(obj)
    obj.pop("timing", None)
    return obj


class TestRun:
    def test_amplitude_matches_oracle(self, tmp_path, circuit_file):
        out = tmp_path / "rep.json"
        bits = random_bits(5, 77)
        code = run_cli(
            ["run", "--circuit", circuit_file, "--bitstring", bits, "--out", str(out)]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        got = complex(*rep["amplitude"])
        want = statevector_amplitude(
            parse_circuit(open(circuit_file).read()), bits
        )
        assert abs(got - want) <= 1e-9

    def test_rank_cap_below_leaves_fails_with_3(self, tmp_path, circuit_file):
        out = tmp_path / "rep.json"
        code = run_cli(
            [
                "run",
                "--circuit",
                circuit_file,
                "--bitstring",
                "00000",
                "--max-rank",
                "2",
                "--out",
                str(out),
            ]
        )
        assert code == 3

    def test_missing_input_is_config_error(self, tmp_path):
        assert run_cli(["run", "--bitstring", "00"]) == 2
        assert (
            run_cli(
                ["run", "--circuit", str(tmp_path / "nope.txt"), "--bitstring", "0"]
            )
            == 2
        )

    def test_reports_byte_identical_minus_timing(self, tmp_path, circuit_file):
        bits = random_bits(5, 78)
        outs = []
        for k in range(2):
            out = tmp_path / f"rep{k}.json"
            code = run_cli(
                [
                    "run",
                    "--circuit",
                    circuit_file,
                    "--bitstring",
                    bits,
                    "--max-rank",
                    "5",
                    "--seed",
                    "11",
                    "--verify-samples",
                    "3",
                    "--out",
                    str(out),
                ]
            )
            assert code == 0
            outs.append(json.loads(out.read_text()))
        assert strip_timing(outs[0]) == strip_timing(outs[1])

    def test_reuse_and_no_reuse_agree(self, tmp_path, circuit_file):
        bits = random_bits(5, 79)
        vals = []
        for flag in ([], ["--no-reuse"]):
            out = tmp_path / f"rep_{len(flag)}.json"
            code = run_cli(
                [
                    "run",
                    "--circuit",
                    circuit_file,
                    "--bitstring",
                    bits,
                    "--max-rank",
                    "5",
                    "--out",
                    str(out),
                ]
                + flag
            )
            assert code == 0
            vals.append(complex(*json.loads(out.read_text())["amplitude"]))
        assert abs(vals[0] - vals[1]) < 1e-10

    def test_worker_count_env_var(self, monkeypatch):
        from tncsim.cli import build_parser

        monkeypatch.setenv("TNCSIM_WORKERS", "7")
        args = build_parser().parse_args(["run", "--circuit", "x", "--bitstring", "0"])
        assert args.workers == 7

    def test_csv_format(self, tmp_path, circuit_file):
        out = tmp_path / "rep.csv"
        code = run_cli(
            [
                "run",
                "--circuit",
                circuit_file,
                "--bitstring",
                "00000",
                "--format",
                "csv",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        text = out.read_text()
        assert "amplitude" in text and "stats.multiplies" in text


class TestStages:
    def test_plan(self, tmp_path, circuit_file):
        out = tmp_path / "plan.json"
        assert run_cli(
            ["plan", "--circuit", circuit_file, "--bitstring", "00000", "--out", str(out)]
        ) == 0
        rep = json.loads(out.read_text())
        assert rep["total_cost"] > 0
        assert "ssa_path" in rep

    def test_slice_outputs_overheads(self, tmp_path, deep_circuit_file):
        out = tmp_path / "slice.json"
        code = run_cli(
            [
                "slice",
                "--circuit",
                deep_circuit_file,
                "--bitstring",
                "00000000",
                "--max-rank",
                "5",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["spec"]
        assert rep["index_overheads"]
        csv_out = tmp_path / "slice.csv"
        run_cli(
            [
                "slice",
                "--circuit",
                deep_circuit_file,
                "--bitstring",
                "00000000",
                "--max-rank",
                "5",
                "--format",
                "csv",
                "--out",
                str(csv_out),
            ]
        )
        assert csv_out.read_text().startswith("label,overhead")

    def test_reuse_plan(self, tmp_path, circuit_file):
        out = tmp_path / "rp.json"
        code = run_cli(
            [
                "reuse-plan",
                "--circuit",
                circuit_file,
                "--bitstring",
                "00000",
                "--max-rank",
                "5",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert "plan" in rep and "schedule" in rep
        assert rep["plan"]["predicted_multiplies"] > 0

    def test_cost_both_modes(self, tmp_path):
        import sys

        sys.path.insert(0, "tests")
        from oracles import rolling_stem

        net, t = rolling_stem(width=6, length=8, seed=5)
        net_file = tmp_path / "net.json"
        net_file.write_text(net.to_json())
        tree_file = tmp_path / "tree.json"
        t.save(str(tree_file))
        out = tmp_path / "cost.json"
        code = run_cli(
            [
                "cost",
                "--network",
                str(net_file),
                "--tree",
                str(tree_file),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert "solo" in rep and "coop" in rep
        assert rep["solo"]["baseline_accesses"] == rep["coop"]["baseline_accesses"]

    def test_perm_stats_buckets(self, tmp_path, circuit_file):
        out = tmp_path / "perm.json"
        code = run_cli(
            [
                "perm-stats",
                "--circuit",
                circuit_file,
                "--bitstring",
                "00000",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["buckets"]
        for name, b in rep["buckets"].items():
            assert b["count"] > 0


class TestVerify:
    def test_verify_roundtrip_and_corruption(self, tmp_path, circuit_file):
        bits = random_bits(5, 80)
        parts = tmp_path / "parts.bin"
        out = tmp_path / "rep.json"
        code = run_cli(
            [
                "run",
                "--circuit",
                circuit_file,
                "--bitstring",
                bits,
                "--max-rank",
                "4",
                "--no-reuse",
                "--partials-out",
                str(parts),
                "--out",
                str(out),
            ]
        )
        assert code == 0
        code = run_cli(
            [
                "verify",
                "--circuit",
                circuit_file,
                "--bitstring",
                bits,
                "--max-rank",
                "4",
                "--partials",
                str(parts),
                "--out",
                str(tmp_path / "v.json"),
            ]
        )
        assert code == 0
        # flip one stored partial and expect exit 4
        raw = bytearray(parts.read_bytes())
        raw[-2] ^= 0x41
        corrupted = tmp_path / "bad.bin"
        corrupted.write_bytes(bytes(raw))
        code = run_cli(
            [
                "verify",
                "--circuit",
                circuit_file,
                "--bitstring",
                bits,
                "--max-rank",
                "4",
                "--partials",
                str(corrupted),
                "--out",
                str(tmp_path / "v2.json"),
            ]
        )
        assert code == 4
