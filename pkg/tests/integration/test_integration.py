"""Integration tests for the command-line pipeline."""

import contextlib
import io
import json
import tempfile
import unittest
from pathlib import Path

import pandas as pd

from src.main import main


def run_cli(*argv) -> tuple:
    """Run the CLI and return (exit code, captured stdout)."""
    buffer = io.StringIO()
    with contextlib.redirect_stdout(buffer):
        code = main([str(a) for a in argv])
    return code, buffer.getvalue()


def last_json(text: str) -> dict:
    """The JSON document printed at the end of a command's output."""
    start = text.rindex("\n{") + 1 if "\n{" in text else text.index("{")
    return json.loads(text[start:])


class TestBeaconPipeline(unittest.TestCase):
    """gen-data -> defend -> verify / attack / sweep on a beacon panel."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.panel = self.dir / "panel.txt"
        code, _ = run_cli("--out", self.panel, "--seed", 3, "gen-data", "--mode", "beacon",
                          "--m", 80, "--n", 20, "--n-ref", 30)
        self.assertEqual(code, 0)

    def tearDown(self):
        self.tmp.cleanup()

    def _defend(self, *extra) -> Path:
        solution = self.dir / "sol.json"
        code, _ = run_cli("--panel", self.panel, "--out", solution, "defend", "spgb",
                          "--alpha", 0.9, "--w", 1, "--theta", 0, *extra)
        self.assertEqual(code, 0)
        return solution

    def test_defend_then_verify(self):
        solution = self._defend()
        record = json.loads(solution.read_text(encoding="utf-8"))
        self.assertEqual(record["method"], "spg-b")
        code, out = run_cli("--panel", self.panel, "verify", "--solution", solution)
        self.assertEqual(code, 0)
        self.assertTrue(last_json(out)["verified"])

    def test_tampered_solution_fails_verification(self):
        solution = self._defend()
        record = json.loads(solution.read_text(encoding="utf-8"))
        record["objective"] -= 1.0
        solution.write_text(json.dumps(record), encoding="utf-8")
        code, _ = run_cli("--panel", self.panel, "verify", "--solution", solution)
        self.assertEqual(code, 1)

    def test_attack_with_ld(self):
        solution = self._defend()
        margins_path = self.dir / "margins.csv"
        code, out = run_cli("--panel", self.panel, "--out", margins_path, "attack", "--model", "fixed",
                            "--theta", 0, "--solution", solution, "--ld", "--t-ld", 0.01, "--window", 5,
                            "--quorum", 0.5)
        self.assertEqual(code, 0)
        report = last_json(out)
        self.assertEqual(report["n"], 20)
        self.assertEqual(report["threat"], "fixed(theta=0)+ld(t_ld=0.01,window=5,quorum=0.5)")
        self.assertLessEqual(report["ld"]["recovered"], report["ld"]["inferred"])
        margins = pd.read_csv(margins_path)
        self.assertEqual(list(margins.columns),
                         ["individual", "score", "margin", "covered", "ld_score", "ld_margin", "ld_covered"])
        self.assertEqual(len(margins), 20)
        self.assertEqual(int(margins["covered"].sum()), report["protected"])
        self.assertEqual(margins["covered"].tolist(), (margins["margin"] >= 0).astype(int).tolist())

    def test_attack_margins_without_ld(self):
        margins_path = self.dir / "margins.csv"
        code, out = run_cli("--panel", self.panel, "--out", margins_path, "attack", "--model", "adaptive", "--k", 10)
        self.assertEqual(code, 0)
        self.assertNotIn("ld", last_json(out))
        margins = pd.read_csv(margins_path)
        self.assertEqual(list(margins.columns), ["individual", "score", "margin", "covered"])
        self.assertEqual(margins["individual"].tolist(), list(range(20)))

    def test_attack_rejects_contradictory_model(self):
        code, _ = run_cli("--panel", self.panel, "attack", "--model", "adaptive", "--theta", 0)
        self.assertEqual(code, 1)

    def test_spgb_mode_alias(self):
        solution = self._defend("--mode", "flip")
        record = json.loads(solution.read_text(encoding="utf-8"))
        self.assertEqual(record["method"], "spg-b-flip")
        self.assertEqual(record["masks"], [])

    def test_undefended_attack(self):
        code, out = run_cli("--panel", self.panel, "attack", "--k", 10)
        self.assertEqual(code, 0)
        self.assertEqual(last_json(out)["threat"], "adaptive(K=10)")

    def test_ld_index_then_spg_ld(self):
        index = self.dir / "ld.npz"
        code, _ = run_cli("--panel", self.panel, "--out", index, "ld", "--window", 5, "--t-ld", 0.01)
        self.assertEqual(code, 0)
        self.assertTrue(index.exists())
        solution = self._defend("--ld-defense", "--ld-index", index)
        self.assertEqual(json.loads(solution.read_text(encoding="utf-8"))["method"], "spg-ld")

    def test_baseline(self):
        solution = self.dir / "sf.json"
        code, out = run_cli("--panel", self.panel, "--out", solution, "defend", "baseline",
                            "--method", "sf", "--theta", 0)
        self.assertEqual(code, 0)
        self.assertEqual(last_json(out)["privacy_pct"], 100.0)
        code, _ = run_cli("--panel", self.panel, "verify", "--solution", solution)
        self.assertEqual(code, 0)

    def test_sweep_is_reproducible(self):
        outputs = []
        for name in ("a.csv", "b.csv"):
            path = self.dir / name
            code, _ = run_cli("--panel", self.panel, "--out", path, "--seed", 9, "sweep",
                              "--methods", "spg-b,rf", "--w-grid", "0.1,1", "--alphas", 0.9,
                              "--thetas", 0, "--ks", 10, "--runs", 2)
            self.assertEqual(code, 0)
            outputs.append(path.read_bytes())
        self.assertEqual(outputs[0], outputs[1])
        lines = outputs[0].decode("utf-8").strip().split("\n")
        self.assertEqual(len(lines), 1 + 2 * 2 * 2)
        self.assertTrue(lines[0].startswith("method,alpha,w,threat"))

    def test_sweep_then_pareto(self):
        sweep = self.dir / "sweep.csv"
        code, _ = run_cli("--panel", self.panel, "--out", sweep, "sweep", "--methods", "spg-b,rf",
                          "--w-grid", "0.1,1,10", "--alphas", 0.9, "--thetas", 0, "--ks", 10, "--runs", 1)
        self.assertEqual(code, 0)
        code, out = run_cli("pareto", "--sweep", sweep, "--method-a", "spg-b", "--method-b", "spg-b")
        self.assertEqual(code, 0)
        report = last_json(out)
        self.assertTrue(report["holds"])
        self.assertEqual([(g["threat"], g["alpha"]) for g in report["groups"]], [("fixed", 0.9), ("adaptive", 0.9)])
        self.assertIsNone(report["groups"][0]["k"])
        code, out = run_cli("pareto", "--sweep", sweep, "--method-a", "spg-b", "--method-b", "rf")
        self.assertEqual(code, 0)
        for group in last_json(out)["groups"]:
            self.assertEqual(group["checked"], 3)
            self.assertGreaterEqual(group["fraction"], 0.0)
            self.assertLessEqual(group["fraction"], 1.0)
            self.assertTrue(group["frontier_a"])
        code, _ = run_cli("pareto", "--sweep", sweep, "--method-b", "dp-beacon")
        self.assertEqual(code, 1)
        code, _ = run_cli("pareto", "--sweep", self.dir / "absent.csv", "--method-b", "rf")
        self.assertEqual(code, 1)

    def test_sweep_under_ld_attack(self):
        sweep = self.dir / "sweep_ld.csv"
        code, _ = run_cli("--panel", self.panel, "--out", sweep, "sweep", "--methods", "spg-b", "--w-grid", 1,
                          "--alphas", 0.9, "--thetas", 0, "--ks", "", "--runs", 1, "--ld-attack")
        self.assertEqual(code, 0)
        frame = pd.read_csv(sweep)
        self.assertEqual(frame["threat"].tolist(), ["fixed+ld"])

    def test_missing_panel_argument(self):
        code, _ = run_cli("attack", "--theta", 0)
        self.assertEqual(code, 1)

    def test_missing_panel_file(self):
        code, _ = run_cli("--panel", self.dir / "absent.txt", "attack")
        self.assertEqual(code, 1)


class TestTinyPanels(unittest.TestCase):
    """Oracle and AAF flows on small panels."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_oracle_then_verify(self):
        panel = self.dir / "tiny.txt"
        self.assertEqual(run_cli("--out", panel, "--seed", 4, "gen-data", "--m", 8, "--n", 4, "--n-ref", 9)[0], 0)
        solution = self.dir / "oracle.json"
        code, out = run_cli("--panel", panel, "--out", solution, "oracle", "--alpha", 0.5, "--w", 1, "--theta", 0)
        self.assertEqual(code, 0)
        self.assertEqual(last_json(out)["method"], "oracle")
        self.assertEqual(run_cli("--panel", panel, "verify", "--solution", solution)[0], 0)

    def test_oracle_gap_against_greedy(self):
        panel = self.dir / "tiny.txt"
        self.assertEqual(run_cli("--out", panel, "--seed", 4, "gen-data", "--m", 8, "--n", 4, "--n-ref", 9)[0], 0)
        greedy = self.dir / "greedy.json"
        code, _ = run_cli("--panel", panel, "--out", greedy, "defend", "spgb", "--alpha", 0.5, "--w", 1,
                          "--theta", 0, "--mode", "flip")
        self.assertEqual(code, 0)
        code, out = run_cli("--panel", panel, "oracle", "--alpha", 0.5, "--w", 1, "--theta", 0,
                            "--mode", "flip", "--compare-to", greedy)
        self.assertEqual(code, 0)
        report = last_json(out)
        self.assertEqual(report["method"], "oracle-flip")
        self.assertEqual(report["compared_method"], "spg-b-flip")
        self.assertGreaterEqual(report["gap"], -1e-9)

    def test_spgr_then_verify(self):
        panel = self.dir / "aaf.txt"
        code, _ = run_cli("--out", panel, "--seed", 6, "gen-data", "--mode", "aaf", "--m", 30, "--n", 15,
                          "--n-ref", 20, "--beta-a", 1, "--beta-b", 3)
        self.assertEqual(code, 0)
        solution = self.dir / "spgr.json"
        code, out = run_cli("--panel", panel, "--out", solution, "defend", "spgr", "--alpha", 0.9, "--w", 1,
                            "--theta", -1, "--t", 5, "--epsilons", "1,10,100")
        self.assertEqual(code, 0)
        self.assertEqual(last_json(out)["method"], "spg-r")
        self.assertEqual(run_cli("--panel", panel, "verify", "--solution", solution)[0], 0)

    def test_linkage_baseline(self):
        panel = self.dir / "aaf.txt"
        run_cli("--out", panel, "--seed", 6, "gen-data", "--mode", "aaf", "--m", 30, "--n", 15, "--n-ref", 20)
        code, out = run_cli("--panel", panel, "defend", "baseline", "--method", "linkage", "--theta", -1,
                            "--min-privacy", 0)
        self.assertEqual(code, 0)
        self.assertEqual(last_json(out)["method"], "linkage")


if __name__ == '__main__':
    unittest.main()
