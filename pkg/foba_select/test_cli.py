import tempfile
import unittest
from pathlib import Path

import numpy as np

from foba_select.cli import format_float, write_csv


class TestFormatFloat(unittest.TestCase):
    def test_round_trip_decimal(self):
        # repr is the shortest string that parses back to the same double
        for value in (0.1, 1 / 3, 1e-300, 12345.678901234567, np.float64(2.5)):
            text = format_float(value)
            self.assertEqual(float(text), float(value))
        self.assertEqual(format_float(0.1), "0.1")

    def test_non_floats_pass_through(self):
        self.assertEqual(format_float(3), 3)
        self.assertEqual(format_float("foba-gdt"), "foba-gdt")
        self.assertIsNone(format_float(None))
        self.assertIsNone(format_float(float("nan")))


class TestWriteCsv(unittest.TestCase):
    def test_sorted_rows_and_lf_endings(self):
        rows = [
            {"algorithm": "foba-obj", "k_bar_or_S": 5, "seed": 1, "objective": 0.25},
            {"algorithm": "foba-gdt", "k_bar_or_S": 5, "seed": 0, "objective": 1 / 3},
            {"algorithm": "foba-gdt", "k_bar_or_S": 4, "seed": 2, "objective": None},
        ]
        columns = ["algorithm", "k_bar_or_S", "seed", "objective"]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "out.csv"
            write_csv(rows, columns, path)
            data = path.read_bytes()

        self.assertNotIn(b"\r", data)
        lines = data.decode("utf-8").splitlines()
        self.assertEqual(lines[0], "algorithm,k_bar_or_S,seed,objective")
        self.assertEqual(lines[1], "foba-gdt,4,2,")
        self.assertEqual(lines[2], f"foba-gdt,5,0,{1 / 3!r}")
        self.assertEqual(lines[3], "foba-obj,5,1,0.25")

    def test_unsorted_keeps_order(self):
        rows = [{"feature": 7, "coefficient": -1.5}, {"feature": 2, "coefficient": 0.5}]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "selected.csv"
            write_csv(rows, ["feature", "coefficient"], path, sort=False)
            lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines, ["feature,coefficient", "7,-1.5", "2,0.5"])
