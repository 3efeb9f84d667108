import tempfile
from pathlib import Path

import numpy as np
import orjson
from django.test import SimpleTestCase

from stackelberg.exceptions import OutputError
from stackelberg.helpers.output_helper import (
    CSV_COLUMNS,
    dump_json,
    emit_outputs,
    format_cell,
    read_results_csv,
    write_results_csv,
    write_trace_plot,
)
from stackelberg.services.game import run_direct_link
from stackelberg.services.scenario import generate_channels, trial_rng
from stackelberg.services.sweep import SweepResult, SweepRow, SweepSpec

from .fixtures import tiny_config


def sample_rows():
    return [
        SweepRow("p_max_dbm", -2.5, "stackelberg", 200, 1.5, 0.25, 0.125, 0.0625, 3.0, 0.5, 2.0, 0),
        SweepRow("p_max_dbm", -2.5, "direct-link", 199, 1.25, 0.75, 0.0, 0.0, 1.25, 0.75, 0.0, 1),
    ]


class CsvTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_nine_significant_digits(self):
        self.assertEqual(format_cell(1 / 3), "0.333333333")
        self.assertEqual(format_cell(200), "200")
        self.assertEqual(format_cell("stackelberg"), "stackelberg")

    def test_round_trip(self):
        rows = sample_rows()
        path = write_results_csv(rows, self.dir / "results.csv")
        self.assertEqual(read_results_csv(path), rows)

    def test_header(self):
        path = write_results_csv([], self.dir / "results.csv")
        self.assertEqual(path.read_text(), ",".join(CSV_COLUMNS) + "\n")
        self.assertEqual(CSV_COLUMNS[:4], ["sweep_name", "sweep_value", "scheme", "trials"])
        self.assertEqual(CSV_COLUMNS[-1], "failure_count")

    def test_unwritable_path_leaves_nothing_behind(self):
        blocker = self.dir / "occupied"
        blocker.write_text("not a directory")
        with self.assertRaises(OutputError):
            write_results_csv(sample_rows(), blocker / "results.csv")
        self.assertEqual(sorted(p.name for p in self.dir.iterdir()), ["occupied"])

    def test_foreign_header_is_rejected(self):
        path = self.dir / "other.csv"
        path.write_text("a,b\n1,2\n")
        with self.assertRaises(OutputError):
            read_results_csv(path)

    def test_emit_outputs_with_plots(self):
        result = SweepResult(spec=SweepSpec(), rows=sample_rows(), paired=[], records=[])
        written = emit_outputs(result, self.dir / "out", plots=True)
        self.assertEqual(set(written), {"results", "paired", "p_max_dbm_U", "p_max_dbm_V", "p_max_dbm_sum_rate"})
        for path in written.values():
            self.assertTrue(path.exists())
        self.assertIn("<svg", written["p_max_dbm_U"].read_text())
        self.assertTrue(written["paired"].read_text().startswith("sweep_name,sweep_value,scheme,baseline,pairs"))


class SolveDumpTests(SimpleTestCase):
    def test_outcome_serializes(self):
        cfg = tiny_config()
        outcome = run_direct_link(generate_channels(cfg, trial_rng(1, 0)), cfg)
        parsed = orjson.loads(dump_json({"outcome": outcome.as_dict()}))
        self.assertEqual(parsed["outcome"]["scheme"], "direct-link")
        self.assertEqual(np.asarray(parsed["outcome"]["W"]).shape, (2, 2, 2))

    def test_trace_plot(self):
        with tempfile.TemporaryDirectory() as tmp:
            trace = [{"iteration": 1, "objective": 0.5, "residual": 1e-2},
                     {"iteration": 2, "objective": 0.6, "residual": 0.0}]
            path = write_trace_plot(trace, Path(tmp) / "trace.svg")
            self.assertIn("<svg", path.read_text())
