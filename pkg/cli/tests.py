import math
import os
import tempfile
from io import StringIO

import numpy as np
from django.core.management import call_command, load_command_class
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag
from numpy.testing import assert_array_equal

from cornersgd.utils.io_utils import read_csv, read_json, write_csv, write_json
from spectrum.serializers import dump_problem
from spectrum.utils import power_law_problem
from trainer.utils import eval_schedule

from .serializers import ProblemConfigSerializer


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        workspace = tempfile.TemporaryDirectory()
        self.addCleanup(workspace.cleanup)
        self.workspace = workspace.name

    def path(self, *parts):
        return os.path.join(self.workspace, *parts)

    def write_config(self, document, name="run.json"):
        return write_json(self.path(name), document)

    def call(self, command, out="out", **options):
        stdout = StringIO()
        call_command(command, out=self.path(out), stdout=stdout, **options)
        return stdout.getvalue()

    def assertExitCode(self, code, command, **options):
        with self.assertRaises(CommandError) as raised:
            self.call(command, **options)
        self.assertEqual(raised.exception.returncode, code)

    def read_bytes(self, *parts):
        with open(self.path(*parts), "rb") as stream:
            return stream.read()


class ProblemConfigTests(CommandTestCase):
    def load(self, **document):
        serializer = ProblemConfigSerializer(data=document)
        serializer.is_valid(raise_exception=True)
        return serializer.validated_data

    def test_builtin_problem_default_size(self):
        data = self.load(name="power-law")
        self.assertEqual(data["K"], 1000)
        self.assertEqual(data["problem"].size, 1000)

    def test_help_names_indicator_roots(self):
        parser = load_command_class("cli", "theory").create_parser("manage.py", "theory")
        self.assertIn("refined roots", " ".join(parser.format_help().split()))

    def test_problem_file_keeps_every_mode(self):
        path = dump_problem(power_law_problem(4.0, 0.25, 1.0, 1.0, 3000), self.path("large.json"))
        problem = self.load(name=path)["problem"]

        self.assertEqual(problem.size, 3000)
        self.assertEqual(problem.tail_mass, 0.0)

    def test_problem_file_explicit_truncation(self):
        path = dump_problem(power_law_problem(4.0, 0.25, 1.0, 1.0, 3000), self.path("large.json"))
        problem = self.load(name=path, K=1000)["problem"]

        self.assertEqual(problem.size, 1000)
        self.assertGreater(problem.tail_mass, 0.0)


class TheoryCommandTests(CommandTestCase):
    config = {
        "problem": {"name": "power-law", "nu": 4.0, "zeta": 0.25, "K": 200},
        "algorithm": {"name": "gd", "alpha": 0.5},
        "batch": 10,
        "steps": 256,
    }

    def test_outputs(self):
        output = self.call("theory", config=self.write_config(self.config))

        self.assertIn("written to", output)
        self.assertEqual(
            sorted(os.listdir(self.path("out"))),
            ["loss.csv", "metadata.json", "propagators.csv", "regime.json"],
        )
        propagators = read_csv(self.path("out", "propagators.csv"))
        loss = read_csv(self.path("out", "loss.csv"))
        self.assertEqual(list(propagators.columns), ["t", "U", "V"])
        self.assertEqual(list(loss.columns), ["t", "L"])
        self.assertEqual(len(loss), 256)
        self.assertEqual(loss["L"][0], propagators["V"][0] / 2)

        regime = read_json(self.path("out", "regime.json"))
        self.assertEqual(regime["regime"], "signal_dominated")
        self.assertLess(regime["u_sigma"], 1.0)
        self.assertIn("finite_memory", regime["asymptote"])

    def test_metadata_echoes_config(self):
        self.call("theory", config=self.write_config(self.config))
        metadata = read_json(self.path("out", "metadata.json"))

        self.assertEqual(metadata["command"], "theory")
        self.assertEqual(len(metadata["fingerprint"]), 40)
        self.assertEqual(metadata["config"]["algorithm"], {"name": "gd", "alpha": 0.5})
        self.assertEqual(metadata["config"]["problem"]["K"], 200)
        self.assertEqual(metadata["config"]["kernels"], "contour")
        self.assertEqual(metadata["outputs"], ["loss.csv", "propagators.csv", "regime.json"])

    def test_rerun_is_byte_identical(self):
        path = self.write_config(self.config)
        self.call("theory", config=path)
        first = {name: self.read_bytes("out", name) for name in os.listdir(self.path("out"))}
        self.call("theory", config=path)
        second = {name: self.read_bytes("out", name) for name in os.listdir(self.path("out"))}
        self.assertEqual(first, second)

    def test_metadata_reproduces_run(self):
        self.call("theory", config=self.write_config(self.config))
        self.call("theory", out="again", config=self.path("out", "metadata.json"))

        self.assertEqual(self.read_bytes("out", "propagators.csv"), self.read_bytes("again", "propagators.csv"))
        self.assertEqual(
            read_json(self.path("out", "metadata.json"))["fingerprint"],
            read_json(self.path("again", "metadata.json"))["fingerprint"],
        )

    def test_flags_override_config(self):
        self.call("theory", config=self.write_config(self.config), steps=128, batch=20)
        metadata = read_json(self.path("out", "metadata.json"))

        self.assertEqual(metadata["config"]["steps"], 128)
        self.assertEqual(metadata["config"]["batch"], 20)
        self.assertEqual(len(read_csv(self.path("out", "loss.csv"))), 128)

    def test_matrix_kernels_match_contour(self):
        self.call("theory", config=self.write_config(self.config))
        self.call("theory", out="matrix", config=self.write_config(dict(self.config, kernels="matrix")))

        contour = read_csv(self.path("out", "propagators.csv"))
        matrix = read_csv(self.path("matrix", "propagators.csv"))
        np.testing.assert_allclose(matrix["V"], contour["V"], rtol=1e-6, atol=1e-12)

    def test_noise_dominated_divergence_exits_cleanly(self):
        config = dict(self.config, algorithm={"name": "gd", "alpha": 1.0}, batch=1, tau1=4.0, steps=128)
        self.call("theory", config=self.write_config(config))

        self.assertEqual(read_json(self.path("out", "regime.json"))["regime"], "divergence")
        self.assertEqual(read_json(self.path("out", "metadata.json"))["summary"]["regime"], "divergence")

    def test_invalid_configs(self):
        self.assertExitCode(2, "theory", config=self.write_config(dict(self.config, algorithm={"name": "nesterov"})))
        self.assertExitCode(2, "theory", config=self.write_config(self.config), problem="spiral")
        self.assertExitCode(2, "theory", config=self.write_config(dict(self.config, batch=0)))
        self.assertExitCode(2, "theory", config=self.write_config(dict(self.config, algorithm={})))
        self.assertExitCode(2, "theory", config=self.path("missing.json"))
        self.assertFalse(os.path.exists(self.path("out")))

    def test_unreadable_config(self):
        with open(self.path("broken.json"), "w") as stream:
            stream.write("{not json")
        self.assertExitCode(2, "theory", config=self.path("broken.json"))

    def test_matrix_kernels_need_memory_realization(self):
        config = dict(self.config, kernels="matrix", algorithm={"name": "ideal-corner", "theta": 1.5})
        self.assertExitCode(2, "theory", config=self.write_config(config))

    @tag("slow")
    def test_corner_loss_exponent(self):
        config = {
            "problem": {"name": "power-law", "nu": 4.0, "zeta": 0.25, "K": 10_000},
            "algorithm": {"name": "corner", "theta": 1.8, "memory": 5, "spacing": 5.0},
            "auto_scale": True,
            "batch": 100,
            "steps": 10_000,
        }
        self.call("theory", out="corner", config=self.write_config(config))
        self.call("fit", out="fit", input=self.path("corner", "loss.csv"), t_min=100, t_max=10_000)

        fit = read_json(self.path("fit", "fit.json"))
        self.assertAlmostEqual(fit["exponent"], 0.45, delta=0.03)

    def test_problem_file(self):
        problem = {
            "eigenvalues": [1.0, 0.5, 0.25],
            "coeffs": [1.0, 1.0, 1.0],
            "name": "three-modes",
        }
        path = write_json(self.path("problem.json"), problem)
        self.call("theory", out="file", config=self.write_config(self.config), problem=path)

        metadata = read_json(self.path("file", "metadata.json"))
        self.assertEqual(metadata["summary"]["problem"], "three-modes")


class TrainCommandTests(CommandTestCase):
    gaussian = {
        "model": "gaussian",
        "problem": {"name": "power-law", "K": 1000},
        "algorithm": {"name": "gd"},
        "steps": 1000,
        "deterministic": True,
        "fit_window": [50, 1000],
    }

    def test_deterministic_gaussian_run(self):
        self.call("train", config=self.write_config(self.gaussian))

        trajectory = read_csv(self.path("out", "trajectory.csv"))
        self.assertEqual(list(trajectory.columns), ["step", "loss"])
        assert_array_equal(trajectory["step"], eval_schedule(1000))
        self.assertAlmostEqual(trajectory["loss"][0], 0.5, places=12)
        self.assertTrue(np.all(np.diff(trajectory["loss"]) <= 0))

        metadata = read_json(self.path("out", "metadata.json"))
        self.assertEqual(metadata["summary"]["lambda_max"], 1.0)
        self.assertAlmostEqual(metadata["summary"]["algorithm"]["alpha"], 1.9)
        self.assertIsNone(metadata["summary"]["diverged_at"])

        fit = read_json(self.path("out", "fit.json"))
        self.assertAlmostEqual(fit["exponent"], 0.25, delta=0.05)
        self.assertEqual(metadata["outputs"], ["fit.json", "trajectory.csv"])

    def test_indicator_run_is_reproducible(self):
        config = {"model": "indicator", "features": 50, "algorithm": {"name": "gd"}, "steps": 100, "batch": 10}
        path = self.write_config(config)
        self.call("train", config=path, seed=3)
        self.call("train", out="again", config=path, seed=3)

        self.assertEqual(self.read_bytes("out", "trajectory.csv"), self.read_bytes("again", "trajectory.csv"))
        trajectory = read_csv(self.path("out", "trajectory.csv"))
        self.assertAlmostEqual(trajectory["loss"][0], 0.25, places=12)
        self.assertEqual(read_json(self.path("out", "metadata.json"))["config"]["seed"], 3)

    def test_algorithm_without_memory_realization(self):
        self.assertExitCode(2, "train", config=self.write_config(self.gaussian), algo="ideal-corner")

    def test_divergent_run_exits_cleanly(self):
        config = dict(self.gaussian, auto_scale=False, algorithm={"name": "gd", "alpha": 2.5}, steps=100)
        self.call("train", config=self.write_config(config))

        metadata = read_json(self.path("out", "metadata.json"))
        self.assertIsNotNone(metadata["summary"]["diverged_at"])
        self.assertEqual(metadata["outputs"], ["trajectory.csv"])


class PhaseCommandTests(CommandTestCase):
    def test_phase_grid(self):
        config = {"zeta": {"start": 0.25, "stop": 1.25, "num": 3}, "inv_nu": {"start": 0.25, "stop": 0.75, "num": 3}}
        self.call("phase", config=self.write_config(config))

        phase = read_csv(self.path("out", "phase.csv"))
        self.assertEqual(list(phase.columns), ["zeta", "inv_nu", "theta_max", "region"])
        self.assertEqual(len(phase), 9)
        self.assertEqual((phase["zeta"][0], phase["inv_nu"][0]), (0.25, 0.25))
        self.assertEqual(phase["theta_max"][0], 2.0)
        self.assertEqual(phase["region"][0], "I_full")
        self.assertAlmostEqual(phase["theta_max"][2], 4.0 / 3.0)
        self.assertEqual(phase["region"][2], "III_usigma_limited")
        self.assertTrue(math.isnan(phase["theta_max"][8]))
        self.assertEqual(phase["region"][8], "outside")

    def test_default_grid(self):
        self.call("phase")
        self.assertEqual(len(read_csv(self.path("out", "phase.csv"))), 81 * 41)

    def test_bad_grid(self):
        config = {"zeta": {"start": 1.0, "stop": 0.5, "num": 3}}
        self.assertExitCode(2, "phase", config=self.write_config(config))


class ContourCommandTests(CommandTestCase):
    def test_discretized_corner(self):
        config = {"algorithm": {"name": "corner", "theta": 1.8, "memory": 5}, "points": 64}
        self.call("contour", config=self.write_config(config))

        contour = read_csv(self.path("out", "contour.csv"))
        self.assertEqual(list(contour.columns), ["phi", "re", "im"])
        self.assertEqual(len(contour), 64)
        self.assertEqual((contour["re"][0], contour["im"][0]), (0.0, 0.0))
        self.assertGreater(read_json(self.path("out", "metadata.json"))["summary"]["alpha_eff"], 0)

    def test_ideal_corner_angle(self):
        self.call("contour", algo="ideal-corner", theta=1.8, config=self.write_config({"points": 1024}))

        summary = read_json(self.path("out", "metadata.json"))["summary"]
        self.assertAlmostEqual(summary["angle_over_pi"], 1.8, delta=0.02 * 1.8)
        self.assertNotIn("alpha_eff", summary)

    def test_pole_on_circle_is_numerical_failure(self):
        config = {"algorithm": {"name": "memory1", "beta": 0.5, "q0": -1.0, "q1": 1.0}, "points": 8}
        self.assertExitCode(3, "contour", config=self.write_config(config))
        self.assertFalse(os.path.exists(self.path("out", "metadata.json")))

    def test_too_few_points(self):
        config = {"algorithm": {"name": "gd"}, "points": 4}
        self.assertExitCode(2, "contour", config=self.write_config(config))


class FitCommandTests(CommandTestCase):
    def test_trajectory_csv(self):
        steps = eval_schedule(10_000)
        path = write_csv(self.path("trajectory.csv"), ["step", "loss"], {
            "step": steps,
            "loss": 3.0 * np.maximum(steps, 1) ** -0.5,
        })
        self.call("fit", input=path)

        fit = read_json(self.path("out", "fit.json"))
        self.assertAlmostEqual(fit["exponent"], 0.5, places=10)
        self.assertEqual((fit["t_min"], fit["t_max"]), (100.0, 10_000.0))

    def test_loss_csv_with_window(self):
        t = np.arange(1000)
        path = write_csv(self.path("loss.csv"), ["t", "L"], {"t": t, "L": 2.0 * np.maximum(t, 1) ** -0.25})
        self.call("fit", input=path, t_min=10.0, t_max=500.0)

        fit = read_json(self.path("out", "fit.json"))
        self.assertAlmostEqual(fit["exponent"], 0.25, places=10)
        self.assertEqual(fit["points"], 491)

    def test_unknown_columns(self):
        path = write_csv(self.path("other.csv"), ["x", "y"], {"x": [1, 2], "y": [3, 4]})
        self.assertExitCode(2, "fit", input=path)

    def test_missing_input(self):
        self.assertExitCode(2, "fit", input=self.path("absent.csv"))
        self.assertExitCode(2, "fit")
