import json
import logging
import os

from django.core.management.base import BaseCommand, CommandError
from django_guid import set_guid
from rest_framework import serializers

from contour.serializers import AlgorithmSerializer
from cornersgd.constants import (
    APP_NAME,
    CONFIG_READ_ERROR,
    METADATA_JSON,
    NO_MEMORY_REALIZATION_ERROR,
    OUTPUT_DIR,
)
from cornersgd.exceptions import CornerSGDError, NumericalError
from cornersgd.utils.io_utils import fingerprint, read_json, write_csv, write_json
from trainer.utils import scaled_algorithm

from .serializers import plain_config

logger = logging.getLogger("app")

CONFIG_ERROR_CODE = 2
NUMERICAL_ERROR_CODE = 3

# name -> (option string, argparse keywords, location in the run config)
FLAGS = {
    "seed": ("--seed", {"type": int, "help": "Base seed of the random streams."}, ("seed",)),
    "problem": (
        "--problem",
        {
            "help": "Built-in problem (power-law, indicator) or path of a problem JSON file. The "
            "indicator spectrum uses the refined roots of 1 + cos(x) cosh(x) = 0, not their closed-form "
            "asymptotes. Built-in problems default to K=1000 modes; a file is truncated only when K is set.",
        },
        ("problem", "name"),
    ),
    "algo": ("--algo", {"help": "Algorithm name."}, ("algorithm", "name")),
    "theta": ("--theta", {"type": float, "help": "Corner angle factor theta."}, ("algorithm", "theta")),
    "memory": ("--memory", {"type": int, "help": "Memory size M of a discretized corner."}, ("algorithm", "memory")),
    "spacing": ("--spacing", {"type": float, "help": "Discretization length l of a corner."}, ("algorithm", "spacing")),
    "batch": ("--batch", {"type": int, "help": "Batch size."}, ("batch",)),
    "steps": ("--steps", {"type": int, "help": "Number of steps."}, ("steps",)),
    "tau1": ("--tau1", {"type": float, "help": "Noise parameter tau1."}, ("tau1",)),
    "input": ("--input", {"help": "CSV with columns (step, loss) or (t, L)."}, ("input",)),
    "t_min": ("--t-min", {"type": float, "dest": "t_min", "help": "Start of the fit window."}, ("t_min",)),
    "t_max": ("--t-max", {"type": float, "dest": "t_max", "help": "End of the fit window."}, ("t_max",)),
}


def resolve_algorithm(params, lambda_max=None):
    """
    Validated algorithm parameters with "source" and "algorithm" resolved; with lambda_max the
    step sizes are rescaled first.
    """
    if lambda_max is not None:
        params = scaled_algorithm(params, lambda_max)
    serializer = AlgorithmSerializer(data=params)
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data


def load_document(path):
    """The run config at path; a metadata file is accepted and its config echo is used."""
    if path is None:
        return {}
    try:
        document = read_json(path)
    except (OSError, ValueError) as e:
        raise CommandError(CONFIG_READ_ERROR.format(path, e), returncode=CONFIG_ERROR_CODE)
    if not isinstance(document, dict):
        raise CommandError(CONFIG_READ_ERROR.format(path, "expected a JSON object"), returncode=CONFIG_ERROR_CODE)
    if "command" in document and "config" in document:
        document = document["config"]
    return document


def _set_path(document, path, value):
    for key in path[:-1]:
        document = document.setdefault(key, {})
    document[path[-1]] = value


class RunCommand(BaseCommand):
    """
    Base of the experiment commands. The JSON config (--config) is overridden by flags, validated
    with serializer_class and handed to run(), which writes its files into the output directory
    and returns their names with a summary; metadata.json echoes the resolved config.
    """

    serializer_class = None
    flags = ()
    # config sections that may be omitted and filled from defaults
    sections = ()

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Path of a JSON run config or of a previous metadata.json.")
        parser.add_argument("--out", help=f"Output directory, by default {OUTPUT_DIR}/<command>.")
        for name in self.flags:
            option, keywords, _ = FLAGS[name]
            parser.add_argument(option, **keywords)

    def handle(self, *args, **options):
        document = load_document(options.get("config"))
        for section in self.sections:
            document.setdefault(section, {})
        for name in self.flags:
            if options.get(name) is not None:
                _set_path(document, FLAGS[name][2], options[name])

        serializer = self.serializer_class(data=document)
        if not serializer.is_valid():
            logger.error(f"Invalid {self.command_name} config: {serializer.errors}")
            raise CommandError(json.dumps(serializer.errors), returncode=CONFIG_ERROR_CODE)

        config = plain_config(serializer.validated_data)
        run_id = fingerprint(config)
        set_guid(run_id)
        out = options.get("out") or os.path.join(OUTPUT_DIR, self.command_name)
        logger.info(f"Starting {self.command_name} run {run_id} into {out}")

        try:
            outputs, summary = self.run(serializer.validated_data, out)
        except serializers.ValidationError as e:
            logger.error(f"Invalid {self.command_name} config: {e.detail}")
            raise CommandError(json.dumps(e.detail), returncode=CONFIG_ERROR_CODE)
        except NumericalError as e:
            logger.error(f"{self.command_name} failed: {e}")
            raise CommandError(str(e), returncode=NUMERICAL_ERROR_CODE)
        except CornerSGDError as e:
            logger.error(f"{self.command_name} rejected its input: {e}")
            raise CommandError(str(e), returncode=CONFIG_ERROR_CODE)

        metadata = {
            "app": APP_NAME,
            "command": self.command_name,
            "config": config,
            "fingerprint": run_id,
            "outputs": sorted(outputs),
            "summary": summary,
        }
        write_json(os.path.join(out, METADATA_JSON), metadata)
        self.stdout.write(self.style.SUCCESS(f"{self.command_name} run {run_id} written to {out}"))

    def run(self, data, out):
        raise NotImplementedError

    def write_csv(self, out, spec, columns):
        write_csv(os.path.join(out, spec["filename"]), spec["columns"], columns)
        return spec["filename"]

    def write_json(self, out, filename, document):
        write_json(os.path.join(out, filename), document)
        return filename


def memory_algorithm(resolved, field="algorithm"):
    """The MemoryAlgorithm of resolved algorithm parameters; ideal corners and memory1 maps have none."""
    if resolved["algorithm"] is None:
        realized = ("gd", "heavy-ball", "corner")
        raise serializers.ValidationError({field: NO_MEMORY_REALIZATION_ERROR.format(resolved["name"], realized)})
    return resolved["algorithm"]
