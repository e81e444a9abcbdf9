import logging
import os

import numpy as np
from rest_framework import serializers

from contour.serializers import AlgorithmSerializer
from cornersgd.constants import CONFIG_READ_ERROR, DEFAULT_PROBLEM_SIZE, UNKNOWN_PROBLEM_ERROR
from cornersgd.exceptions import SpectrumError
from spectrum.serializers import load_problem
from spectrum.utils import indicator_problem, power_law_problem
from trainer.serializers import TrainSettingsSerializer

logger = logging.getLogger("app")

PROBLEMS = ("power-law", "indicator")


class ProblemConfigSerializer(serializers.Serializer):
    """
    A built-in problem by name, or the path of a problem JSON document. The power-law
    parameters are ignored for the other problems. Built-in problems have K modes, by default
    DEFAULT_PROBLEM_SIZE; a problem file is truncated only when K is given.
    """

    name = serializers.CharField(default="power-law")
    nu = serializers.FloatField(default=4.0)
    zeta = serializers.FloatField(default=0.25)
    Lambda = serializers.FloatField(default=1.0)
    Qsrc = serializers.FloatField(default=1.0)
    K = serializers.IntegerField(min_value=2, required=False)

    def validate(self, data):
        name = data["name"]
        try:
            if name in PROBLEMS:
                data.setdefault("K", DEFAULT_PROBLEM_SIZE)
            if name == "power-law":
                problem = power_law_problem(data["nu"], data["zeta"], data["Lambda"], data["Qsrc"], data["K"])
            elif name == "indicator":
                problem = indicator_problem(data["K"])
            elif os.path.isfile(name):
                problem = load_problem(name)
                if "K" in data and problem.size > data["K"]:
                    logger.info(f"Truncating {name} from {problem.size} to {data['K']} modes")
                    problem = problem.truncated(data["K"])
            else:
                raise serializers.ValidationError({"name": UNKNOWN_PROBLEM_ERROR.format(name, PROBLEMS)})
        except SpectrumError as e:
            raise serializers.ValidationError(str(e))
        except (OSError, ValueError) as e:
            raise serializers.ValidationError(CONFIG_READ_ERROR.format(name, e))
        data["problem"] = problem
        return data

    def create(self, validated_data):
        return validated_data["problem"]


class GridSerializer(serializers.Serializer):
    start = serializers.FloatField()
    stop = serializers.FloatField()
    num = serializers.IntegerField(min_value=2)

    def validate(self, data):
        if data["stop"] <= data["start"]:
            raise serializers.ValidationError({"stop": "Must be greater than start."})
        return data


def grid_values(grid):
    return np.linspace(grid["start"], grid["stop"], grid["num"])


class TheoryConfigSerializer(serializers.Serializer):
    """
    Propagators, loss and regime of an algorithm on a problem. kernels selects the contour FFT
    or direct matrix powers; the latter needs an algorithm with a finite memory realization.
    With auto_scale the step sizes follow the problem's largest eigenvalue, as in training.
    """

    problem = ProblemConfigSerializer()
    algorithm = serializers.DictField()
    auto_scale = serializers.BooleanField(default=False)
    kernels = serializers.ChoiceField(choices=["contour", "matrix"], default="contour")
    tau1 = serializers.FloatField(default=1.0)
    batch = serializers.IntegerField(min_value=1, default=1)
    steps = serializers.IntegerField(min_value=1, default=10_000)
    grid = serializers.IntegerField(min_value=4, required=False, allow_null=True, default=None)

    def validate_tau1(self, value):
        if value <= 0:
            raise serializers.ValidationError("Must be strictly positive.")
        return value


class TrainRunSerializer(TrainSettingsSerializer):
    problem = ProblemConfigSerializer()


class PhaseConfigSerializer(serializers.Serializer):
    zeta = GridSerializer(default={"start": 0.0, "stop": 2.0, "num": 81})
    inv_nu = GridSerializer(default={"start": 0.0, "stop": 1.0, "num": 41})


class ContourConfigSerializer(serializers.Serializer):
    algorithm = AlgorithmSerializer()
    points = serializers.IntegerField(min_value=1, default=1024)


class FitConfigSerializer(serializers.Serializer):
    input = serializers.CharField()
    t_min = serializers.FloatField(min_value=1, required=False, allow_null=True, default=None)
    t_max = serializers.FloatField(min_value=1, required=False, allow_null=True, default=None)
    width = serializers.FloatField(min_value=1, required=False, allow_null=True, default=None)


def plain_config(data):
    """The JSON part of validated data; resolved objects (problems, maps, algorithms) are dropped."""
    if isinstance(data, dict):
        return {key: plain_config(value) for key, value in data.items() if _is_plain(value)}
    if isinstance(data, (list, tuple)):
        return [plain_config(value) for value in data]
    return data


def _is_plain(value):
    if isinstance(value, (dict, list, tuple)):
        return True
    return value is None or isinstance(value, (str, bool, int, float))

