from rest_framework import serializers

from cornersgd.exceptions import ContourError

from .models import CornerSpec, RationalMap
from .utils import (
    algorithm_from_corner,
    discretize_corner,
    heavy_ball_algorithm,
    heavy_ball_map,
    memory1_map,
    plain_gd_algorithm,
    plain_gd_map,
)

ALGORITHMS = ("gd", "heavy-ball", "memory1", "corner", "ideal-corner")


class RationalMapSerializer(serializers.Serializer):
    p = serializers.ListField(child=serializers.FloatField(), min_length=2)
    q = serializers.ListField(child=serializers.FloatField(), min_length=1)

    def validate(self, data):
        try:
            data["map"] = RationalMap(data["p"], data["q"])
        except ContourError as e:
            raise serializers.ValidationError(str(e))
        return data

    def create(self, validated_data):
        return validated_data["map"]


class CornerSpecSerializer(serializers.Serializer):
    theta = serializers.FloatField()
    a = serializers.FloatField(default=1.0)
    m = serializers.IntegerField(default=5, min_value=1)
    l = serializers.FloatField(default=5.0)

    def validate(self, data):
        try:
            data["spec"] = CornerSpec(theta=data["theta"], a=data["a"], m=data["m"], l=data["l"])
        except ContourError as e:
            raise serializers.ValidationError(str(e))
        return data

    def create(self, validated_data):
        return validated_data["spec"]


class AlgorithmSerializer(serializers.Serializer):
    """
    Named algorithm with its parameters. Resolves to the contour source (a RationalMap,
    or the CornerSpec of an ideal corner) and, where one exists, the MemoryAlgorithm.
    """

    name = serializers.ChoiceField(choices=ALGORITHMS)
    alpha = serializers.FloatField(required=False, default=1.0)
    beta = serializers.FloatField(required=False, default=0.0)
    q0 = serializers.FloatField(required=False, default=0.0)
    q1 = serializers.FloatField(required=False, default=-1.0)
    theta = serializers.FloatField(required=False, default=1.5)
    a = serializers.FloatField(required=False, default=1.0)
    memory = serializers.IntegerField(required=False, default=5, min_value=1)
    spacing = serializers.FloatField(required=False, default=5.0)

    def validate(self, data):
        name = data["name"]
        algorithm = None
        try:
            if name == "gd":
                source = plain_gd_map(data["alpha"])
                algorithm = plain_gd_algorithm(data["alpha"])
            elif name == "heavy-ball":
                source = heavy_ball_map(data["alpha"], data["beta"])
                algorithm = heavy_ball_algorithm(data["alpha"], data["beta"])
            elif name == "memory1":
                source = memory1_map(data["beta"], data["q0"], data["q1"])
            else:
                spec = CornerSpec(theta=data["theta"], a=data["a"], m=data["memory"], l=data["spacing"])
                if name == "ideal-corner":
                    source = spec
                else:
                    source = discretize_corner(spec)
                    algorithm = algorithm_from_corner(spec)
        except ContourError as e:
            raise serializers.ValidationError(str(e))
        data["source"] = source
        data["algorithm"] = algorithm
        return data

    def create(self, validated_data):
        return validated_data["source"], validated_data["algorithm"]
