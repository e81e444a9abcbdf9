from rest_framework import serializers

from cornersgd.exceptions import SpectrumError
from cornersgd.utils.io_utils import read_json, write_json

from .models import PowerLawMeta, SpectralProblem
from .utils import MIN_TAIL_POINTS, check_capacity


class PowerLawMetaSerializer(serializers.Serializer):
    nu = serializers.FloatField(min_value=0)
    zeta = serializers.FloatField(min_value=0)
    Lambda = serializers.FloatField(min_value=0)
    Qsrc = serializers.FloatField(min_value=0)

    def validate(self, data):
        for name, value in data.items():
            if value <= 0:
                raise serializers.ValidationError({name: "Must be strictly positive."})
        return data

    def create(self, validated_data):
        return PowerLawMeta(**validated_data)


class SpectralProblemSerializer(serializers.Serializer):
    eigenvalues = serializers.ListField(child=serializers.FloatField(), min_length=1)
    coeffs = serializers.ListField(child=serializers.FloatField(), min_length=1)
    meta = PowerLawMetaSerializer(required=False, allow_null=True)
    tail_mass = serializers.FloatField(required=False, default=0.0, min_value=0)
    index_origin = serializers.FloatField(required=False, default=1.0, min_value=0)
    name = serializers.CharField(required=False, default="custom")

    def validate(self, data):
        """
        Check the spectral invariants and, for documents with metadata, the capacity slope.
        """
        meta = data.get("meta")
        try:
            problem = SpectralProblem(
                data["eigenvalues"],
                data["coeffs"],
                meta=PowerLawMeta(**meta) if meta else None,
                tail_mass=data.get("tail_mass", 0.0),
                index_origin=data.get("index_origin", 1.0),
                name=data.get("name", "custom"),
            )
            if problem.meta is not None and problem.size // 2 >= MIN_TAIL_POINTS:
                check_capacity(problem)
        except SpectrumError as e:
            raise serializers.ValidationError(str(e))
        data["problem"] = problem
        return data

    def create(self, validated_data):
        return validated_data["problem"]


def load_problem(path):
    serializer = SpectralProblemSerializer(data=read_json(path))
    serializer.is_valid(raise_exception=True)
    return serializer.save()


def dump_problem(problem, path):
    return write_json(path, SpectralProblemSerializer(problem).data)
