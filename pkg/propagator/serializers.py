from rest_framework import serializers

from .models import Regime


class RegimeReportSerializer(serializers.Serializer):
    regime = serializers.ChoiceField(choices=[regime.value for regime in Regime])
    u_sigma = serializers.FloatField()
    xi_u = serializers.FloatField()
    xi_v = serializers.FloatField()
    predicted_coeff = serializers.FloatField(allow_null=True)
    loss_exponent = serializers.FloatField(allow_null=True)
    v_sigma = serializers.FloatField(allow_null=True)

    def to_representation(self, instance):
        data = super().to_representation(instance)
        data["regime"] = Regime(instance.regime).value
        return data


class NoiseTotalSerializer(serializers.Serializer):
    u_sigma = serializers.FloatField()
    tail = serializers.FloatField()
    tail_exponent = serializers.FloatField()
    divergent = serializers.BooleanField()


class AsymptoteSerializer(serializers.Serializer):
    v_pred = serializers.FloatField()
    u_pred = serializers.FloatField()


def series_columns(series):
    """Columns of the propagators CSV."""
    return {"t": series.steps, "U": series.u, "V": series.v}


def loss_columns(trajectory):
    """Columns of the loss CSV."""
    return {"t": trajectory.steps, "L": trajectory.l}
