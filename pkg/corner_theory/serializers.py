from rest_framework import serializers

from .models import Region


class CornerAsymptoticsSerializer(serializers.Serializer):
    theta = serializers.FloatField()
    c_psi = serializers.FloatField()
    nu = serializers.FloatField()
    zeta = serializers.FloatField()
    tau1 = serializers.FloatField()
    batch = serializers.IntegerField(min_value=1)
    c_u = serializers.FloatField()
    c_v = serializers.FloatField()
    exponents = serializers.SerializerMethodField()

    def get_exponents(self, instance):
        signal, noise = instance.exponents
        return {"V": signal, "U": noise}


class PhaseCellSerializer(serializers.Serializer):
    zeta = serializers.FloatField()
    inv_nu = serializers.FloatField()
    theta_max = serializers.FloatField(allow_null=True)
    region = serializers.ChoiceField(choices=[region.value for region in Region], source="subregion")

    def to_representation(self, instance):
        data = super().to_representation(instance)
        data["region"] = Region(instance.subregion).value
        if not instance.inside:
            data["theta_max"] = None
        return data


def phase_columns(cells):
    """Columns of the phase diagram CSV; theta_max is nan outside the signal phase."""
    return {
        "zeta": [cell.zeta for cell in cells],
        "inv_nu": [cell.inv_nu for cell in cells],
        "theta_max": [cell.theta_max for cell in cells],
        "region": [Region(cell.subregion).value for cell in cells],
    }
