from rest_framework import serializers


class LossFitSerializer(serializers.Serializer):
    exponent = serializers.FloatField()
    stderr = serializers.FloatField()
    points = serializers.IntegerField()


class TrainSettingsSerializer(serializers.Serializer):
    """
    Training section of a run config. With auto_scale the algorithm's step sizes are set from
    the model's largest Hessian eigenvalue (A = lambda_max / 1.9), overriding alpha and a.
    """

    model = serializers.ChoiceField(choices=["indicator", "gaussian"], default="indicator")
    features = serializers.IntegerField(min_value=1, default=2000)
    algorithm = serializers.DictField()
    auto_scale = serializers.BooleanField(default=True)
    steps = serializers.IntegerField(min_value=1, default=20_000)
    batch = serializers.IntegerField(min_value=1, default=100)
    seed = serializers.IntegerField(min_value=0, default=0)
    seeds = serializers.IntegerField(min_value=1, default=1)
    deterministic = serializers.BooleanField(default=False)
    fit_window = serializers.ListField(
        child=serializers.FloatField(min_value=1), min_length=2, max_length=2, required=False
    )


def trajectory_columns(trajectory):
    """Columns of the trajectory CSV."""
    return {"step": trajectory.steps, "loss": trajectory.l}
