from rest_framework import serializers

from cli.serializers import FitConfigSerializer
from cli.utils import RunCommand
from cornersgd.constants import CONFIG_READ_ERROR, CSV_COLUMNS_ERROR, FIT_JSON
from cornersgd.utils.io_utils import read_csv
from propagator.models import LossTrajectory
from trainer.serializers import LossFitSerializer
from trainer.utils import fit_loss_exponent

# (step column, loss column, provenance)
LAYOUTS = (("step", "loss", "empirical"), ("t", "L", "theory"))


def read_trajectory(path):
    try:
        frame = read_csv(path)
    except (OSError, ValueError) as e:
        raise serializers.ValidationError({"input": CONFIG_READ_ERROR.format(path, e)})
    for steps, losses, provenance in LAYOUTS:
        if steps in frame.columns and losses in frame.columns:
            return LossTrajectory(
                l=frame[losses].to_numpy(dtype=float),
                provenance=provenance,
                steps=frame[steps].to_numpy(),
            )
    raise serializers.ValidationError({"input": CSV_COLUMNS_ERROR.format(path)})


class Command(RunCommand):
    help = "Loss exponent of a trajectory or loss CSV, fitted on smoothed log-log data."
    serializer_class = FitConfigSerializer
    flags = ("input", "t_min", "t_max")

    def run(self, data, out):
        trajectory = read_trajectory(data["input"])
        last = float(trajectory.steps[-1])
        t_min = data["t_min"] or max(1.0, last / 100.0)
        t_max = data["t_max"] or last
        fit = fit_loss_exponent(trajectory, t_min, t_max, data["width"])
        document = dict(LossFitSerializer(fit).data, t_min=t_min, t_max=t_max)
        return [self.write_json(out, FIT_JSON, document)], {"exponent": fit.exponent}
