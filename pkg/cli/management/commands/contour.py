import math

from cli.serializers import ContourConfigSerializer
from cli.utils import RunCommand
from contour.models import RationalMap
from contour.utils import contour_points, effective_learning_rate, external_angle
from cornersgd.constants import CONTOUR_CSV


class Command(RunCommand):
    help = "Contour Psi(exp(i phi)) of a named algorithm's map, sampled at equally spaced phi."
    serializer_class = ContourConfigSerializer
    flags = ("algo", "theta", "memory", "spacing")
    sections = ("algorithm",)

    def run(self, data, out):
        source = data["algorithm"]["source"]
        polyline = contour_points(source, data["points"])
        columns = {"phi": polyline.phi, "re": polyline.points.real, "im": polyline.points.imag}
        summary = {"angle_over_pi": external_angle(polyline) / math.pi}
        if isinstance(source, RationalMap):
            summary["alpha_eff"] = effective_learning_rate(source)
        return [self.write_csv(out, CONTOUR_CSV, columns)], summary
