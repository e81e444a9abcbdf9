import logging

from cli.serializers import TheoryConfigSerializer
from cli.utils import RunCommand, memory_algorithm, resolve_algorithm
from corner_theory.serializers import CornerAsymptoticsSerializer
from corner_theory.utils import corner_asymptotics
from cornersgd.constants import LOSS_CSV, MISSING_META_ERROR, PROPAGATORS_CSV, REGIME_JSON
from cornersgd.exceptions import CornerSGDError, PropagatorError
from propagator.serializers import AsymptoteSerializer, RegimeReportSerializer, loss_columns, series_columns
from propagator.utils import aggregate, classify_regime, finite_memory_asymptote, loss_from_propagators

logger = logging.getLogger("app")


def predicted_asymptote(resolved, problem, tau1, batch, steps):
    """Large-t prediction: corner coefficients for corner maps, finite-memory rates otherwise."""
    try:
        if resolved["name"] in ("corner", "ideal-corner"):
            meta = problem.meta
            if meta is None:
                raise PropagatorError(MISSING_META_ERROR)
            corner = corner_asymptotics(
                resolved["theta"], resolved["a"], meta.nu, meta.zeta, meta.Lambda, meta.Qsrc, tau1, batch
            )
            return {"corner": CornerAsymptoticsSerializer(corner).data}
        asymptote = finite_memory_asymptote(resolved["source"], problem, tau1, batch, steps)
        return {"finite_memory": AsymptoteSerializer(asymptote).data, "t": steps}
    except CornerSGDError as e:
        logger.warning(f"No asymptotic prediction for {resolved['name']}: {e}")
        return None


class Command(RunCommand):
    help = "Propagators U_t, V_t, the mean loss L_t and the convergence regime of an algorithm on a problem."
    serializer_class = TheoryConfigSerializer
    flags = ("problem", "algo", "theta", "memory", "spacing", "batch", "steps", "tau1")
    sections = ("problem", "algorithm")

    def run(self, data, out):
        problem = data["problem"]["problem"]
        resolved = resolve_algorithm(data["algorithm"], problem.lambda_max if data["auto_scale"] else None)
        if data["kernels"] == "matrix":
            kernel_source = memory_algorithm(resolved, field="kernels")
        else:
            kernel_source = resolved["source"]

        steps, tau1, batch = data["steps"], data["tau1"], data["batch"]
        series = aggregate(problem, kernel_source, steps, tau1=tau1, batch=batch, grid=data["grid"])
        trajectory = loss_from_propagators(series, steps)
        report = classify_regime(series, problem)
        logger.info(f"{resolved['name']} on {problem.name}: {report.regime.value}, U_sigma={report.u_sigma:.6g}")

        regime = dict(RegimeReportSerializer(report).data)
        regime["asymptote"] = predicted_asymptote(resolved, problem, tau1, batch, steps)
        outputs = [
            self.write_csv(out, PROPAGATORS_CSV, series_columns(series)),
            self.write_csv(out, LOSS_CSV, loss_columns(trajectory)),
            self.write_json(out, REGIME_JSON, regime),
        ]
        summary = {"regime": report.regime.value, "u_sigma": report.u_sigma, "problem": problem.name}
        return outputs, summary
