import logging
from functools import partial

from cli.serializers import TrainRunSerializer, plain_config
from cli.utils import RunCommand, memory_algorithm, resolve_algorithm
from cornersgd.constants import FIT_JSON, TRAJECTORY_CSV
from trainer.models import GaussianSpectralModel, IndicatorModel, TrainConfig
from trainer.serializers import LossFitSerializer, trajectory_columns
from trainer.utils import eval_schedule, fit_loss_exponent, model_lambda_max, run_seeds

logger = logging.getLogger("app")


class Command(RunCommand):
    help = "Plain or memory SGD on the indicator or Gaussian spectral model, averaged over seeds."
    serializer_class = TrainRunSerializer
    flags = ("problem", "algo", "theta", "memory", "spacing", "batch", "steps", "seed")
    sections = ("problem", "algorithm")

    def run(self, data, out):
        if data["model"] == "indicator":
            model_factory = partial(IndicatorModel, data["features"])
        else:
            model_factory = partial(GaussianSpectralModel, data["problem"]["problem"])
        lambda_max = model_lambda_max(model_factory()) if data["auto_scale"] else None
        resolved = resolve_algorithm(data["algorithm"], lambda_max)

        config = TrainConfig(
            algorithm=memory_algorithm(resolved),
            steps=data["steps"],
            eval_steps=eval_schedule(data["steps"]),
            batch=data["batch"],
            seed=data["seed"],
            deterministic=data["deterministic"],
            problem=data["model"],
        )
        average = run_seeds(config, model_factory, data["seeds"])
        trajectory = average.mean
        outputs = [self.write_csv(out, TRAJECTORY_CSV, trajectory_columns(trajectory))]
        summary = {
            "algorithm": plain_config(resolved),
            "diverged_at": trajectory.diverged_at,
            "lambda_max": lambda_max,
            "run_fingerprint": trajectory.fingerprint,
            "seeds": data["seeds"],
        }

        if "fit_window" in data:
            if trajectory.diverged_at is not None:
                logger.warning(f"Skipping the loss fit: the run diverged at step {trajectory.diverged_at}")
            else:
                fit = fit_loss_exponent(trajectory, *data["fit_window"])
                outputs.append(self.write_json(out, FIT_JSON, LossFitSerializer(fit).data))
                summary["exponent"] = fit.exponent
        return outputs, summary
