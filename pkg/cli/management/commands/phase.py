from cli.serializers import PhaseConfigSerializer, grid_values
from cli.utils import RunCommand
from corner_theory.serializers import phase_columns
from corner_theory.utils import phase_sweep
from cornersgd.constants import PHASE_CSV


class Command(RunCommand):
    help = "Maximal corner acceleration theta_max and its limiting region over a (zeta, 1/nu) grid."
    serializer_class = PhaseConfigSerializer

    def run(self, data, out):
        cells = phase_sweep(grid_values(data["zeta"]), grid_values(data["inv_nu"]))
        summary = {"cells": len(cells), "inside": sum(cell.inside for cell in cells)}
        return [self.write_csv(out, PHASE_CSV, phase_columns(cells))], summary
