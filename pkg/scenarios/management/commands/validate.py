from django.core.management.base import BaseCommand, CommandError

from geometry import api as geometry_api
from geometry.structures import StructureError
from scenarios.api import ScenarioError, load_scenario
from subrig.utils.expr import ExprError


class Command(BaseCommand):
    help = "Validate a scenario file or built-in name without running it"

    def add_arguments(self, parser):
        parser.add_argument("scenario", help="Path to a scenario JSON file or a built-in name")

    def handle(self, *args, **options):
        try:
            scenario = load_scenario(options["scenario"])
            structure = scenario.build_structure()
            geometry_api.riemannian_extension(structure)
        except ScenarioError as exc:
            raise CommandError(f"Invalid scenario: {exc}", returncode=1)
        except (StructureError, ExprError) as exc:
            raise CommandError(f"Invalid structure: {exc}", returncode=1)

        self.stdout.write(
            f"OK {scenario.name}: n={structure.dimension}, k={structure.rank}, "
            f"{len(scenario.tasks)} task(s)"
        )
