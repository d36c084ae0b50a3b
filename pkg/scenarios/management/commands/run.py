from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from scenarios.api import ScenarioError, load_scenario, run


class Command(BaseCommand):
    help = "Run a scenario's tasks and write CSV and JSON results"

    def add_arguments(self, parser):
        parser.add_argument("scenario", help="Path to a scenario JSON file or a built-in name")
        parser.add_argument("--out", required=True, help="Output directory")
        parser.add_argument(
            "--parallel",
            action="store_true",
            help="Run independent tasks concurrently",
        )
        parser.add_argument("--rtol", type=float)
        parser.add_argument("--atol", type=float)
        parser.add_argument("--rank-tol", type=float)
        parser.add_argument(
            "--exploratory",
            action="store_true",
            help="Use loose integration tolerances unless --rtol/--atol are given",
        )

    def handle(self, *args, **options):
        try:
            scenario = load_scenario(options["scenario"])
        except ScenarioError as exc:
            raise CommandError(f"Invalid scenario: {exc}", returncode=1)

        overrides = {
            "rtol": options["rtol"],
            "atol": options["atol"],
            "rank_tol": options["rank_tol"],
        }
        if options["exploratory"]:
            overrides["rtol"] = overrides["rtol"] or settings.SUBRIG["EXPLORATORY_RTOL"]
            overrides["atol"] = overrides["atol"] or settings.SUBRIG["EXPLORATORY_ATOL"]

        bundle = run(
            scenario, options["out"], parallel=options["parallel"], overrides=overrides
        )
        for output in bundle.outputs:
            line = f"{output.name} ({output.kind}): {output.status}"
            if output.verdict:
                line += f", {output.verdict}"
            if output.error:
                line += f", {output.error}"
            self.stdout.write(line)

        if bundle.exit_code == 1:
            raise CommandError("Some tasks failed", returncode=1)
        if bundle.exit_code == 2:
            raise CommandError(
                "Some verdicts are indeterminate; raise the sample count", returncode=2
            )
