import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from scenarios.builtins import BUILTINS, get_builtin


class Command(BaseCommand):
    help = "Print a built-in scenario as JSON"

    def add_arguments(self, parser):
        parser.add_argument("name", help="Built-in scenario name")
        parser.add_argument("--out", help="Write to this file instead of stdout")

    def handle(self, *args, **options):
        name = options["name"]
        if name not in BUILTINS:
            raise CommandError(
                f"Unknown built-in {name!r}; choose from {', '.join(BUILTINS)}",
                returncode=1,
            )
        text = json.dumps(get_builtin(name), indent=2)
        if options["out"]:
            Path(options["out"]).write_text(text + "\n")
        else:
            self.stdout.write(text)
