from django.core.management.base import BaseCommand

from scenarios.builtins import BUILTINS


class Command(BaseCommand):
    help = "List the built-in scenarios"

    def handle(self, *args, **options):
        for name, scenario in BUILTINS.items():
            self.stdout.write(f"{name}: {scenario['description']}")
