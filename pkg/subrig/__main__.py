import os
import sys

# Subcommand spellings accepted on the command line.
ALIASES = {"export-builtin": "export_builtin"}


def main() -> None:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "subrig.settings")
    from django.core.management import execute_from_command_line

    argv = list(sys.argv)
    argv[0] = "subrig"
    if len(argv) > 1:
        argv[1] = ALIASES.get(argv[1], argv[1])
    execute_from_command_line(argv)


if __name__ == "__main__":
    main()
