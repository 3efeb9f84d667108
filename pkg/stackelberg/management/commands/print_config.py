from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from pydantic import ValidationError

from stackelberg.exceptions import GameError
from stackelberg.helpers.config_helper import build_sweep_spec, config_document, dump_yaml, load_config_file


class Command(BaseCommand):
    help = "Print the effective configuration (defaults merged with --config) as YAML."

    def add_arguments(self, parser):
        parser.add_argument("--config", default=None, help="YAML config file")

    def handle(self, *args, **options):
        try:
            document = load_config_file(options["config"] or settings.IRS_GAME_CONFIG)
            spec = build_sweep_spec(document)
        except ValidationError as e:
            raise CommandError(f"invalid configuration: {e}")
        except GameError as e:
            raise CommandError(str(e))
        self.stdout.write(dump_yaml(config_document(spec)), ending="")
