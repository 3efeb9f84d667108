from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from pydantic import ValidationError

from stackelberg.exceptions import GameError
from stackelberg.helpers.config_helper import build_sweep_spec, load_config_file
from stackelberg.helpers.output_helper import emit_outputs
from stackelberg.services.sweep import run_sweep


def comma_list(value: str):
    return [item.strip() for item in value.split(",") if item.strip()]


def float_list(value: str):
    return [float(item) for item in comma_list(value)]


class Command(BaseCommand):
    help = "Run a Monte-Carlo sweep and write results.csv / paired.csv (and SVG plots with --plots)."

    def add_arguments(self, parser):
        parser.add_argument("--config", default=None, help="YAML config file")
        parser.add_argument("--seed", type=int, default=None, help="master seed")
        parser.add_argument("--trials", type=int, default=None, help="trials per sweep value")
        parser.add_argument("--schemes", type=comma_list, default=None,
                            help="comma list of stackelberg, random-pricing, direct-link ('' for none)")
        parser.add_argument("--sweep", dest="sweep_name", choices=["p_max_dbm", "num_modules"], default=None)
        parser.add_argument("--values", type=float_list, default=None, help="comma list of sweep values")
        parser.add_argument("--out", default=None, help="output directory")
        parser.add_argument("--plots", action="store_true", help="also write one SVG per metric")
        parser.add_argument("--threads", type=int, default=None, help="worker processes")
        parser.add_argument("--no-progress", action="store_true")

    def handle(self, *args, **options):
        try:
            document = load_config_file(options["config"] or settings.IRS_GAME_CONFIG)
            spec = build_sweep_spec(document, {
                "seed": options["seed"],
                "trials": options["trials"],
                "schemes": options["schemes"],
                "name": options["sweep_name"],
                "values": options["values"],
            })
            threads = options["threads"] or settings.IRS_GAME_THREADS
            result = run_sweep(spec, threads=threads, progress=not options["no_progress"])
            out_dir = Path(options["out"] or settings.IRS_GAME_RESULTS_DIR)
            written = emit_outputs(result, out_dir, plots=options["plots"])
        except ValidationError as e:
            raise CommandError(f"invalid configuration: {e}")
        except GameError as e:
            raise CommandError(str(e))

        for name, path in written.items():
            self.stdout.write(f"{name}: {path}")
