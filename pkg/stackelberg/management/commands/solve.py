from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from pydantic import ValidationError

from stackelberg.exceptions import GameError
from stackelberg.helpers.config_helper import build_sweep_spec, load_config_file
from stackelberg.helpers.output_helper import dump_json, write_atomic, write_trace_plot
from stackelberg.services.game import Scheme, run_random_pricing, run_scheme, run_stackelberg
from stackelberg.services.scenario import generate_channels, trial_rng
from stackelberg.services.sweep import CHANNEL_STREAM, PRICING_STREAM

from .sweep import comma_list


class Command(BaseCommand):
    help = "Solve one channel realization with every requested scheme and dump the full state as JSON."

    def add_arguments(self, parser):
        parser.add_argument("--config", default=None, help="YAML config file")
        parser.add_argument("--seed", type=int, default=None, help="master seed")
        parser.add_argument("--draw", type=int, default=0, help="draw index of the realization")
        parser.add_argument("--schemes", type=comma_list, default=None)
        parser.add_argument("--out", default=None, help="directory for solve.json (stdout when omitted)")
        parser.add_argument("--plots", action="store_true", help="write the follower convergence trace as SVG")
        parser.add_argument("--check-equilibrium", action="store_true",
                            help="measure both equilibrium conditions for the stackelberg outcome")

    def handle(self, *args, **options):
        try:
            document = load_config_file(options["config"] or settings.IRS_GAME_CONFIG)
            spec = build_sweep_spec(document, {"seed": options["seed"], "schemes": options["schemes"]})
            cfg = spec.scenario
            seed, draw = spec.master_seed, options["draw"]
            ch = generate_channels(cfg, trial_rng(seed, draw, CHANNEL_STREAM))

            outcomes = {}
            for scheme in spec.schemes:
                rng = trial_rng(seed, draw, PRICING_STREAM)
                if scheme is Scheme.STACKELBERG:
                    outcomes[scheme] = run_stackelberg(ch, cfg, check=options["check_equilibrium"], rng=rng)
                elif scheme is Scheme.RANDOM_PRICING:
                    outcomes[scheme] = run_random_pricing(ch, cfg, rng)
                else:
                    outcomes[scheme] = run_scheme(scheme, ch, cfg, rng)

            document = {
                "seed": seed,
                "draw": draw,
                "scenario": cfg.model_dump(mode="json"),
                "outcomes": {s.value: o.as_dict() for s, o in outcomes.items()},
            }
            payload = dump_json(document)

            if options["out"]:
                out_dir = Path(options["out"])
                path = write_atomic(out_dir / "solve.json", payload.decode("utf-8"))
                self.stdout.write(f"solve: {path}")
                if options["plots"]:
                    for scheme, outcome in outcomes.items():
                        if outcome.trace:
                            plot = write_trace_plot(outcome.trace, out_dir / f"trace_{scheme.value}.svg")
                            self.stdout.write(f"trace: {plot}")
            else:
                self.stdout.write(payload.decode("utf-8"))
        except ValidationError as e:
            raise CommandError(f"invalid configuration: {e}")
        except GameError as e:
            raise CommandError(str(e))
