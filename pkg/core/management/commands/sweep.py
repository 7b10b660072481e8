from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.cli import add_config_arguments, resolve_configs, split_list
from core.exceptions import ConfigError, MecError
from core.harness import ExperimentSpec, aggregate_campaign, run_experiment

DEFAULT_VALUES = '0,0.25,0.5,0.75,1'


class Command(BaseCommand):
    help = 'Run a multi-seed campaign over a q or h weight sweep and summarise the tail of every run'
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--algo', choices=['mals', 'ida', 'ctde', 'random'], default='mals')
        parser.add_argument('--axis', choices=['q', 'h', 'none'], default='q')
        parser.add_argument('--values', default=DEFAULT_VALUES, help='Comma-separated sweep values')
        parser.add_argument('--seeds', default='0', help='Comma-separated seeds')
        parser.add_argument('--steps', type=int, help='Total environment steps per run')
        parser.add_argument('--episodes', type=int, default=10, help='Episodes per run for the random baseline')
        parser.add_argument('--tail-fraction', type=float, default=0.1)
        parser.add_argument('--workers', type=int, help='Worker processes (default: MEC_WORKERS)')
        parser.add_argument('--out', help='Output directory (default: MEC_OUTPUT_DIR)')
        parser.add_argument('--trace', action='store_true')
        add_config_arguments(parser)

    def handle(self, *args, **options):
        network, train = resolve_configs(options, steps='total_steps')
        values = split_list(options['values']) if options['axis'] != 'none' else []
        try:
            spec = ExperimentSpec.from_data({
                'algorithm': options['algo'],
                'seeds': split_list(options['seeds'], int),
                'axis': options['axis'],
                'values': values,
                'output_dir': options['out'] or settings.MEC_OUTPUT_DIR,
                'episodes': options['episodes'],
                'tail_fraction': options['tail_fraction'],
                'workers': options['workers'] or settings.MEC_WORKERS,
                'trace': options['trace'],
            }, network=network, train=train)
        except ConfigError as exc:
            raise CommandError(str(exc))

        runs = max(len(spec.values), 1) * len(spec.seeds)
        self.stdout.write(f'Sweeping {spec.axis} over {spec.values or "-"} with seeds {spec.seeds} ({runs} runs)...')
        try:
            manifest = run_experiment(spec)
            summary = aggregate_campaign(spec.output_dir, spec.tail_fraction)
        except (MecError, OSError) as exc:
            raise CommandError(str(exc), returncode=2)

        for row in summary['rows']:
            metrics = row['metrics']
            self.stdout.write(
                f"{spec.axis}={row['value']}: reward {metrics['reward_sum']['mean']:.4f} "
                f"[{metrics['reward_sum']['min']:.4f}, {metrics['reward_sum']['max']:.4f}], "
                f"DL delay {metrics['avg_dl_delay']['mean']:.4g}s, UL delay {metrics['avg_ul_delay']['mean']:.4g}s"
            )
        failed = [entry['run'] for entry in manifest['runs'] if entry['status'] != 'ok']
        if failed:
            self.stdout.write(self.style.WARNING(f'↻ {len(failed)} runs did not finish: {", ".join(failed)}'))
            raise CommandError('campaign incomplete', returncode=2)
        self.stdout.write(self.style.SUCCESS(f'✓ {runs} runs and summary written to {spec.output_dir}'))
