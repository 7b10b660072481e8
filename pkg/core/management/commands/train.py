import os

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.cli import add_config_arguments, resolve_configs
from core.exceptions import ConfigError, MecError
from core.harness import ExperimentSpec, run_experiment, tail_records
from core.metrics import read_metrics_csv


class Command(BaseCommand):
    help = 'Train one run (MALS, IDA, CTDE or the random baseline) and write its metrics, log and checkpoint'
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--algo', choices=['mals', 'ida', 'ctde', 'random'], default='mals')
        parser.add_argument('--seed', type=int, help='Training seed (default: the config seed)')
        parser.add_argument('--steps', type=int, help='Total environment steps (total_steps)')
        parser.add_argument('--episodes', type=int, default=10, help='Episodes for the random baseline')
        parser.add_argument('--out', help='Output directory (default: MEC_OUTPUT_DIR)')
        parser.add_argument('--trace', action='store_true', help='Write a per-phase JSON lines trace')
        add_config_arguments(parser)

    def handle(self, *args, **options):
        network, train = resolve_configs(options, seed='seed', steps='total_steps')
        try:
            spec = ExperimentSpec.from_data({
                'algorithm': options['algo'],
                'seeds': [train.seed],
                'output_dir': options['out'] or settings.MEC_OUTPUT_DIR,
                'episodes': options['episodes'],
                'trace': options['trace'],
            }, network=network, train=train)
        except ConfigError as exc:
            raise CommandError(str(exc))

        self.stdout.write(
            f'Training {spec.algorithm} on {network.m_mbs} MBSs / {network.n_ues} UEs, seed {train.seed}...'
        )
        try:
            manifest = run_experiment(spec)
        except (MecError, OSError) as exc:
            raise CommandError(str(exc), returncode=2)

        entry = manifest['runs'][0]
        if entry['status'] != 'ok':
            raise CommandError(f"run {entry['run']} {entry['status']}: {entry['reason']}", returncode=2)
        self.stdout.write(self.style.SUCCESS(
            f"✓ {entry['run']}: {entry['episodes']} episodes written to {spec.output_dir}/{entry['run']}"
        ))
        records = read_metrics_csv(os.path.join(spec.output_dir, entry["files"]["metrics"]))
        tail = [record.reward_sum for record in tail_records(records, 0.1)]
        if tail:
            self.stdout.write(f"Tail mean episodic reward: {np.mean(tail):.4f}")
