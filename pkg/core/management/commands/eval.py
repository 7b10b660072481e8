import numpy as np
from django.core.management.base import BaseCommand, CommandError

from core.exceptions import MecError
from core.metrics import write_metrics_csv
from core.trainers import evaluate_policy


class Command(BaseCommand):
    help = 'Run a saved policy greedily (argmax allocation, mean UL power) and report its episode metrics'
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--episodes', type=int, default=10)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--out', help='Write the episode metrics CSV here')

    def handle(self, *args, **options):
        if options['episodes'] < 1:
            raise CommandError('--episodes must be at least 1')
        try:
            records = evaluate_policy(options['checkpoint'], options['episodes'], options['seed'])
        except (MecError, OSError, KeyError, ValueError) as exc:
            raise CommandError(f"cannot evaluate {options['checkpoint']}: {exc}", returncode=2)

        self.stdout.write(f"Episodes: {len(records)}")
        self.stdout.write(f"Mean episodic reward: {np.mean([r.reward_sum for r in records]):.4f}")
        self.stdout.write(f"Mean DL delay: {np.mean([r.avg_dl_delay for r in records]):.6g} s")
        self.stdout.write(f"Mean UL delay: {np.mean([r.avg_ul_delay for r in records]):.6g} s")
        self.stdout.write(f"Mean objective: {np.mean([r.objective for r in records]):.6g}")
        self.stdout.write(f"Depleted episodes: {sum(r.depleted for r in records)}")
        if options['out']:
            write_metrics_csv(options['out'], records)
            self.stdout.write(self.style.SUCCESS(f"✓ Metrics written to {options['out']}"))
