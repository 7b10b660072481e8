from django.core.management.base import BaseCommand, CommandError

from core.cli import add_config_arguments, resolve_configs
from core.environment import init_world
from core.exceptions import MecError
from core.oracle import brute_force_allocation_oracle
from core.rewards import RewardWeights
from core.rng import RngStream, fork_stream


class Command(BaseCommand):
    help = 'Brute-force the best UE-MBS allocation of one sampled iteration on a tiny instance'
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--top', type=int, default=10, help='Rows of the utility table to print')
        add_config_arguments(parser)

    def handle(self, *args, **options):
        if options.get('mbs') is None:
            options['mbs'] = 2
        if options.get('ues') is None:
            options['ues'] = 2
        network, _ = resolve_configs(options)
        world = init_world(network, fork_stream(RngStream(options['seed']), 'env'))
        try:
            result = brute_force_allocation_oracle(world, network, RewardWeights.from_config(network))
        except MecError as exc:
            raise CommandError(str(exc), returncode=2)

        ranked = sorted(result.table, key=lambda row: row[1])
        self.stdout.write(f'{len(result.table)} allocations evaluated')
        for alloc, utility in ranked[:options['top']]:
            self.stdout.write(f"  {','.join(str(c) for c in alloc)}  {utility:.10g}")
        self.stdout.write(self.style.SUCCESS(
            f"✓ Best allocation {','.join(str(c) for c in result.best_alloc)} with DL utility {result.best_utility:.10g}"
        ))
