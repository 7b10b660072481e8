import os

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.harness import MANIFEST_NAME, SUMMARY_NAME, aggregate_campaign


class Command(BaseCommand):
    help = 'Aggregate a finished campaign: tail means with min/max bands across seeds, per sweep value'
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('campaign', nargs='?', help='Campaign directory (default: MEC_OUTPUT_DIR)')
        parser.add_argument('--tail-fraction', type=float, help='Defaults to the value recorded in the manifest')

    def handle(self, *args, **options):
        campaign = options['campaign'] or settings.MEC_OUTPUT_DIR
        if not os.path.isfile(os.path.join(campaign, MANIFEST_NAME)):
            raise CommandError(f'{campaign} has no {MANIFEST_NAME}', returncode=2)
        fraction = options['tail_fraction']
        if fraction is not None and not 0 < fraction <= 1:
            raise CommandError('--tail-fraction must be in (0,1]')
        try:
            summary = aggregate_campaign(campaign, fraction)
        except (OSError, ValueError, KeyError) as exc:
            raise CommandError(f'cannot aggregate {campaign}: {exc}', returncode=2)

        for name, rho in summary['spearman'].items():
            if rho is not None:
                self.stdout.write(f'Spearman({summary["axis"]}, {name}) = {rho:+.3f}')
        if summary['partial']:
            self.stdout.write(self.style.WARNING(f"↻ Partial: missing {', '.join(summary['missing'])}"))
        self.stdout.write(self.style.SUCCESS(
            f"✓ {len(summary['rows'])} sweep rows written to {os.path.join(campaign, SUMMARY_NAME)}"
        ))
