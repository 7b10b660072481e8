from django.core.management.base import BaseCommand, CommandError

from core.calibration import SURVIVAL_TARGET, calibrate
from core.cli import add_config_arguments, resolve_configs
from core.exceptions import MecError


class Command(BaseCommand):
    help = 'Survey fixed policies on a scenario and check its link budget, battery sizing and penalty dominance'
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--episodes', type=int, default=20, help='Episodes per survey policy')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--survival', type=float, default=SURVIVAL_TARGET,
                            help='Fraction of min-power episodes that must reach the horizon')
        add_config_arguments(parser)

    def handle(self, *args, **options):
        if options['episodes'] < 1:
            raise CommandError('--episodes must be >= 1')
        network, _ = resolve_configs(options)
        self.stdout.write(
            f"Calibrating {network.m_mbs} MBSs / {network.n_ues} UEs, T={network.t_steps}, "
            f"{options['episodes']} episodes per policy..."
        )
        try:
            report = calibrate(network, options['episodes'], options['seed'])
        except MecError as exc:
            raise CommandError(str(exc), returncode=2)

        self.stdout.write(f"Median DL SNR: {report.median_dl_snr_db:.2f} dB")
        self.stdout.write(f"DL latency: median {report.dl_latency_median:.4g} s, p95 {report.dl_latency_p95:.4g} s")
        self.stdout.write(f"UL latency: median {report.ul_latency_median:.4g} s, "
                          f"energy median {report.ul_energy_median:.4g} J")
        for survival in report.policies.values():
            self.stdout.write(
                f"  {survival.policy:<10} reached T {survival.reached_horizon}/{survival.episodes}, "
                f"depleted {survival.depleted}, mean steps {survival.mean_steps:.1f}, "
                f"worst battery use {survival.max_battery_used:.1f}%, reward floor {survival.reward_floor:.4f}"
            )

        failures = report.failures(options['survival'])
        for failure in failures:
            self.stdout.write(self.style.WARNING(f"↻ {failure}"))
        if failures:
            raise CommandError(f"{len(failures)} calibration targets missed", returncode=2)
        self.stdout.write(self.style.SUCCESS(
            f"✓ Penalty {report.penalty:g} is below every non-penalty reward (floor {report.reward_floor:.4f})"
        ))
