// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use proptest::prelude::*;
use shadownav_cli::config::RunConfig;
use shadownav_core::engine::SpreadKind;

prop_compose! {
    fn run_config()(
        seed in any::<u64>(),
        sigma_app in 0.5..40.0f64,
        sigma_close in 20.0..300.0f64,
        delta_r in 0.01..1.0f64,
        delta_v in 0.01..2.0f64,
        noise in 0.0..3.0f64,
        fraction in 0.0..=1.0f64,
        std_dev in any::<bool>(),
        max_steps in 1u64..100_000,
        light_z in prop::option::of(-3.0..11.0f64),
        dir in "[a-z]{1,12}",
    ) -> RunConfig {
        let mut c = RunConfig { seed, output_dir: PathBuf::from(dir), ..RunConfig::default() };
        c.thresholds.sigma_app = sigma_app;
        c.thresholds.sigma_close = sigma_close;
        c.steps.delta_r_mm = delta_r;
        c.steps.delta_v_deg = delta_v;
        c.observe.noise_sigma_px = noise;
        c.sampler.floating_fraction = fraction;
        c.sampler.spread_kind = if std_dev { SpreadKind::StdDev } else { SpreadKind::Variance };
        c.limits.max_steps = max_steps;
        c.light.trocar_z_mm = light_z;
        c
    }
}

proptest! {
    #[test]
    fn parse_inverts_serialize(c in run_config()) {
        let text = serde_json::to_string_pretty(&c).unwrap();
        prop_assert_eq!(RunConfig::parse(&text).unwrap(), c);
    }
}
