//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use stackcharge::warehouse::Sku;
use stackcharge::{Layout, OrderStream, RunConfig};

/// A generated week on the default layout, ready to simulate.
pub struct Week {
    pub config: RunConfig,
    pub layout: Arc<Layout>,
    pub fill: Vec<(Sku, usize)>,
    pub stream: Arc<OrderStream>,
}

/// One synthetic week with intensities multiplied by `scale`.
pub fn week(seed: u64, scale: f64) -> Week {
    let mut config = RunConfig::default();
    config.orders.generator.scale = scale;
    let layout = Arc::new(config.layout.build().expect("default layout builds"));
    let fill = config.initial_fill(&layout).expect("generated fill");
    let stream = config
        .week_streams(&layout, &fill, seed)
        .expect("generated week")
        .remove(0);
    Week {
        config,
        layout,
        fill,
        stream,
    }
}
