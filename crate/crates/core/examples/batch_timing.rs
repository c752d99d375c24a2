//! Replay an arrival schedule through the threshold-or-timeout batcher on a
//! simulated clock.
//!
//!     cargo run --example batch_timing

use std::time::Duration;

use docparse::batching::simulate;

fn main() {
    let ms = Duration::from_millis;
    // a burst of 20 crops, a pause, then 3 stragglers
    let mut arrivals: Vec<Duration> = (0..20).map(|i| ms(i / 4)).collect();
    arrivals.extend([ms(100), ms(130), ms(220)]);

    for (threshold, wait) in [(16, 50), (8, 50), (16, 10)] {
        println!("threshold={threshold} max_wait={wait}ms");
        for f in simulate(&arrivals, threshold, ms(wait)) {
            println!("  t={:>4}ms size={:>2} {}", f.at.as_millis(), f.size, f.reason);
        }
    }
}
