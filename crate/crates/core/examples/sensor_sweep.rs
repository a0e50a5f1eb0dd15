// Ranger behaviour: distance error against air temperature for a firmware
// calibrated at 25 C, and echo loss against mounting angle.

use std::error::Error;

use feeder_core::domain::FeederConfig;
use feeder_core::firmware::distance_from_echo;
use feeder_core::hal::UltrasonicPort;
use feeder_core::simenv::rng::stream_rng;
use feeder_core::simenv::{UltrasonicModel, UltrasonicParams};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let assumed = FeederConfig::default().assumed_sound_speed_mps;
    println!("true distance 100 cm, noise off");
    for temp in (-10..=50).step_by(10) {
        let mut ranger = UltrasonicModel::new(
            UltrasonicParams {
                temp_c: temp as f64,
                noise_enabled: false,
                ..UltrasonicParams::default()
            },
            stream_rng(1, 3),
        );
        ranger.set_true_distance(100.0);
        let us = ranger.ping().ok_or("timeout")?;
        let d = distance_from_echo(us, assumed);
        println!(
            "  {temp:>3} C: echo {us:7.1} us -> {d:7.2} cm ({:+.2} cm)",
            d - 100.0
        );
    }
    println!("echo loss over 2000 pings");
    for angle in [0, 10, 15, 20, 25, 30, 40] {
        let mut ranger = UltrasonicModel::new(
            UltrasonicParams {
                misalignment_deg: angle as f64,
                ..UltrasonicParams::default()
            },
            stream_rng(1, 3),
        );
        ranger.set_true_distance(100.0);
        let lost = (0..2000).filter(|_| ranger.ping().is_none()).count();
        println!("  {angle:>2} deg: {:5.1}%", lost as f64 / 20.0);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
