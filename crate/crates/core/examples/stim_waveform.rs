//! Builds the standard cerci train and checks it nets to zero charge.
//! Pass a duration in ms to change it: `cargo run --example stim_waveform -- 1200`.

use cyborg_core::stim::{
    build_pulse_train, charge_residual_codes, quantize_voltage, write_dense_csv, Channel,
    ChannelSet, DacModel, StimulusCommand,
};

fn main() {
    let duration: u32 = std::env::args()
        .nth(1)
        .map_or(400, |a| a.parse().expect("duration in ms"));
    let dac = DacModel::default();
    let cmd = StimulusCommand::standard(ChannelSet::single(Channel::Cerci), duration);
    let train = build_pulse_train(&cmd, &dac).expect("valid command");

    println!(
        "LSB {:.4} mV, 2.5 V -> code {}",
        dac.lsb() * 1000.0,
        quantize_voltage(2.5, &dac).unwrap()
    );
    println!(
        "{} ms at {} V, {} ms phases: {} pairs over {} ms, charge residual {} code·ms",
        duration,
        cmd.amplitude_v,
        cmd.pulse_width_ms,
        train.pair_count(),
        train.span_ms(),
        charge_residual_codes(&train)
    );
    for p in train.phases.iter().take(4) {
        println!(
            "  t={:4} ms  width {} ms  code {}",
            p.start_ms, p.width_ms, p.code
        );
    }

    let samples = train.render_dense(&dac);
    let mut csv = Vec::new();
    write_dense_csv(&samples[..6.min(samples.len())], &mut csv).unwrap();
    print!("{}", String::from_utf8(csv).unwrap());
}
