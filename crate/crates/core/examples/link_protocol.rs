//! Frames a command, shows that a flipped bit is caught, then drives a
//! lossy simulated radio where the base station has to retransmit.

use cyborg_core::link::{
    crc16, decode_frame, encode_frame, Backpack, BaseStation, Body, CommandPayload, LinkModel,
    Message, RetryPolicy, SimLink, StationEvent,
};
use cyborg_core::stim::{Channel, ChannelSet, StimulusCommand};

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|b| format!("{b:02X}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() {
    println!("crc16(\"123456789\") = {:#06X}", crc16(b"123456789"));

    let cmd = StimulusCommand::standard(ChannelSet::single(Channel::LeftAntenna), 400);
    let msg = Message::new(
        7,
        Body::Command(CommandPayload::from_stimulus(&cmd).unwrap()),
    );
    let frame = encode_frame(&msg).unwrap();
    println!("command frame: {}", hex(&frame));
    assert_eq!(decode_frame(&frame).unwrap(), msg);

    let mut bad = frame.clone();
    bad[6] ^= 0x10;
    println!("one bit flipped: {}", decode_frame(&bad).unwrap_err());

    let mut link = SimLink::seeded(LinkModel::with_drop(0.3), 42);
    let mut base = BaseStation::new(RetryPolicy::default());
    let mut pack = Backpack::new();
    let mut applied = 0;
    for i in 0..20 {
        let mut t = f64::from(i) * 500.0;
        base.send_command(&cmd, &mut link, t).unwrap();
        loop {
            pack.poll(&mut link, t, |_| {
                applied += 1;
                Ok(())
            });
            let events = base.poll(&mut link, t);
            if events
                .iter()
                .any(|e| matches!(e, StationEvent::Acked { .. } | StationEvent::Failed { .. }))
            {
                break;
            }
            t += 1.0;
        }
    }
    let s = base.stats();
    println!(
        "30% drop: {} commands, {} acked, {} failed, {} retransmissions, applied {} times",
        s.commands, s.acked, s.failed, s.retransmissions, applied
    );
}
