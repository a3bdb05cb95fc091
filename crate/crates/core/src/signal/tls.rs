use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::Event;
use quick_xml::Reader;

use super::{PhaseState, SignalError, SignalTimeline};

/// One `<phase>` element of a traffic-light program.
#[derive(Debug, Clone, PartialEq)]
pub struct TlsPhase {
    pub duration: f64,
    pub state: String,
}

fn head_char(state: PhaseState) -> char {
    match state {
        PhaseState::G => 'G',
        PhaseState::Y => 'y',
        PhaseState::R => 'r',
    }
}

/// Renders `timeline` as an `<additional>` document holding one static
/// `<tlLogic>`. Each interval becomes a `<phase>` whose state string has one
/// character per signal head; heads no phase drives stay red. Durations are
/// written in shortest round-trip form.
pub fn emit_tls_program(
    timeline: &SignalTimeline,
    movement_map: &BTreeMap<u8, Vec<usize>>,
    tls_id: &str,
    program_id: &str,
    offset: f64,
) -> Result<String, SignalError> {
    let mut owner: BTreeMap<usize, u8> = BTreeMap::new();
    for phase in 1..=8u8 {
        let heads = movement_map.get(&phase).filter(|h| !h.is_empty()).ok_or(SignalError::UnmappedPhase(phase))?;
        for &h in heads {
            if let Some(first) = owner.insert(h, phase) {
                if first != phase {
                    return Err(SignalError::SharedHead { head: h, first, second: phase });
                }
            }
        }
    }
    let n_heads = owner.keys().next_back().map_or(0, |&h| h + 1);
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<additional>\n");
    writeln!(
        out,
        "    <tlLogic id=\"{}\" type=\"static\" programID=\"{}\" offset=\"{offset}\">",
        escape(tls_id),
        escape(program_id)
    )
    .unwrap();
    for iv in &timeline.intervals {
        let state: String = (0..n_heads)
            .map(|h| owner.get(&h).map_or('r', |&p| head_char(iv.state(p))))
            .collect();
        writeln!(out, "        <phase duration=\"{}\" state=\"{state}\"/>", iv.duration).unwrap();
    }
    out.push_str("    </tlLogic>\n</additional>\n");
    Ok(out)
}

/// Reads back the `<phase>` elements of a traffic-light program.
pub fn parse_tls_program(xml: &str) -> Result<Vec<TlsPhase>, SignalError> {
    let mut reader = Reader::from_str(xml);
    let mut out = Vec::new();
    loop {
        match reader.read_event().map_err(|e| SignalError::Parse(e.to_string()))? {
            Event::Start(e) | Event::Empty(e) if e.name().as_ref() == b"phase" => {
                let mut duration = None;
                let mut state = None;
                for attr in e.attributes() {
                    let attr = attr.map_err(|e| SignalError::Parse(e.to_string()))?;
                    let value = attr.unescape_value().map_err(|e| SignalError::Parse(e.to_string()))?;
                    match attr.key.as_ref() {
                        b"duration" => {
                            duration = Some(value.parse::<f64>().map_err(|_| SignalError::Parse(format!("bad duration {value:?}")))?)
                        }
                        b"state" => state = Some(value.into_owned()),
                        _ => {}
                    }
                }
                match (duration, state) {
                    (Some(duration), Some(state)) => out.push(TlsPhase { duration, state }),
                    _ => return Err(SignalError::Parse("phase without duration or state".into())),
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}
