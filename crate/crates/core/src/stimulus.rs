//! Cycle-stamped host stimulus for GPIO inputs and UART RX.
//!
//! One event per line; `#` starts a comment:
//!
//! ```text
//! # cycle  kind  arguments
//! 100      gpio  3 1            # drive input pin 3 high
//! 250      uart  0x41 66 0x43   # queue bytes
//! 300      uart  "hello"        # queue a string
//! ```

use crate::peripherals::GPIO_PINS;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StimulusEvent {
    Gpio { pin: u8, level: bool },
    Uart(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stimulus line {line}: {message}")]
pub struct StimulusError {
    pub line: usize,
    pub message: String,
}

/// Pending stimulus, ordered by cycle (file order within a cycle).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stimulus {
    events: VecDeque<(u64, StimulusEvent)>,
}

fn parse_int(tok: &str) -> Option<u64> {
    match tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16).ok(),
        None => tok.replace('_', "").parse().ok(),
    }
}

impl Stimulus {
    pub fn new(mut events: Vec<(u64, StimulusEvent)>) -> Self {
        events.sort_by_key(|e| e.0);
        Stimulus { events: events.into() }
    }

    pub fn parse(text: &str) -> Result<Self, StimulusError> {
        let mut events = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let err = |message: String| StimulusError { line: n + 1, message };
            let line = match raw.find('"') {
                // A quoted string may contain '#'.
                Some(q) => match raw[..q].find('#') {
                    Some(h) => &raw[..h],
                    None => raw,
                },
                None => raw.split('#').next().unwrap_or(""),
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, char::is_whitespace);
            let cycle = parts
                .next()
                .and_then(parse_int)
                .ok_or_else(|| err("expected a cycle number".into()))?;
            let kind = parts.next().ok_or_else(|| err("missing event kind".into()))?;
            let rest = parts.next().unwrap_or("").trim();
            let event = match kind {
                "gpio" => {
                    let args: Vec<u64> = rest
                        .split_whitespace()
                        .map(|t| parse_int(t).ok_or_else(|| err(format!("bad number {t:?}"))))
                        .collect::<Result<_, _>>()?;
                    match args[..] {
                        [pin, level] if pin < GPIO_PINS as u64 && level <= 1 => StimulusEvent::Gpio {
                            pin: pin as u8,
                            level: level == 1,
                        },
                        _ => return Err(err("gpio expects PIN (0..27) and LEVEL (0 or 1)".into())),
                    }
                }
                "uart" => {
                    let bytes = if let Some(s) = rest.strip_prefix('"') {
                        let s = s.strip_suffix('"').ok_or_else(|| err("unterminated string".into()))?;
                        s.as_bytes().to_vec()
                    } else {
                        rest.split_whitespace()
                            .map(|t| match parse_int(t) {
                                Some(b) if b <= 0xFF => Ok(b as u8),
                                _ => Err(err(format!("bad byte {t:?}"))),
                            })
                            .collect::<Result<_, _>>()?
                    };
                    if bytes.is_empty() {
                        return Err(err("uart expects at least one byte".into()));
                    }
                    StimulusEvent::Uart(bytes)
                }
                other => return Err(err(format!("unknown event kind {other:?}"))),
            };
            events.push((cycle, event));
        }
        Ok(Stimulus::new(events))
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn pending(&self) -> impl Iterator<Item = &(u64, StimulusEvent)> {
        self.events.iter()
    }

    /// Removes and returns the events stamped at or before `cycle`.
    pub fn take_due(&mut self, cycle: u64) -> Vec<StimulusEvent> {
        let mut due = Vec::new();
        while self.events.front().is_some_and(|e| e.0 <= cycle) {
            due.push(self.events.pop_front().expect("checked").1);
        }
        due
    }
}
