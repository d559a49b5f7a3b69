//! Operator instruction flow: classify raw input against a lookup table and
//! the keypad grammar, and carry instructions in frame payloads.
//!
//! Keypad grammar (typeable on a phone keypad):
//!
//! ```text
//! *<dest>*<endpoint>*<action>#            action: 1=ON 0=OFF 2=TOGGLE 9=QUERY
//! *<dest>*<endpoint>*3*<level>#           SET_LEVEL
//! ```
//!
//! Numbers are 1–3 decimal digits with value ≤ 255. Anything else that does
//! not hit a table entry is sent as text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mac::MAX_PAYLOAD_OCTETS;

pub const MAX_TEXT_OCTETS: usize = 112;

const KIND_TEXT: u8 = 0x01;
const KIND_CONTROL: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("EmptyInput: input must not be empty")]
    EmptyInput,
    #[error("TextTooLong: {0} octets exceeds {MAX_TEXT_OCTETS}")]
    TextTooLong(usize),
    #[error("SizeError: payload of {0} octets exceeds {MAX_PAYLOAD_OCTETS}")]
    SizeError(usize),
    #[error("UnknownKind: payload kind {0:#04x}")]
    UnknownKind(u8),
    #[error("MalformedControl: {0}")]
    MalformedControl(String),
    #[error("InvalidUtf8Text: text payload is not UTF-8")]
    InvalidUtf8Text,
    #[error("DuplicatePattern: {0:?} appears more than once in the lookup table")]
    DuplicatePattern(String),
}

impl CommandError {
    pub fn name(&self) -> &'static str {
        match self {
            CommandError::EmptyInput => "EmptyInput",
            CommandError::TextTooLong(_) => "TextTooLong",
            CommandError::SizeError(_) => "SizeError",
            CommandError::UnknownKind(_) => "UnknownKind",
            CommandError::MalformedControl(_) => "MalformedControl",
            CommandError::InvalidUtf8Text => "InvalidUtf8Text",
            CommandError::DuplicatePattern(_) => "DuplicatePattern",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    On,
    Off,
    Toggle,
    SetLevel(u8),
    Query,
}

impl Action {
    pub fn code(self) -> u8 {
        match self {
            Action::Off => 0,
            Action::On => 1,
            Action::Toggle => 2,
            Action::SetLevel(_) => 3,
            Action::Query => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::On => "ON",
            Action::Off => "OFF",
            Action::Toggle => "TOGGLE",
            Action::SetLevel(_) => "SET_LEVEL",
            Action::Query => "QUERY",
        }
    }

    fn level(self) -> u8 {
        match self {
            Action::SetLevel(l) => l,
            _ => 0,
        }
    }

    fn from_parts(name: &str, level: Option<u8>) -> Option<Action> {
        Some(match name {
            "ON" => Action::On,
            "OFF" => Action::Off,
            "TOGGLE" => Action::Toggle,
            "QUERY" => Action::Query,
            "SET_LEVEL" => Action::SetLevel(level?),
            _ => return None,
        })
    }

    /// Level an endpoint holds after this action, given its current level.
    /// `None` for actions that do not change state.
    pub fn apply(self, current: u8) -> Option<u8> {
        match self {
            Action::On => Some(255),
            Action::Off => Some(0),
            Action::Toggle => Some(if current == 0 { 255 } else { 0 }),
            Action::SetLevel(l) => Some(l),
            Action::Query => None,
        }
    }
}

/// Body of an instruction, i.e. everything the payload carries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum InstructionBody {
    Text(String),
    Control { endpoint: u8, action: Action },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "InstructionRepr", try_from = "InstructionRepr")]
pub struct Instruction {
    pub dest: u16,
    pub body: InstructionBody,
}

impl Instruction {
    pub fn text(dest: u16, text: impl Into<String>) -> Self {
        Self {
            dest,
            body: InstructionBody::Text(text.into()),
        }
    }

    pub fn control(dest: u16, endpoint: u8, action: Action) -> Self {
        Self {
            dest,
            body: InstructionBody::Control { endpoint, action },
        }
    }

    pub fn is_text(&self) -> bool {
        matches!(self.body, InstructionBody::Text(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum InstructionKind {
    Text,
    Control,
}

/// Flat JSON shape: `{"kind":"CONTROL","dest":1,"endpoint":1,"action":"ON"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstructionRepr {
    kind: InstructionKind,
    dest: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    endpoint: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    level: Option<u8>,
}

impl From<Instruction> for InstructionRepr {
    fn from(i: Instruction) -> Self {
        match i.body {
            InstructionBody::Text(text) => InstructionRepr {
                kind: InstructionKind::Text,
                dest: i.dest,
                text: Some(text),
                endpoint: None,
                action: None,
                level: None,
            },
            InstructionBody::Control { endpoint, action } => InstructionRepr {
                kind: InstructionKind::Control,
                dest: i.dest,
                text: None,
                endpoint: Some(endpoint),
                action: Some(action.name().to_string()),
                level: match action {
                    Action::SetLevel(l) => Some(l),
                    _ => None,
                },
            },
        }
    }
}

impl TryFrom<InstructionRepr> for Instruction {
    type Error = String;

    fn try_from(r: InstructionRepr) -> Result<Self, Self::Error> {
        match r.kind {
            InstructionKind::Text => Ok(Instruction::text(
                r.dest,
                r.text.ok_or("TEXT instruction needs `text`")?,
            )),
            InstructionKind::Control => {
                let endpoint = r.endpoint.ok_or("CONTROL instruction needs `endpoint`")?;
                let name = r.action.ok_or("CONTROL instruction needs `action`")?;
                let action = Action::from_parts(&name, r.level)
                    .ok_or_else(|| format!("bad action {name:?} (SET_LEVEL needs `level`)"))?;
                Ok(Instruction::control(r.dest, endpoint, action))
            }
        }
    }
}

/// One literal lookup-table entry, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub pattern: String,
    pub dest: u16,
    pub endpoint: u8,
    pub action: String,
    #[serde(default)]
    pub level: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CompiledEntry {
    key: String,
    dest: u16,
    endpoint: u8,
    action: Action,
}

/// Ordered lookup table; first match wins. Literal patterns match the trimmed
/// input ignoring ASCII case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupTable {
    entries: Vec<CompiledEntry>,
    text_dest: u16,
}

impl LookupTable {
    pub fn new(entries: &[TableEntry], text_dest: u16) -> Result<Self, CommandError> {
        let mut compiled: Vec<CompiledEntry> = Vec::with_capacity(entries.len());
        for e in entries {
            let key = e.pattern.trim().to_ascii_lowercase();
            if key.is_empty() || compiled.iter().any(|c| c.key == key) {
                return Err(CommandError::DuplicatePattern(e.pattern.clone()));
            }
            let action = Action::from_parts(&e.action.to_ascii_uppercase(), e.level).ok_or_else(|| {
                CommandError::MalformedControl(format!(
                    "table entry {:?}: bad action {:?}",
                    e.pattern, e.action
                ))
            })?;
            compiled.push(CompiledEntry {
                key,
                dest: e.dest,
                endpoint: e.endpoint,
                action,
            });
        }
        Ok(Self {
            entries: compiled,
            text_dest,
        })
    }

    /// The shipped table: a light on endpoint 1 and a fan on endpoint 2 of
    /// actuator 1, plus the keypad grammar.
    pub fn default_entries() -> Vec<TableEntry> {
        let e = |pattern: &str, endpoint, action: &str, level| TableEntry {
            pattern: pattern.into(),
            dest: 1,
            endpoint,
            action: action.into(),
            level,
        };
        vec![
            e("light on", 1, "ON", None),
            e("light off", 1, "OFF", None),
            e("toggle light", 1, "TOGGLE", None),
            e("dim light", 1, "SET_LEVEL", Some(64)),
            e("light status", 1, "QUERY", None),
            e("fan on", 2, "ON", None),
            e("fan off", 2, "OFF", None),
            e("toggle fan", 2, "TOGGLE", None),
        ]
    }

    pub fn with_defaults(text_dest: u16) -> Self {
        Self::new(&Self::default_entries(), text_dest).expect("default table is valid")
    }

    pub fn text_dest(&self) -> u16 {
        self.text_dest
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, input: &str) -> Option<Instruction> {
        let key = input.trim().to_ascii_lowercase();
        self.entries
            .iter()
            .find(|e| e.key == key)
            .map(|e| Instruction::control(e.dest, e.endpoint, e.action))
    }
}

fn parse_number(s: &str) -> Option<u8> {
    if s.is_empty() || s.len() > 3 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse::<u16>().ok().and_then(|v| u8::try_from(v).ok())
}

/// Parses the keypad control grammar; `None` if `input` does not match it.
pub fn parse_keypad(input: &str) -> Option<Instruction> {
    let body = input.trim().strip_prefix('*')?.strip_suffix('#')?;
    let fields: Vec<&str> = body.split('*').collect();
    let (dest, endpoint, action) = match fields.as_slice() {
        [d, e, a] => {
            let action = match *a {
                "0" => Action::Off,
                "1" => Action::On,
                "2" => Action::Toggle,
                "9" => Action::Query,
                _ => return None,
            };
            (d, e, action)
        }
        [d, e, "3", level] => (d, e, Action::SetLevel(parse_number(level)?)),
        _ => return None,
    };
    Some(Instruction::control(
        parse_number(dest)? as u16,
        parse_number(endpoint)?,
        action,
    ))
}

pub fn classify_and_parse(input: &str, table: &LookupTable) -> Result<Instruction, CommandError> {
    if input.is_empty() {
        return Err(CommandError::EmptyInput);
    }
    if let Some(i) = table.lookup(input).or_else(|| parse_keypad(input)) {
        return Ok(i);
    }
    if input.len() > MAX_TEXT_OCTETS {
        return Err(CommandError::TextTooLong(input.len()));
    }
    Ok(Instruction::text(table.text_dest(), input))
}

pub fn encode_payload(body: &InstructionBody) -> Result<Vec<u8>, CommandError> {
    match body {
        InstructionBody::Text(text) => {
            if text.len() > MAX_TEXT_OCTETS {
                return Err(CommandError::TextTooLong(text.len()));
            }
            let mut out = Vec::with_capacity(1 + text.len());
            out.push(KIND_TEXT);
            out.extend_from_slice(text.as_bytes());
            Ok(out)
        }
        InstructionBody::Control { endpoint, action } => {
            Ok(vec![KIND_CONTROL, *endpoint, action.code(), action.level()])
        }
    }
}

pub fn decode_payload(p: &[u8]) -> Result<InstructionBody, CommandError> {
    let Some((&kind, rest)) = p.split_first() else {
        return Err(CommandError::UnknownKind(0));
    };
    if p.len() > MAX_PAYLOAD_OCTETS {
        return Err(CommandError::SizeError(p.len()));
    }
    match kind {
        KIND_TEXT => std::str::from_utf8(rest)
            .map(|s| InstructionBody::Text(s.to_owned()))
            .map_err(|_| CommandError::InvalidUtf8Text),
        KIND_CONTROL => {
            let [endpoint, code, level] = rest else {
                return Err(CommandError::MalformedControl(format!(
                    "control payload is {} octets, expected 4",
                    p.len()
                )));
            };
            let action = match (*code, *level) {
                (0, 0) => Action::Off,
                (1, 0) => Action::On,
                (2, 0) => Action::Toggle,
                (3, l) => Action::SetLevel(l),
                (9, 0) => Action::Query,
                (c, l) => {
                    return Err(CommandError::MalformedControl(format!(
                        "action code {c} with level {l}"
                    )))
                }
            };
            Ok(InstructionBody::Control {
                endpoint: *endpoint,
                action,
            })
        }
        other => Err(CommandError::UnknownKind(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use regex::Regex;

    const DISPLAY: u16 = 9;

    fn table() -> LookupTable {
        LookupTable::with_defaults(DISPLAY)
    }

    /// Independent reading of the keypad grammar via a regex.
    fn reference_keypad(input: &str) -> Option<(u16, u8, u8, Option<u8>)> {
        let re = Regex::new(r"^\*(\d{1,3})\*(\d{1,3})\*(?:([0129])|3\*(\d{1,3}))#$").unwrap();
        let c = re.captures(input.trim())?;
        let n = |i: usize| c.get(i).map(|m| m.as_str().parse::<u32>().unwrap());
        let (d, e) = (n(1)?, n(2)?);
        if d > 255 || e > 255 {
            return None;
        }
        match (n(3), n(4)) {
            (Some(a), None) => Some((d as u16, e as u8, a as u8, None)),
            (None, Some(l)) if l <= 255 => Some((d as u16, e as u8, 3, Some(l as u8))),
            _ => None,
        }
    }

    #[test]
    fn plain_text_goes_to_display() {
        assert_eq!(
            classify_and_parse("hello world", &table()),
            Ok(Instruction::text(DISPLAY, "hello world"))
        );
    }

    #[test]
    fn keypad_control() {
        assert_eq!(
            classify_and_parse("*2*1*1#", &table()),
            Ok(Instruction::control(2, 1, Action::On))
        );
        assert_eq!(reference_keypad("*2*1*1#"), Some((2, 1, 1, None)));
        assert_eq!(
            classify_and_parse("*12*3*3*200#", &table()),
            Ok(Instruction::control(12, 3, Action::SetLevel(200)))
        );
        assert_eq!(
            classify_and_parse("*1*1*9#", &table()),
            Ok(Instruction::control(1, 1, Action::Query))
        );
    }

    #[test]
    fn empty_and_oversized() {
        assert_eq!(classify_and_parse("", &table()), Err(CommandError::EmptyInput));
        let long = "x".repeat(113);
        assert_eq!(
            classify_and_parse(&long, &table()),
            Err(CommandError::TextTooLong(113))
        );
        assert!(classify_and_parse(&"x".repeat(112), &table()).is_ok());
        // Multi-byte characters count in encoded octets.
        let wide = "é".repeat(57);
        assert_eq!(
            classify_and_parse(&wide, &table()),
            Err(CommandError::TextTooLong(114))
        );
    }

    #[test]
    fn near_miss_keypad_falls_through_to_text() {
        for s in [
            "*9",
            "*1*1*5#",
            "*256*1*1#",
            "*1*1*3#",
            "*1*1*1",
            "**1*1#",
            "*1234*1*1#",
        ] {
            assert!(classify_and_parse(s, &table()).unwrap().is_text(), "{s}");
        }
    }

    #[test]
    fn table_lookup_is_case_insensitive_and_ordered() {
        assert_eq!(
            classify_and_parse("  Light ON ", &table()),
            Ok(Instruction::control(1, 1, Action::On))
        );
        let entries = vec![
            TableEntry {
                pattern: "go".into(),
                dest: 4,
                endpoint: 1,
                action: "on".into(),
                level: None,
            },
            TableEntry {
                pattern: "GO".into(),
                dest: 5,
                endpoint: 1,
                action: "OFF".into(),
                level: None,
            },
        ];
        assert!(matches!(
            LookupTable::new(&entries, 1),
            Err(CommandError::DuplicatePattern(_))
        ));
    }

    #[test]
    fn table_entry_can_shadow_keypad() {
        let entries = vec![TableEntry {
            pattern: "*1*1*1#".into(),
            dest: 7,
            endpoint: 3,
            action: "TOGGLE".into(),
            level: None,
        }];
        let t = LookupTable::new(&entries, 1).unwrap();
        assert_eq!(
            classify_and_parse("*1*1*1#", &t),
            Ok(Instruction::control(7, 3, Action::Toggle))
        );
    }

    #[test]
    fn payload_layouts() {
        assert_eq!(
            encode_payload(&InstructionBody::Text("Hi".into())).unwrap(),
            vec![0x01, 0x48, 0x69]
        );
        assert_eq!(
            encode_payload(&InstructionBody::Control {
                endpoint: 1,
                action: Action::On
            })
            .unwrap(),
            vec![0x02, 0x01, 0x01, 0x00]
        );
    }

    #[test]
    fn payload_decode_errors() {
        assert_eq!(decode_payload(&[0x03, 1, 2]), Err(CommandError::UnknownKind(3)));
        assert!(matches!(
            decode_payload(&[0x02, 0x01]),
            Err(CommandError::MalformedControl(_))
        ));
        assert_eq!(decode_payload(&[0x01]), Ok(InstructionBody::Text(String::new())));
        assert_eq!(decode_payload(&[0x01, 0xFF]), Err(CommandError::InvalidUtf8Text));
        assert!(matches!(
            decode_payload(&[0x02, 1, 1, 5]),
            Err(CommandError::MalformedControl(_))
        ));
        assert_eq!(decode_payload(&[]), Err(CommandError::UnknownKind(0)));
    }

    #[test]
    fn json_echo_shape() {
        let v = serde_json::to_value(Instruction::control(1, 1, Action::On)).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"kind":"CONTROL","dest":1,"endpoint":1,"action":"ON"})
        );
        let v = serde_json::to_value(Instruction::control(1, 2, Action::SetLevel(9))).unwrap();
        assert_eq!(v["level"], 9);
        let back: Instruction = serde_json::from_value(v).unwrap();
        assert_eq!(back, Instruction::control(1, 2, Action::SetLevel(9)));
    }

    #[test]
    fn toggle_is_an_involution_on_on_off() {
        for start in [0u8, 255] {
            let once = Action::Toggle.apply(start).unwrap();
            assert_eq!(Action::Toggle.apply(once), Some(start));
        }
        assert_eq!(Action::On.apply(Action::On.apply(3).unwrap()), Some(255));
    }

    fn action_strategy() -> impl Strategy<Value = Action> {
        prop_oneof![
            Just(Action::On),
            Just(Action::Off),
            Just(Action::Toggle),
            Just(Action::Query),
            any::<u8>().prop_map(Action::SetLevel),
        ]
    }

    fn body_strategy() -> impl Strategy<Value = InstructionBody> {
        prop_oneof![
            "\\PC{0,40}"
                .prop_filter("fits", |s: &String| s.len() <= MAX_TEXT_OCTETS)
                .prop_map(InstructionBody::Text),
            (any::<u8>(), action_strategy())
                .prop_map(|(endpoint, action)| InstructionBody::Control { endpoint, action }),
        ]
    }

    proptest! {
        #[test]
        fn payload_round_trip(b in body_strategy()) {
            let p = encode_payload(&b).unwrap();
            prop_assert!(p.len() <= MAX_PAYLOAD_OCTETS);
            prop_assert_eq!(decode_payload(&p).unwrap(), b);
        }

        #[test]
        fn classification_is_total(s in "\\PC{1,60}") {
            prop_assume!(s.len() <= MAX_TEXT_OCTETS);
            let i = classify_and_parse(&s, &table()).unwrap();
            // Same input, same answer.
            prop_assert_eq!(classify_and_parse(&s, &table()).unwrap(), i);
        }

        #[test]
        fn keypad_never_text(d in 0u16..=255, e in 0u8..=255, a in prop::sample::select(vec![0u8, 1, 2, 9]), lvl in proptest::option::of(any::<u8>())) {
            let s = match lvl {
                Some(l) => format!("*{d}*{e}*3*{l}#"),
                None => format!("*{d}*{e}*{a}#"),
            };
            let i = classify_and_parse(&s, &LookupTable::new(&[], 9).unwrap()).unwrap();
            prop_assert!(!i.is_text());
            let (rd, re, ra, rl) = reference_keypad(&s).unwrap();
            let InstructionBody::Control { endpoint, action } = i.body else { unreachable!() };
            prop_assert_eq!((i.dest, endpoint, action.code()), (rd, re, ra));
            prop_assert_eq!(rl.unwrap_or(0), action.level());
        }

        #[test]
        fn keypad_parser_agrees_with_reference(s in "[*#0-9]{1,14}") {
            let ours = parse_keypad(&s).map(|i| match i.body {
                InstructionBody::Control { endpoint, action } => (i.dest, endpoint, action.code(), match action { Action::SetLevel(l) => Some(l), _ => None }),
                _ => unreachable!(),
            });
            prop_assert_eq!(ours, reference_keypad(&s));
        }
    }
}
