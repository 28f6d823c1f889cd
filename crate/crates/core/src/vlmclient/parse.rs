use crate::backend::BackendError;
use crate::world::Action;

const PHRASES: [(&str, Action); 4] = [
    ("move forward", Action::MoveForward),
    ("turn left", Action::TurnLeft),
    ("turn right", Action::TurnRight),
    ("stop", Action::Stop),
];

/// Lowercases and folds `-`, `_` and runs of whitespace into single spaces.
fn fold(reply: &str) -> String {
    let mut out = String::with_capacity(reply.len());
    let mut gap = false;
    for ch in reply.chars() {
        if ch.is_whitespace() || ch == '-' || ch == '_' {
            gap = true;
            continue;
        }
        if gap && !out.is_empty() {
            out.push(' ');
        }
        gap = false;
        out.extend(ch.to_lowercase());
    }
    out
}

fn is_word(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric())
}

/// The action whose phrase occurs first in `reply`, matched on word
/// boundaries and ignoring case.
pub fn parse_action(reply: &str) -> Result<Action, BackendError> {
    let text = fold(reply);
    let mut best: Option<(usize, Action)> = None;
    for (phrase, action) in PHRASES {
        let mut from = 0;
        while let Some(i) = text[from..].find(phrase).map(|i| i + from) {
            let before = text[..i].chars().next_back();
            let after = text[i + phrase.len()..].chars().next();
            if !is_word(before) && !is_word(after) {
                if best.is_none_or(|(j, _)| i < j) {
                    best = Some((i, action));
                }
                break;
            }
            from = i + phrase.len();
        }
    }
    best.map(|(_, a)| a).ok_or_else(|| BackendError::UnparseableAction(reply.to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_replies() {
        assert_eq!(parse_action("move forward").unwrap(), Action::MoveForward);
        assert_eq!(parse_action("I will turn left to avoid the wall.").unwrap(), Action::TurnLeft);
        assert!(matches!(parse_action("proceed north"), Err(BackendError::UnparseableAction(_))));
    }

    #[test]
    fn word_boundaries_and_folding() {
        assert_eq!(parse_action("TURN-RIGHT").unwrap(), Action::TurnRight);
        assert_eq!(parse_action("move_forward").unwrap(), Action::MoveForward);
        assert_eq!(parse_action("move\n\tforward").unwrap(), Action::MoveForward);
        assert!(parse_action("nonstop unstoppable").is_err());
        assert_eq!(parse_action("don't turn leftward, stop").unwrap(), Action::Stop);
    }

    proptest! {
        #[test]
        fn parser_is_total(s in "\\PC{0,80}") {
            let _ = parse_action(&s);
        }
    }
}
