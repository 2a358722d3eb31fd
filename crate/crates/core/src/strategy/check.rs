//! Observable invariants of each strategy, checked over a finished dialog.
//! Random and baseline strategies have none at the single-dialog level.

use serde::Serialize;

use super::{StrategyConfig, StrategyKind};
use crate::textproc::{classify_mixed_np, Label, NpClass, Speaker, Utterance};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Position in the dialog.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    /// Bot turns the invariant applies to.
    pub eligible: usize,
    pub violations: Vec<Violation>,
}

impl CheckResult {
    pub fn merge(&mut self, other: CheckResult) {
        self.eligible += other.eligible;
        self.violations.extend(other.violations);
    }
}

/// NP classes a condition must never emit on bot turns.
fn forbidden_np(kind: StrategyKind) -> &'static [NpClass] {
    match kind {
        StrategyKind::InsMascIncongruent => &[NpClass::IncongruentFem],
        StrategyKind::InsFemIncongruent => &[NpClass::IncongruentMasc],
        StrategyKind::InsCongruent => &[NpClass::IncongruentMasc, NpClass::IncongruentFem],
        _ => &[],
    }
}

/// Checks `dialog` (one whole session, in order) against `cfg`.
pub fn check_dialog(cfg: &StrategyConfig, dialog: &[Utterance]) -> CheckResult {
    let mut out = CheckResult::default();
    let mut last_human: Option<Label> = None;
    let mut run: Option<(Label, usize)> = None;
    for (i, u) in dialog.iter().enumerate() {
        if u.speaker == Speaker::Human {
            last_human = Some(u.label);
            continue;
        }
        let mut fail = |reason: String| out.violations.push(Violation { index: i, reason });
        match cfg.kind {
            StrategyKind::AltAlignment | StrategyKind::AltAdversarial => {
                if let Some(human) = last_human.and_then(Label::language) {
                    out.eligible += 1;
                    let want = if cfg.kind == StrategyKind::AltAlignment { human } else { human.other() };
                    if u.label != Label::from(want) {
                        fail(format!("bot {} after human {}", u.label.as_str(), human.code()));
                    }
                }
            }
            StrategyKind::AltShortContext => {
                if u.label.language().is_some() {
                    out.eligible += 1;
                    let len = match run {
                        Some((l, n)) if l == u.label => n + 1,
                        _ => 1,
                    };
                    run = Some((u.label, len));
                    if len > cfg.k as usize {
                        fail(format!("run of {len} {} bot turns exceeds k={}", u.label.as_str(), cfg.k));
                    }
                }
            }
            kind => {
                let forbidden = forbidden_np(kind);
                if forbidden.is_empty() {
                    continue;
                }
                out.eligible += 1;
                for span in &u.noun_phrases {
                    if let Ok(class) = classify_mixed_np(span) {
                        if forbidden.contains(&class) {
                            fail(format!("{} {} is {}", span.determiner, span.noun, class.as_str()));
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::TextAnalyzer;

    fn dialog(a: &TextAnalyzer, turns: &[(Speaker, &str)]) -> Vec<Utterance> {
        turns.iter().map(|(s, t)| a.utterance(*s, t, 0)).collect()
    }

    #[test]
    fn alignment_and_adversarial() {
        let a = TextAnalyzer::bundled();
        let d = dialog(
            &a,
            &[
                (Speaker::Bot, "Hola, ¿empezamos?"),
                (Speaker::Human, "Go down two squares."),
                (Speaker::Bot, "I go down two squares."),
                (Speaker::Human, "ok"),
                (Speaker::Bot, "Voy abajo dos casillas."),
                (Speaker::Human, "Ve abajo dos casillas."),
                (Speaker::Bot, "I go down two squares."),
            ],
        );
        let al = check_dialog(&StrategyConfig::new(StrategyKind::AltAlignment), &d);
        assert_eq!(al.eligible, 2);
        assert_eq!(al.violations.iter().map(|v| v.index).collect::<Vec<_>>(), [6]);
        let ad = check_dialog(&StrategyConfig::new(StrategyKind::AltAdversarial), &d);
        assert_eq!(ad.eligible, 2);
        assert_eq!(ad.violations.iter().map(|v| v.index).collect::<Vec<_>>(), [2]);
    }

    #[test]
    fn short_context_runs_skip_mixed() {
        let a = TextAnalyzer::bundled();
        let es = (Speaker::Bot, "Voy abajo dos casillas.");
        let mixed = (Speaker::Bot, "Voy down dos casillas, ok?");
        let d = dialog(&a, &[es, es, mixed, (Speaker::Human, "ok"), es, es]);
        let r = check_dialog(&StrategyConfig::new(StrategyKind::AltShortContext).with_k(3), &d);
        assert_eq!(r.eligible, 4);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].index, 5);
        assert!(check_dialog(&StrategyConfig::new(StrategyKind::AltShortContext).with_k(4), &d).violations.is_empty());
    }

    #[test]
    fn insertional_np_classes() {
        let a = TextAnalyzer::bundled();
        let d = dialog(&a, &[(Speaker::Bot, "Gira en la fork."), (Speaker::Human, "dobla en el spoon")]);
        let masc = check_dialog(&StrategyConfig::new(StrategyKind::InsMascIncongruent), &d);
        assert_eq!(masc.eligible, 1);
        assert!(masc.violations.is_empty());
        let fem = check_dialog(&StrategyConfig::new(StrategyKind::InsFemIncongruent), &d);
        assert_eq!(fem.violations.len(), 1);
        assert_eq!(check_dialog(&StrategyConfig::new(StrategyKind::InsCongruent), &d).violations.len(), 1);
        assert_eq!(check_dialog(&StrategyConfig::new(StrategyKind::AltRandom), &d), CheckResult::default());
    }
}
