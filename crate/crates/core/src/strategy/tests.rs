use super::*;
use crate::textproc::Speaker;

struct Fixture {
    analyzer: TextAnalyzer,
    translator: PhraseTableTranslator,
}

impl Fixture {
    fn new() -> Self {
        let analyzer = TextAnalyzer::bundled();
        let translator = PhraseTableTranslator::bundled(analyzer.lexicon_arc());
        Fixture { analyzer, translator }
    }

    fn ctx(&self) -> StrategyContext<'_> {
        StrategyContext { analyzer: &self.analyzer, translator: &self.translator }
    }

    fn state(&self, turns: &[(Speaker, &str)]) -> DialogState {
        let mut state = DialogState::new();
        for (i, (speaker, text)) in turns.iter().enumerate() {
            state.push(self.analyzer.utterance(*speaker, text, i as u64));
        }
        state
    }
}

struct Failing;

impl Translator for Failing {
    fn translate(&self, _: &str, _: Language) -> Result<String, TranslateError> {
        Err(TranslateError::Request("offline".into()))
    }
}

const ES: &str = "Ve abajo dos casillas hasta el tenedor.";
const EN: &str = "Go down two squares to the fork.";

#[test]
fn baselines_are_identity() {
    let f = Fixture::new();
    let mut rng = session_rng("s", 1);
    let state = f.state(&[(Speaker::Human, "hello there")]);
    for (kind, text) in
        [(StrategyKind::AltBaseline, "Turn left"), (StrategyKind::InsBaseline, "Gira a la izquierda en el tenedor")]
    {
        let out = apply_strategy(&StrategyConfig::new(kind), &state, text, &f.ctx(), &mut rng);
        assert_eq!(out.text, text);
        assert_eq!(out.action, Action::Unchanged);
    }
}

#[test]
fn alignment_rule_table() {
    let f = Fixture::new();
    let human_es = f.state(&[(Speaker::Human, "Baja dos casillas")]);
    let out = alt_alignment(&human_es, EN, &f.ctx());
    assert_eq!(out.text, "Baja dos casillas hasta el tenedor.");
    assert_eq!(f.analyzer.label(&out.text), Label::Spanish);
    assert_eq!(alt_alignment(&human_es, ES, &f.ctx()).text, ES);

    let human_mixed = f.state(&[(Speaker::Human, "Ve down dos casillas")]);
    assert_eq!(human_mixed.last_human_label(), Some(Label::Mixed));
    assert_eq!(alt_alignment(&human_mixed, EN, &f.ctx()).text, EN);
    assert_eq!(alt_alignment(&human_mixed, ES, &f.ctx()).text, ES);

    let human_none = f.state(&[(Speaker::Human, "ok")]);
    assert_eq!(alt_alignment(&human_none, EN, &f.ctx()).text, EN);
    assert_eq!(alt_alignment(&DialogState::new(), EN, &f.ctx()).text, EN);
}

#[test]
fn alignment_uses_most_recent_human_turn() {
    let f = Fixture::new();
    let state =
        f.state(&[(Speaker::Human, "Baja dos casillas"), (Speaker::Bot, ES), (Speaker::Human, "Go down two squares")]);
    let out = alt_alignment(&state, ES, &f.ctx());
    assert_eq!(out.text, EN);
}

#[test]
fn adversarial_rule_table() {
    let f = Fixture::new();
    let human_en = f.state(&[(Speaker::Human, "Go down two squares")]);
    let out = alt_adversarial(&human_en, "Now go down two squares.", &f.ctx());
    assert_eq!(out.action, Action::Translated { to: Language::Spanish });
    assert_eq!(f.analyzer.label(&out.text), Label::Spanish);
    assert_eq!(alt_adversarial(&human_en, ES, &f.ctx()).text, ES);
    assert_eq!(alt_adversarial(&DialogState::new(), EN, &f.ctx()).text, EN);
    let human_mixed = f.state(&[(Speaker::Human, "Ve down dos casillas")]);
    assert_eq!(alt_adversarial(&human_mixed, EN, &f.ctx()).text, EN);
}

#[test]
fn random_keeps_mixed_and_switches_unilingual() {
    let f = Fixture::new();
    let mut rng = session_rng("s", 9);
    let mixed = "Ve down dos casillas.";
    for _ in 0..50 {
        assert_eq!(alt_random(mixed, 1.0, &f.ctx(), &mut rng).text, mixed);
    }
    assert_eq!(alt_random(EN, 1.0, &f.ctx(), &mut rng).text, "Baja dos casillas hasta el tenedor.");
    assert_eq!(alt_random(EN, 0.0, &f.ctx(), &mut rng).text, EN);
    assert_eq!(alt_random("ok", 1.0, &f.ctx(), &mut rng).text, "ok");
}

#[test]
fn short_context_window() {
    let f = Fixture::new();
    let b = |t| (Speaker::Bot, t);
    let three = f.state(&[b(ES), b(ES), b(ES)]);
    assert_eq!(three.bot_unilingual_run(), Some((Language::Spanish, 3)));
    let out = alt_short_context(&three, ES, 3, &f.ctx());
    assert_eq!(out.text, EN);
    let two = f.state(&[b(ES), b(ES)]);
    assert_eq!(alt_short_context(&two, ES, 3, &f.ctx()).text, ES);
    // mixed bot turns neither extend nor reset the run
    let skip = f.state(&[b(ES), b("Ve down dos casillas."), b(ES), b(ES)]);
    assert_eq!(skip.bot_unilingual_run(), Some((Language::Spanish, 3)));
    assert_eq!(alt_short_context(&skip, ES, 3, &f.ctx()).text, EN);
    // a candidate already in the other language is left alone
    assert_eq!(alt_short_context(&three, EN, 3, &f.ctx()).text, EN);
    let broken = f.state(&[b(ES), b(ES), b(EN), b(ES)]);
    assert_eq!(broken.bot_unilingual_run(), Some((Language::Spanish, 1)));
}

/// Every bot label pattern of length <= 5 over {es, en, mixed}: the run the
/// rule sees is the trailing same-language count with mixed entries removed.
#[test]
fn short_context_run_enumeration() {
    let f = Fixture::new();
    let texts = [ES, EN, "Ve down dos casillas."];
    for len in 0..=5u32 {
        for code in 0..3u32.pow(len) {
            let mut pattern = Vec::new();
            let mut c = code;
            for _ in 0..len {
                pattern.push((c % 3) as usize);
                c /= 3;
            }
            let turns: Vec<_> = pattern.iter().map(|&p| (Speaker::Bot, texts[p])).collect();
            let state = f.state(&turns);
            let unilingual: Vec<usize> = pattern.iter().copied().filter(|&p| p < 2).collect();
            let expected = unilingual.last().map(|&last| {
                let run = unilingual.iter().rev().take_while(|&&p| p == last).count();
                (if last == 0 { Language::Spanish } else { Language::English }, run)
            });
            assert_eq!(state.bot_unilingual_run(), expected, "{pattern:?}");
            let out = alt_short_context(&state, ES, 3, &f.ctx());
            let should_switch = matches!(expected, Some((Language::Spanish, r)) if r >= 3);
            assert_eq!(out.text != ES, should_switch, "{pattern:?}");
        }
    }
}

#[test]
fn translator_failure_degrades() {
    let f = Fixture::new();
    let ctx = StrategyContext { analyzer: &f.analyzer, translator: &Failing };
    let state = f.state(&[(Speaker::Human, "Go down two squares")]);
    let out = alt_adversarial(&state, EN, &ctx);
    assert_eq!(out.text, EN);
    assert!(out.degraded);
}

#[test]
fn insertional_worked_examples() {
    let a = Analyzer::new();
    let both = "Pasa el tenedor y la cuchara.";
    assert_eq!(a.run(StrategyKind::InsCongruent, "el tenedor"), "el fork");
    assert_eq!(a.run(StrategyKind::InsCongruent, "la cuchara"), "la spoon");
    assert_eq!(a.run(StrategyKind::InsFemIncongruent, "la cuchara"), "el spoon");
    assert_eq!(a.run(StrategyKind::InsFemIncongruent, "el tenedor"), "el tenedor");
    assert_eq!(a.run(StrategyKind::InsMascIncongruent, "el tenedor"), "la fork");
    assert_eq!(a.run(StrategyKind::InsMascIncongruent, "la cuchara"), "la cuchara");
    assert_eq!(a.run(StrategyKind::InsCongruent, both), "Pasa el fork y la spoon.");
    assert_eq!(a.run(StrategyKind::InsFemIncongruent, both), "Pasa el tenedor y el spoon.");
    assert_eq!(a.run(StrategyKind::InsMascIncongruent, both), "Pasa la fork y la cuchara.");
    assert_eq!(
        a.run(StrategyKind::InsMascIncongruent, "Gira a la derecha en el tenedor"),
        "Gira a la derecha en la fork"
    );
}

#[test]
fn insertional_edge_cases() {
    let a = Analyzer::new();
    assert_eq!(a.run(StrategyKind::InsMascIncongruent, "El tenedor está aquí"), "La fork está aquí");
    assert_eq!(a.run(StrategyKind::InsCongruent, "Ve hasta la cuchara grande"), "Ve hasta la cuchara grande");
    assert_eq!(a.run(StrategyKind::InsCongruent, "Ve hasta el dinosaurio"), "Ve hasta el dinosaurio");
    assert_eq!(a.run(StrategyKind::InsCongruent, "Mira los tenedores"), "Mira los forks");
    assert_eq!(a.run(StrategyKind::InsFemIncongruent, "Mira las cucharas"), "Mira los spoons");
    assert_eq!(a.run(StrategyKind::InsCongruent, "sin sustantivos"), "sin sustantivos");
    assert_eq!(a.run(StrategyKind::AltRandom, "el tenedor"), "el tenedor");
}

struct Analyzer(TextAnalyzer);

impl Analyzer {
    fn new() -> Self {
        Analyzer(TextAnalyzer::bundled())
    }

    fn run(&self, kind: StrategyKind, text: &str) -> String {
        ins_transform(kind, text, &self.0).0
    }
}

#[test]
fn match_case_rules() {
    assert_eq!(match_case("El", "la"), "La");
    assert_eq!(match_case("el", "la"), "la");
    assert_eq!(match_case("TENEDOR", "fork"), "FORK");
    assert_eq!(match_case("Árbol", "tree"), "Tree");
}

#[test]
fn config_validation_and_names() {
    assert!(StrategyConfig::new(StrategyKind::AltShortContext).with_k(0).validate().is_err());
    assert!(StrategyConfig::new(StrategyKind::AltRandom).with_switch_probability(1.5).validate().is_err());
    for kind in StrategyKind::ALL {
        assert_eq!(kind.name().parse::<StrategyKind>().unwrap(), kind);
    }
    assert!("alt_k5".parse::<StrategyKind>().is_err());
    let json = serde_json::to_string(&StrategyConfig::new(StrategyKind::InsFemIncongruent)).unwrap();
    assert!(json.contains("\"ins_fem_incongruent\""));
}

#[test]
fn session_rng_is_reproducible() {
    use rand::RngCore;
    let a: Vec<u64> = (0..4)
        .map({
            let mut r = session_rng("abc", 7);
            move |_| r.next_u64()
        })
        .collect();
    let b: Vec<u64> = (0..4)
        .map({
            let mut r = session_rng("abc", 7);
            move |_| r.next_u64()
        })
        .collect();
    let c = session_rng("abd", 7).next_u64();
    assert_eq!(a, b);
    assert_ne!(a[0], c);
}

mod properties {
    use super::*;
    use crate::textproc::{classify_mixed_np, NpClass};
    use proptest::prelude::*;

    fn sentence() -> impl Strategy<Value = String> {
        let lex = crate::lexicon::Lexicon::bundled();
        let nouns: Vec<(String, Gender)> = lex.nouns().map(|n| (n.spanish_lemma.clone(), n.spanish_gender)).collect();
        let fillers = ["ve", "hasta", "cerca", "mira", "y", "pasa", "luego", "gira"];
        let np = (0..nouns.len(), any::<bool>()).prop_map(move |(i, definite)| {
            let (noun, g) = &nouns[i];
            let det = match (g, definite) {
                (Gender::Masculine, true) => "el",
                (Gender::Masculine, false) => "un",
                (Gender::Feminine, true) => "la",
                (Gender::Feminine, false) => "una",
            };
            format!("{det} {noun}")
        });
        let piece = prop_oneof![np, (0..fillers.len()).prop_map(move |i| fillers[i].to_string())];
        proptest::collection::vec(piece, 1..8).prop_map(|v| v.join(" "))
    }

    fn classes(a: &TextAnalyzer, text: &str) -> Vec<NpClass> {
        a.simple_nps(&a.tokens(text)).iter().filter_map(|s| classify_mixed_np(s).ok()).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn masc_incongruent_never_yields_incongruent_fem(text in sentence()) {
            let a = TextAnalyzer::bundled();
            let (out, _) = ins_transform(StrategyKind::InsMascIncongruent, &text, &a);
            let out_classes = classes(&a, &out);
            prop_assert!(!out_classes.contains(&NpClass::IncongruentFem));
            let masc_known = a
                .simple_nps(&a.tokens(&text))
                .into_iter()
                .filter(|s| s.noun_lang == Language::Spanish && s.noun_gender == crate::lexicon::NounGender::Masculine)
                .filter(|s| {
                    let en = &a.lexicon().lookup_es(&s.noun).unwrap().english_lemma;
                    a.lexicon().lookup_en_gender(en) != Some(crate::lexicon::NounGender::Ambiguous)
                })
                .count();
            let incong_masc = out_classes.iter().filter(|c| **c == NpClass::IncongruentMasc).count();
            prop_assert_eq!(incong_masc, masc_known);
        }

        #[test]
        fn fem_incongruent_never_yields_incongruent_masc(text in sentence()) {
            let a = TextAnalyzer::bundled();
            let (out, _) = ins_transform(StrategyKind::InsFemIncongruent, &text, &a);
            prop_assert!(!classes(&a, &out).contains(&NpClass::IncongruentMasc));
        }

        #[test]
        fn insertional_transforms_are_idempotent(text in sentence(), k in 0usize..3) {
            let a = TextAnalyzer::bundled();
            let kind = [StrategyKind::InsCongruent, StrategyKind::InsFemIncongruent, StrategyKind::InsMascIncongruent][k];
            let (once, _) = ins_transform(kind, &text, &a);
            let (twice, n) = ins_transform(kind, &once, &a);
            prop_assert_eq!(&twice, &once);
            if kind == StrategyKind::InsCongruent {
                prop_assert_eq!(n, 0);
            }
        }

        #[test]
        fn alignment_and_adversarial_hit_target_label(human_es in any::<bool>(), cand_es in any::<bool>(), dir in 0usize..4, n in 1usize..10) {
            let f = Fixture::new();
            let dirs = [("abajo", "down"), ("arriba", "up"), ("izquierda", "left"), ("derecha", "right")];
            let nums = ["una", "dos", "tres", "cuatro", "cinco", "seis", "siete", "ocho", "nueve"];
            let nums_en = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine"];
            let cand = if cand_es {
                format!("Ve {} {} casillas.", dirs[dir].0, nums[n - 1])
            } else {
                format!("Go {} {} squares.", dirs[dir].1, nums_en[n - 1])
            };
            let human = if human_es { "Baja dos casillas" } else { "Go down two squares" };
            let state = f.state(&[(Speaker::Human, human)]);
            let human_label = state.last_human_label().unwrap();
            let aligned = alt_alignment(&state, &cand, &f.ctx());
            prop_assert_eq!(f.analyzer.label(&aligned.text), human_label);
            let opposite = Label::from(human_label.language().unwrap().other());
            let adv = alt_adversarial(&state, &cand, &f.ctx());
            prop_assert_eq!(f.analyzer.label(&adv.text), opposite);
        }
    }
}
