//! A scripted stand-in for the human participant, used by simulations and
//! end-to-end tests.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{count_phrase, direction_word, instruction_line, landmark_article, parse_direction, path_segments};
use crate::game::{Cell, GameMap, Landmark, Questionnaire, Step};
use crate::lexicon::{Gender, Lexicon, Number};
use crate::strategy::session_rng;
use crate::textproc::Language;

/// Relative weights of the four message kinds the participant produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipantStyle {
    pub spanish: f64,
    pub english: f64,
    pub mixed: f64,
    pub none: f64,
    /// Typing time per message, milliseconds.
    pub min_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for ParticipantStyle {
    fn default() -> Self {
        ParticipantStyle {
            spanish: 0.4,
            english: 0.35,
            mixed: 0.2,
            none: 0.05,
            min_delay_ms: 6_000,
            max_delay_ms: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Spanish,
    English,
    Mixed,
    None,
}

/// One instructor message; `advances` is false for filler that carries no
/// direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub text: String,
    pub advances: bool,
}

#[derive(Debug, Clone)]
pub struct SimulatedParticipant {
    rng: ChaCha8Rng,
    style: ParticipantStyle,
    lexicon: Arc<Lexicon>,
}

impl SimulatedParticipant {
    pub fn new(session_id: &str, seed: u64, style: ParticipantStyle, lexicon: Arc<Lexicon>) -> Self {
        SimulatedParticipant { rng: session_rng(&format!("{session_id}/participant"), seed), style, lexicon }
    }

    fn kind(&mut self) -> Kind {
        let s = &self.style;
        let total = s.spanish + s.english + s.mixed + s.none;
        let mut x = self.rng.random::<f64>() * total;
        for (w, k) in [(s.spanish, Kind::Spanish), (s.english, Kind::English), (s.mixed, Kind::Mixed)] {
            if x < w {
                return k;
            }
            x -= w;
        }
        Kind::None
    }

    pub fn typing_delay_ms(&mut self) -> u64 {
        let (lo, hi) = (self.style.min_delay_ms, self.style.max_delay_ms.max(self.style.min_delay_ms));
        self.rng.random_range(lo..=hi)
    }

    /// Spanish determiner for an English noun, leaning masculine.
    fn mixed_article(&mut self, l: &Landmark) -> &'static str {
        let plural = self.lexicon.lookup_es(&l.spanish).is_some_and(|e| e.number == Number::Plural);
        let gender = if self.rng.random_bool(0.5) { Gender::Masculine } else { l.gender };
        match (gender, plural) {
            (Gender::Masculine, false) => "el",
            (Gender::Feminine, false) => "la",
            (Gender::Masculine, true) => "los",
            (Gender::Feminine, true) => "las",
        }
    }

    /// First message when the participant navigates.
    pub fn opening(&mut self) -> String {
        match self.kind() {
            Kind::Spanish => "Hola, ¿por dónde empiezo?".into(),
            Kind::English => "Hi, where do I start?".into(),
            Kind::Mixed => "¡Hola! Where do I start?".into(),
            Kind::None => "ok".into(),
        }
    }

    /// Direction for straight run `segment` of the target path, or `None`
    /// once the path is exhausted.
    pub fn instruction(&mut self, map: &GameMap, segment: usize) -> Option<Instruction> {
        let seg = *path_segments(&map.target_path).get(segment)?;
        let landmark = super::landmark_near(map, seg.end).cloned();
        let text = match self.kind() {
            Kind::Spanish => {
                let det = landmark.as_ref().map(|l| landmark_article(l, &self.lexicon));
                instruction_line(&seg, landmark.as_ref().zip(det), Language::Spanish)
            }
            Kind::English => instruction_line(&seg, landmark.as_ref().map(|l| (l, "the")), Language::English),
            Kind::Mixed => {
                let dir = direction_word(seg.step, Language::English);
                let count = count_phrase(seg.count, Language::Spanish);
                match &landmark {
                    Some(l) => {
                        let det = self.mixed_article(l);
                        format!("Ve {dir} {count} hasta {det} {}.", l.english)
                    }
                    None => format!("Ve {dir} {count}, ok?"),
                }
            }
            Kind::None => return Some(Instruction { text: "ok".into(), advances: false }),
        };
        Some(Instruction { text, advances: true })
    }

    /// Reply after following a direction.
    pub fn acknowledgement(&mut self, map: &GameMap, avatar: Cell) -> String {
        match self.kind() {
            Kind::Spanish => "Listo, ¿y ahora?".into(),
            Kind::English => "Done, what now?".into(),
            Kind::Mixed => {
                let near = map
                    .landmarks
                    .iter()
                    .filter(|l| l.cell.manhattan(avatar) <= 2)
                    .min_by_key(|l| l.cell.manhattan(avatar))
                    .cloned();
                match near {
                    Some(l) => {
                        let det = self.mixed_article(&l);
                        format!("Listo, veo {det} {}. What now?", l.english)
                    }
                    None => "¡Listo! What now?".into(),
                }
            }
            Kind::None => "ok".into(),
        }
    }

    /// Slider answers in 0..=100 plus a fixed language background.
    pub fn questionnaire(&mut self) -> Questionnaire {
        let mut slider = || self.rng.random_range(0..=100u32);
        Questionnaire {
            task_enjoy: slider(),
            task_success: slider(),
            difficult_comm: slider(),
            difficult_ins: slider(),
            language_background: [
                ("first_language".to_string(), "spanish".to_string()),
                ("second_language".to_string(), "english".to_string()),
            ]
            .into_iter()
            .collect(),
        }
    }

    /// Steps the participant takes after reading a bot message.
    pub fn follow(&self, bot_text: &str) -> Vec<Step> {
        parse_direction(bot_text).map_or_else(Vec::new, |(step, n)| vec![step; n as usize])
    }
}
