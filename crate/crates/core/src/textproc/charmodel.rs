use std::collections::HashMap;

use super::{TextError, TokenLang};

/// Decision threshold on the mean per-trigram log-likelihood ratio,
/// calibrated on the bundled held-out lists to at least 97% accuracy on
/// decided words.
pub const DEFAULT_THRESHOLD: f64 = 0.51;

type Trigram = [char; 3];

#[derive(Debug, Clone, Default)]
struct TrigramTable {
    counts: HashMap<Trigram, u32>,
    total: u64,
}

impl TrigramTable {
    fn parse(src: &str, file: &str) -> Result<Self, TextError> {
        let mut table = TrigramTable::default();
        for (i, line) in src.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed =
                |reason: &str| TextError::Malformed { file: file.to_string(), line: i + 1, reason: reason.to_string() };
            let (gram, count) = line.split_once('\t').ok_or_else(|| malformed("expected trigram<TAB>count"))?;
            let chars: Vec<char> = gram.chars().collect();
            let key: Trigram = chars.try_into().map_err(|_| malformed("trigram must be 3 characters"))?;
            let count: u32 = count.trim().parse().map_err(|_| malformed("count is not an integer"))?;
            *table.counts.entry(key).or_insert(0) += count;
            table.total += u64::from(count);
        }
        Ok(table)
    }
}

/// Two character-trigram tables scored as a log-likelihood ratio with
/// add-one smoothing. Positive scores favour Spanish.
#[derive(Debug, Clone)]
pub struct CharModel {
    english: TrigramTable,
    spanish: TrigramTable,
    vocabulary: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub threshold: f64,
    pub accuracy: f64,
    pub coverage: f64,
}

impl CharModel {
    pub fn parse(english_src: &str, spanish_src: &str) -> Result<Self, TextError> {
        let english = TrigramTable::parse(english_src, "trigrams_en.tsv")?;
        let spanish = TrigramTable::parse(spanish_src, "trigrams_es.tsv")?;
        let mut vocab: std::collections::HashSet<&Trigram> = english.counts.keys().collect();
        vocab.extend(spanish.counts.keys());
        let vocabulary = vocab.len() as u64 + 1;
        Ok(CharModel { english, spanish, vocabulary })
    }

    /// Mean per-trigram log-likelihood ratio ln P(es) - ln P(en).
    pub fn score(&self, word: &str) -> f64 {
        let padded: Vec<char> = std::iter::once('^').chain(word.chars()).chain(std::iter::once('$')).collect();
        if padded.len() < 3 {
            return 0.0;
        }
        let log_p = |table: &TrigramTable, gram: &Trigram| {
            let c = table.counts.get(gram).copied().unwrap_or(0) as f64;
            ((c + 1.0) / (table.total + self.vocabulary) as f64).ln()
        };
        let mut sum = 0.0;
        let mut n = 0usize;
        for w in padded.windows(3) {
            let gram: Trigram = [w[0], w[1], w[2]];
            sum += log_p(&self.spanish, &gram) - log_p(&self.english, &gram);
            n += 1;
        }
        sum / n as f64
    }

    pub fn classify(&self, word: &str, threshold: f64) -> TokenLang {
        let s = self.score(word);
        if s.abs() < threshold {
            TokenLang::Undecided
        } else if s > 0.0 {
            TokenLang::Spanish
        } else {
            TokenLang::English
        }
    }

    /// Smallest threshold whose decided-word accuracy on the two labelled
    /// lists reaches `target`.
    pub fn calibrate<'a>(
        &self,
        english: impl IntoIterator<Item = &'a str>,
        spanish: impl IntoIterator<Item = &'a str>,
        target: f64,
    ) -> Option<Calibration> {
        let mut scored: Vec<(f64, bool)> = english
            .into_iter()
            .map(|w| {
                let s = self.score(w);
                (s.abs(), s < 0.0)
            })
            .chain(spanish.into_iter().map(|w| {
                let s = self.score(w);
                (s.abs(), s > 0.0)
            }))
            .collect();
        let total = scored.len();
        if total == 0 {
            return None;
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut correct = 0usize;
        let mut best = None;
        for (i, &(magnitude, ok)) in scored.iter().enumerate() {
            correct += usize::from(ok);
            let decided = i + 1;
            // ties at the same magnitude are decided together
            if scored.get(i + 1).is_some_and(|next| next.0 == magnitude) {
                continue;
            }
            let accuracy = correct as f64 / decided as f64;
            if accuracy >= target && magnitude > 0.0 {
                best = Some(Calibration { threshold: magnitude, accuracy, coverage: decided as f64 / total as f64 });
            }
        }
        best
    }

    /// Accuracy and coverage of `threshold` on labelled lists.
    pub fn evaluate<'a>(
        &self,
        english: impl IntoIterator<Item = &'a str>,
        spanish: impl IntoIterator<Item = &'a str>,
        threshold: f64,
    ) -> Calibration {
        let mut total = 0usize;
        let mut decided = 0usize;
        let mut correct = 0usize;
        let labelled = english
            .into_iter()
            .map(|w| (w, TokenLang::English))
            .chain(spanish.into_iter().map(|w| (w, TokenLang::Spanish)));
        for (word, expected) in labelled {
            total += 1;
            let got = self.classify(word, threshold);
            if got != TokenLang::Undecided {
                decided += 1;
                correct += usize::from(got == expected);
            }
        }
        Calibration {
            threshold,
            accuracy: if decided == 0 { 0.0 } else { correct as f64 / decided as f64 },
            coverage: if total == 0 { 0.0 } else { decided as f64 / total as f64 },
        }
    }
}
