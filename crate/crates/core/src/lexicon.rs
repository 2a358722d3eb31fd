//! Curated bilingual dictionaries and the Spanish determiner table.
//!
//! The noun dictionary maps Spanish map-object nouns to English, the gender
//! dictionary records the Spanish gender of each English noun's translation
//! equivalents. Both are tab-separated files with `#` comment lines.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_NOUNS: &str = include_str!("../data/nouns_es_en.tsv");
const BUNDLED_GENDERS: &str = include_str!("../data/gender_en.tsv");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{file}:{line}: duplicate lemma '{lemma}'")]
    DuplicateLemma { file: String, line: usize, lemma: String },
    #[error("{file}:{line}: unknown gender '{token}'")]
    UnknownGender { file: String, line: usize, token: String },
    #[error("{file}:{line}: malformed row: {reason}")]
    Malformed { file: String, line: usize, reason: String },
    #[error("gender of '{lemma}' is listed as {listed} but its Spanish equivalents imply {derived}")]
    GenderMismatch { lemma: String, listed: NounGender, derived: NounGender },
    #[error("'{0}' is not a Spanish determiner")]
    UnknownDeterminer(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Grammatical gender of a Spanish noun or determiner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Masculine,
    Feminine,
}

impl Gender {
    pub fn opposite(self) -> Gender {
        match self {
            Gender::Masculine => Gender::Feminine,
            Gender::Feminine => Gender::Masculine,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Masculine => "masculine",
            Gender::Feminine => "feminine",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "masculine" => Ok(Gender::Masculine),
            "feminine" => Ok(Gender::Feminine),
            other => Err(other.to_string()),
        }
    }
}

/// Gender of an English noun's Spanish equivalents; `Ambiguous` when
/// synonyms disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NounGender {
    Masculine,
    Feminine,
    Ambiguous,
}

impl NounGender {
    pub fn as_str(self) -> &'static str {
        match self {
            NounGender::Masculine => "masculine",
            NounGender::Feminine => "feminine",
            NounGender::Ambiguous => "ambiguous",
        }
    }

    pub fn definite(self) -> Option<Gender> {
        match self {
            NounGender::Masculine => Some(Gender::Masculine),
            NounGender::Feminine => Some(Gender::Feminine),
            NounGender::Ambiguous => None,
        }
    }
}

impl From<Gender> for NounGender {
    fn from(g: Gender) -> Self {
        match g {
            Gender::Masculine => NounGender::Masculine,
            Gender::Feminine => NounGender::Feminine,
        }
    }
}

impl fmt::Display for NounGender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NounGender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ambiguous" => Ok(NounGender::Ambiguous),
            other => Gender::from_str(other).map(NounGender::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Number {
    #[default]
    Singular,
    Plural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounEntry {
    pub spanish_lemma: String,
    pub english_lemma: String,
    pub spanish_gender: Gender,
    pub number: Number,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnglishGenderEntry {
    pub english_lemma: String,
    pub gender: NounGender,
    pub number: Number,
}

/// The four Spanish article series that simple noun phrases may start with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeterminerForm {
    pub gender: Gender,
    pub definite: bool,
    pub number: Number,
}

const DETERMINER_SERIES: [(&str, &str, bool, Number); 4] = [
    ("el", "la", true, Number::Singular),
    ("un", "una", false, Number::Singular),
    ("los", "las", true, Number::Plural),
    ("unos", "unas", false, Number::Plural),
];

#[derive(Debug, Clone, Copy, Default)]
pub struct DeterminerTable;

impl DeterminerTable {
    pub fn masculine_forms(&self) -> impl Iterator<Item = &'static str> {
        DETERMINER_SERIES.iter().map(|s| s.0)
    }

    pub fn feminine_forms(&self) -> impl Iterator<Item = &'static str> {
        DETERMINER_SERIES.iter().map(|s| s.1)
    }

    pub fn to_feminine(&self, det: &str) -> Option<&'static str> {
        DETERMINER_SERIES.iter().find(|s| s.0 == det).map(|s| s.1)
    }

    pub fn to_masculine(&self, det: &str) -> Option<&'static str> {
        DETERMINER_SERIES.iter().find(|s| s.1 == det).map(|s| s.0)
    }

    /// Classifies a lowercase word as a determiner, if it is one.
    pub fn form_of(&self, det: &str) -> Option<DeterminerForm> {
        DETERMINER_SERIES.iter().find_map(|&(m, f, definite, number)| {
            let gender = if det == m {
                Gender::Masculine
            } else if det == f {
                Gender::Feminine
            } else {
                return None;
            };
            Some(DeterminerForm { gender, definite, number })
        })
    }

    pub fn is_determiner(&self, word: &str) -> bool {
        self.form_of(word).is_some()
    }

    pub fn form(&self, form: DeterminerForm) -> &'static str {
        let series = DETERMINER_SERIES
            .iter()
            .find(|s| s.2 == form.definite && s.3 == form.number)
            .expect("every definiteness/number pair has a series");
        match form.gender {
            Gender::Masculine => series.0,
            Gender::Feminine => series.1,
        }
    }

    /// Returns the form of `det`'s series in `target` gender; identity when
    /// `det` already has that gender.
    pub fn map_gender(&self, det: &str, target: Gender) -> Result<&'static str, LexiconError> {
        let lower = det.to_lowercase();
        let form = self.form_of(&lower).ok_or_else(|| LexiconError::UnknownDeterminer(det.to_string()))?;
        Ok(self.form(DeterminerForm { gender: target, ..form }))
    }
}

/// Immutable after load; share it behind an `Arc`.
#[derive(Debug, Clone)]
pub struct Lexicon {
    nouns: BTreeMap<String, NounEntry>,
    english_genders: BTreeMap<String, EnglishGenderEntry>,
    spanish_by_english: BTreeMap<String, Vec<String>>,
    determiners: DeterminerTable,
}

impl Lexicon {
    pub fn load(noun_dict_path: &Path, gender_dict_path: &Path) -> Result<Self, LexiconError> {
        let read = |path: &Path| {
            std::fs::read_to_string(path).map_err(|source| LexiconError::Io { path: path.to_path_buf(), source })
        };
        let nouns = read(noun_dict_path)?;
        let genders = read(gender_dict_path)?;
        Self::parse(&nouns, &noun_dict_path.display().to_string(), &genders, &gender_dict_path.display().to_string())
    }

    /// The dictionaries compiled into the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_NOUNS, "nouns_es_en.tsv", BUNDLED_GENDERS, "gender_en.tsv")
            .expect("bundled dictionaries are valid")
    }

    pub fn parse(noun_src: &str, noun_file: &str, gender_src: &str, gender_file: &str) -> Result<Self, LexiconError> {
        let mut nouns = BTreeMap::new();
        for (line, fields) in rows(noun_src) {
            let malformed = |reason: &str| LexiconError::Malformed {
                file: noun_file.to_string(),
                line,
                reason: reason.to_string(),
            };
            if !(3..=4).contains(&fields.len()) {
                return Err(malformed("expected 3 or 4 tab-separated fields"));
            }
            let spanish_gender = Gender::from_str(fields[2]).map_err(|token| LexiconError::UnknownGender {
                file: noun_file.to_string(),
                line,
                token,
            })?;
            let number = parse_number(fields.get(3).copied()).ok_or_else(|| malformed("bad number column"))?;
            let entry = NounEntry {
                spanish_lemma: fields[0].to_lowercase(),
                english_lemma: fields[1].to_lowercase(),
                spanish_gender,
                number,
            };
            if nouns.contains_key(&entry.spanish_lemma) {
                return Err(LexiconError::DuplicateLemma {
                    file: noun_file.to_string(),
                    line,
                    lemma: entry.spanish_lemma,
                });
            }
            nouns.insert(entry.spanish_lemma.clone(), entry);
        }

        let mut english_genders = BTreeMap::new();
        for (line, fields) in rows(gender_src) {
            if !(2..=3).contains(&fields.len()) {
                return Err(LexiconError::Malformed {
                    file: gender_file.to_string(),
                    line,
                    reason: "expected 2 or 3 tab-separated fields".into(),
                });
            }
            let gender = NounGender::from_str(fields[1]).map_err(|token| LexiconError::UnknownGender {
                file: gender_file.to_string(),
                line,
                token,
            })?;
            let number = parse_number(fields.get(2).copied()).ok_or_else(|| LexiconError::Malformed {
                file: gender_file.to_string(),
                line,
                reason: "bad number column".into(),
            })?;
            let entry = EnglishGenderEntry { english_lemma: fields[0].to_lowercase(), gender, number };
            if english_genders.contains_key(&entry.english_lemma) {
                return Err(LexiconError::DuplicateLemma {
                    file: gender_file.to_string(),
                    line,
                    lemma: entry.english_lemma,
                });
            }
            english_genders.insert(entry.english_lemma.clone(), entry);
        }

        let mut spanish_by_english: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for entry in nouns.values() {
            spanish_by_english.entry(entry.english_lemma.clone()).or_default().push(entry.spanish_lemma.clone());
        }

        let lexicon = Lexicon { nouns, english_genders, spanish_by_english, determiners: DeterminerTable };
        lexicon.check_ambiguity()?;
        Ok(lexicon)
    }

    // Listed gender must agree with the genders of the Spanish synonyms.
    fn check_ambiguity(&self) -> Result<(), LexiconError> {
        for entry in self.english_genders.values() {
            let Some(derived) = self.derived_gender(&entry.english_lemma) else {
                continue;
            };
            if derived != entry.gender {
                return Err(LexiconError::GenderMismatch {
                    lemma: entry.english_lemma.clone(),
                    listed: entry.gender,
                    derived,
                });
            }
        }
        Ok(())
    }

    fn derived_gender(&self, english: &str) -> Option<NounGender> {
        let spanish = self.spanish_by_english.get(english)?;
        let mut genders = spanish.iter().map(|s| self.nouns[s].spanish_gender);
        let first = genders.next()?;
        if genders.all(|g| g == first) {
            Some(first.into())
        } else {
            Some(NounGender::Ambiguous)
        }
    }

    pub fn lookup_es(&self, spanish: &str) -> Option<&NounEntry> {
        self.nouns.get(spanish)
    }

    pub fn lookup_en_gender(&self, english: &str) -> Option<NounGender> {
        self.english_genders.get(english).map(|e| e.gender)
    }

    pub fn english_entry(&self, english: &str) -> Option<&EnglishGenderEntry> {
        self.english_genders.get(english)
    }

    /// Spanish lemmas translating to `english`, in lexicographic order.
    pub fn spanish_for_english(&self, english: &str) -> &[String] {
        self.spanish_by_english.get(english).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn nouns(&self) -> impl Iterator<Item = &NounEntry> {
        self.nouns.values()
    }

    pub fn english_entries(&self) -> impl Iterator<Item = &EnglishGenderEntry> {
        self.english_genders.values()
    }

    pub fn determiners(&self) -> &DeterminerTable {
        &self.determiners
    }

    pub fn map_determiner_gender(&self, det: &str, target: Gender) -> Result<&'static str, LexiconError> {
        self.determiners.map_gender(det, target)
    }

    /// English lemmas from the noun dictionary that lack a gender entry.
    pub fn coverage_report(&self) -> Vec<String> {
        self.spanish_by_english.keys().filter(|en| !self.english_genders.contains_key(*en)).cloned().collect()
    }
}

fn parse_number(field: Option<&str>) -> Option<Number> {
    match field {
        None | Some("") | Some("singular") => Some(Number::Singular),
        Some("plural") => Some(Number::Plural),
        Some(_) => None,
    }
}

/// Non-comment, non-blank rows with 1-based line numbers.
fn rows(src: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    src.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            return None;
        }
        Some((i + 1, line.split('\t').map(str::trim).collect()))
    })
}
