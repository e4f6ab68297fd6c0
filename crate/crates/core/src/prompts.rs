//! Prompt texts shipped with the toolkit.

use std::collections::BTreeMap;
use std::path::Path;

use crate::interval::TimeRole;
use crate::time::TimePoint;

pub const ALIGNMENT: &str = include_str!("../prompts/alignment.txt");
pub const REASONING: &str = include_str!("../prompts/reasoning.txt");
pub const SQL_TO_TEXT: &str = include_str!("../prompts/sql_to_text.txt");
pub const JUDGE: &str = include_str!("../prompts/judge.txt");
pub const COT: &str = include_str!("../prompts/cot.txt");
pub const TIME_COT: &str = include_str!("../prompts/time_cot.txt");

/// Named prompt texts. Built-ins can be replaced by files named
/// `<name>.txt` in an override directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    texts: BTreeMap<String, String>,
}

impl Default for PromptBundle {
    fn default() -> Self {
        PromptBundle::builtin()
    }
}

impl PromptBundle {
    pub const NAMES: [&'static str; 6] = ["alignment", "reasoning", "sql_to_text", "judge", "cot", "time_cot"];

    pub fn builtin() -> PromptBundle {
        let texts = [ALIGNMENT, REASONING, SQL_TO_TEXT, JUDGE, COT, TIME_COT]
            .iter()
            .zip(Self::NAMES)
            .map(|(t, n)| (n.to_string(), t.to_string()))
            .collect();
        PromptBundle { texts }
    }

    pub fn with_overrides(dir: &Path) -> std::io::Result<PromptBundle> {
        let mut bundle = PromptBundle::builtin();
        for name in Self::NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                bundle.texts.insert(name.to_string(), std::fs::read_to_string(path)?);
            }
        }
        Ok(bundle)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.texts.get(&name.replace('-', "_")).map(String::as_str)
    }

    pub fn sql_to_text(&self, schema: &str, start: &str, end: &str, count: usize) -> String {
        self.get("sql_to_text")
            .unwrap_or(SQL_TO_TEXT)
            .replace("{schema}", schema)
            .replace("{start}", start)
            .replace("{end}", end)
            .replace("{count}", &number_word(count))
    }

    pub fn judge(&self, refs: &[(TimeRole, TimePoint)], response: &str) -> String {
        let entity_date = refs
            .iter()
            .map(|(role, t)| format!("**{} date:** {t}", capitalize(role.name())))
            .collect::<Vec<_>>()
            .join("\n");
        self.get("judge")
            .unwrap_or(JUDGE)
            .replace("{entity_date}", &entity_date)
            .replace("{response}", response)
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// English word for small counts, digits otherwise.
pub fn number_word(n: usize) -> String {
    const WORDS: [&str; 13] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    ];
    WORDS.get(n).map(|w| w.to_string()).unwrap_or_else(|| n.to_string())
}
