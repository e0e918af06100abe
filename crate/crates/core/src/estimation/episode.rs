use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::EstimationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Crash,
    Goal,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Distance to the nearest obstacle surface, metres.
    pub clearance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<f64>>,
}

/// One sampled mission: per-step clearance plus how it ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<Step>,
    pub outcome: Outcome,
}

impl Episode {
    pub fn from_clearances(clearances: &[f64], outcome: Outcome) -> Self {
        Episode {
            steps: clearances.iter().map(|&c| Step { clearance: c, raw: None }).collect(),
            outcome,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn check(&self) -> Result<(), EstimationError> {
        if self.steps.is_empty() {
            return Err(EstimationError::EmptyEpisode);
        }
        if let Some((i, s)) = self
            .steps
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.clearance >= 0.0 && s.clearance.is_finite()))
        {
            return Err(EstimationError::BadClearance { step: i, value: s.clearance });
        }
        Ok(())
    }

    /// `crash` exactly when the final clearance is within `collision_radius`.
    pub fn outcome_consistent(&self, collision_radius: f64) -> bool {
        let last = self.steps.last().map(|s| s.clearance).unwrap_or(f64::INFINITY);
        (self.outcome == Outcome::Crash) == (last <= collision_radius)
    }
}

/// Reads one episode per non-blank line.
pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<Episode>, EstimationError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: Episode =
            serde_json::from_str(&line).map_err(|e| EstimationError::Jsonl { line: i + 1, message: e.to_string() })?;
        ep.check().map_err(|e| EstimationError::Jsonl { line: i + 1, message: e.to_string() })?;
        out.push(ep);
    }
    Ok(out)
}

pub fn write_jsonl(mut writer: impl Write, episodes: &[Episode]) -> std::io::Result<()> {
    for ep in episodes {
        serde_json::to_writer(&mut writer, ep)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_format() {
        let text = "{\"steps\":[{\"clearance\":3.5},{\"clearance\":0.0}],\"outcome\":\"crash\"}\n\n{\"steps\":[{\"clearance\":1}],\"outcome\":\"timeout\"}\n";
        let eps = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(eps.len(), 2);
        assert_eq!(eps[0].outcome, Outcome::Crash);
        assert!(eps[0].outcome_consistent(0.0));
        assert_eq!(eps[1].len(), 1);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &eps).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), eps);
        assert!(String::from_utf8(buf).unwrap().starts_with("{\"steps\":[{\"clearance\":3.5}"));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            read_jsonl("{\"steps\":[],\"outcome\":\"goal\"}".as_bytes()),
            Err(EstimationError::Jsonl { line: 1, .. })
        ));
        assert!(read_jsonl("{\"steps\":[{\"clearance\":-1}],\"outcome\":\"goal\"}".as_bytes()).is_err());
        assert!(read_jsonl("{\"steps\":[{\"clearance\":1}],\"outcome\":\"won\"}".as_bytes()).is_err());
    }
}
