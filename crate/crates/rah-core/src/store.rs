//! On-disk personality library: one file per user with a versioned header
//! line followed by one JSON trait entry per line.
//!
//! Writes go through a temp file plus rename so a crash never leaves a
//! half-written library behind. Concurrency discipline is single writer
//! per user; readers see either the old or the new file, never a mix.

use std::fs;
use std::path::Path;

use crate::domain::{Personality, TraitEntry, UserId};
use crate::error::{RahError, Result};

const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "#rah-personality";

pub fn save(personality: &Personality, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{MAGIC} v{FORMAT_VERSION}\n"));
    out.push_str(&format!("user: {}\n", personality.user));
    out.push_str(&format!("next_created_at: {}\n", personality.next_created_at));
    for entry in &personality.entries {
        let line = serde_json::to_string(entry)
            .map_err(|e| RahError::Decode(format!("cannot encode trait entry: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    fs::write(&tmp, out)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Personality> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();

    let header = lines
        .next()
        .ok_or_else(|| RahError::Decode(format!("{}: empty file", path.display())))?;
    let version = header
        .strip_prefix(MAGIC)
        .map(str::trim)
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| RahError::Decode(format!("{}: bad header {header:?}", path.display())))?;
    if version != FORMAT_VERSION {
        return Err(RahError::VersionMismatch {
            found: version.to_string(),
            expected: FORMAT_VERSION.to_string(),
        });
    }

    let user_line = lines
        .next()
        .and_then(|l| l.strip_prefix("user: "))
        .ok_or_else(|| RahError::Decode(format!("{}: missing user line", path.display())))?;
    let next_created_at = lines
        .next()
        .and_then(|l| l.strip_prefix("next_created_at: "))
        .and_then(|v| v.parse::<u64>().ok())
        .ok_or_else(|| {
            RahError::Decode(format!("{}: missing next_created_at line", path.display()))
        })?;

    let mut entries: Vec<TraitEntry> = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: TraitEntry = serde_json::from_str(line).map_err(|e| {
            RahError::Decode(format!(
                "{}: entry on line {}: {e}",
                path.display(),
                n + 4
            ))
        })?;
        entries.push(entry);
    }

    Ok(Personality {
        user: UserId::new(user_line),
        entries,
        next_created_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Action, InteractionId};

    fn sample() -> Personality {
        let mut p = Personality::empty(UserId::new("u1"));
        p.push_entry(
            Action::Like,
            ["a".to_string(), "b".to_string()].into(),
            [InteractionId::new("h1")].into(),
        );
        p.push_entry(
            Action::Dislike,
            ["z".to_string()].into(),
            [InteractionId::new("h2")].into(),
        );
        p
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u1.rahp");
        let p = sample();
        save(&p, &path).unwrap();
        assert_eq!(load(&path).unwrap(), p);
    }

    #[test]
    fn truncated_file_is_decode_error_leaving_file_alone() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u1.rahp");
        save(&sample(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let cut = &text[..text.len() - 10];
        fs::write(&path, cut).unwrap();
        let err = load(&path).unwrap_err();
        assert!(matches!(err, RahError::Decode(_)), "{err}");
        assert_eq!(fs::read_to_string(&path).unwrap(), cut);
    }

    #[test]
    fn version_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u1.rahp");
        fs::write(&path, "#rah-personality v9\nuser: u1\nnext_created_at: 0\n").unwrap();
        let err = load(&path).unwrap_err();
        assert!(matches!(err, RahError::VersionMismatch { .. }), "{err}");
    }

    #[test]
    fn empty_personality_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u1.rahp");
        let p = Personality::empty(UserId::new("u1"));
        save(&p, &path).unwrap();
        assert_eq!(load(&path).unwrap(), p);
    }
}
