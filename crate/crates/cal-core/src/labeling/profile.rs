use thiserror::Error;

/// Sink and exclusion name patterns. A pattern matches a callee when it
/// equals the name or is a prefix of it. Exclusions carve error-handling and
/// cleanup helpers out of the seed set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CryptoProfile {
    pub sinks: Vec<String>,
    pub exclusions: Vec<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("pattern {0:?} appears as both sink and exclusion")]
    Overlap(String),
    #[error("profile has no sink patterns")]
    Empty,
}

const DEFAULT_PROFILE: &str = include_str!("default.profile");

impl CryptoProfile {
    /// Plain-text profile: one pattern per line, `!` prefix marks exclusions,
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<CryptoProfile, ProfileError> {
        let mut sinks = Vec::new();
        let mut exclusions = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(stripped) = line.strip_prefix('!') {
                exclusions.push(stripped.trim().to_string());
            } else {
                sinks.push(line.to_string());
            }
        }
        if sinks.is_empty() {
            return Err(ProfileError::Empty);
        }
        for s in &sinks {
            if exclusions.contains(s) {
                return Err(ProfileError::Overlap(s.clone()));
            }
        }
        Ok(CryptoProfile { sinks, exclusions })
    }

    /// Built-in OpenSSL-style profile.
    pub fn openssl_default() -> CryptoProfile {
        CryptoProfile::parse(DEFAULT_PROFILE).expect("default profile is valid")
    }

    pub fn default_text() -> &'static str {
        DEFAULT_PROFILE
    }

    fn matches(patterns: &[String], name: &str) -> bool {
        patterns.iter().any(|p| name == p || name.starts_with(p.as_str()))
    }

    pub fn is_excluded(&self, name: &str) -> bool {
        Self::matches(&self.exclusions, name)
    }

    /// Sink matching that honors exclusions.
    pub fn is_sink(&self, name: &str) -> bool {
        Self::matches(&self.sinks, name) && !self.is_excluded(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_matches_expected_names() {
        let p = CryptoProfile::openssl_default();
        assert!(p.is_sink("SHA256"));
        assert!(p.is_sink("EVP_EncryptInit"));
        assert!(p.is_sink("bitcoin_sign"));
        assert!(!p.is_sink("ERR_print_errors"));
        assert!(!p.is_sink("printf"));
        assert!(p.is_excluded("ERR_clear_error"));
    }

    #[test]
    fn parse_exclusions_and_comments() {
        let p = CryptoProfile::parse("# mine\nmy_crypt_\n!my_crypt_log\n").unwrap();
        assert!(p.is_sink("my_crypt_sign"));
        assert!(!p.is_sink("my_crypt_log"));
        assert!(!p.is_sink("my_crypt_log_init"));
    }

    #[test]
    fn overlapping_pattern_is_rejected() {
        assert_eq!(
            CryptoProfile::parse("AES_\n!AES_\n"),
            Err(ProfileError::Overlap("AES_".into()))
        );
    }

    #[test]
    fn empty_profile_is_rejected() {
        assert_eq!(CryptoProfile::parse("# nothing\n"), Err(ProfileError::Empty));
    }
}
