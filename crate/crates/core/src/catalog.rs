//! Parser for catalog entries of the form `name(key=value, ...)`.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("malformed catalog entry `{0}`, expected name(key=value, ...)")]
    Malformed(String),
    #[error("unknown catalog name `{0}`")]
    UnknownName(String),
    #[error("unknown parameter `{key}` for `{name}`")]
    UnknownKey { name: String, key: String },
    #[error("missing parameter `{key}` for `{name}`")]
    MissingKey { name: String, key: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatalogCall {
    pub name: String,
    pub args: BTreeMap<String, f64>,
}

impl CatalogCall {
    pub fn parse(s: &str) -> Result<Self, CatalogError> {
        let malformed = || CatalogError::Malformed(s.to_string());
        let s = s.trim();
        let open = s.find('(').ok_or_else(malformed)?;
        let body = s[open + 1..].strip_suffix(')').ok_or_else(malformed)?;
        let name = s[..open].trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(malformed());
        }
        let mut args = BTreeMap::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(malformed)?;
            let v: f64 = v.trim().parse().map_err(|_| malformed())?;
            if !v.is_finite() || args.insert(k.trim().to_string(), v).is_some() {
                return Err(malformed());
            }
        }
        Ok(Self { name: name.to_string(), args })
    }

    pub fn expect_only(&self, keys: &[&str]) -> Result<(), CatalogError> {
        match self.args.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(CatalogError::UnknownKey { name: self.name.clone(), key: k.clone() }),
            None => Ok(()),
        }
    }

    pub fn get_or(&self, key: &str, default: f64) -> f64 {
        self.args.get(key).copied().unwrap_or(default)
    }

    pub fn require(&self, key: &str) -> Result<f64, CatalogError> {
        self.args.get(key).copied().ok_or_else(|| CatalogError::MissingKey {
            name: self.name.clone(),
            key: key.to_string(),
        })
    }
}
