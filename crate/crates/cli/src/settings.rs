//! Endpoint and token discovery.
//!
//! Flags win over `METAPIX_ENDPOINT` / `METAPIX_TOKEN`, which win over the
//! TOML file `~/.metapix` (keys `endpoint` and `token`).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8080";

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct FileSettings {
    pub endpoint: Option<String>,
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub endpoint: String,
    pub token: String,
}

pub fn home_file() -> Option<PathBuf> {
    std::env::var_os("HOME").map(|h| Path::new(&h).join(".metapix"))
}

pub fn read_file(path: &Path) -> Result<FileSettings, CliError> {
    match std::fs::read_to_string(path) {
        Ok(text) => toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(FileSettings::default()),
        Err(e) => Err(CliError::Usage(format!("{}: {e}", path.display()))),
    }
}

fn valid_endpoint(url: &str) -> bool {
    let rest = url
        .strip_prefix("http://")
        .or_else(|| url.strip_prefix("https://"));
    rest.is_some_and(|r| {
        let host = r.split('/').next().unwrap_or("");
        !host.is_empty() && !host.contains(char::is_whitespace)
    })
}

pub fn resolve(
    flag_endpoint: Option<String>,
    flag_token: Option<String>,
    env: impl Fn(&str) -> Option<String>,
    file: FileSettings,
) -> Result<Settings, CliError> {
    let nonempty = |v: Option<String>| v.filter(|s| !s.trim().is_empty());
    let endpoint = nonempty(flag_endpoint)
        .or_else(|| nonempty(env("METAPIX_ENDPOINT")))
        .or_else(|| nonempty(file.endpoint))
        .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
    if !valid_endpoint(&endpoint) {
        return Err(CliError::Usage(format!("endpoint {endpoint:?} is not an http(s) URL")));
    }
    let token = nonempty(flag_token)
        .or_else(|| nonempty(env("METAPIX_TOKEN")))
        .or_else(|| nonempty(file.token))
        .ok_or_else(|| CliError::Usage("no API token: pass --token, set METAPIX_TOKEN or add token to ~/.metapix".into()))?;
    Ok(Settings { endpoint, token })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_of(pairs: &'static [(&'static str, &'static str)]) -> impl Fn(&str) -> Option<String> {
        move |k| pairs.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string())
    }

    #[test]
    fn precedence_is_flag_env_file() {
        let file = FileSettings {
            endpoint: Some("http://file:1".into()),
            token: Some("file-tok".into()),
        };
        let env = env_of(&[("METAPIX_ENDPOINT", "http://env:2"), ("METAPIX_TOKEN", "env-tok")]);
        let s = resolve(Some("http://flag:3".into()), None, &env, file.clone()).unwrap();
        assert_eq!(s, Settings { endpoint: "http://flag:3".into(), token: "env-tok".into() });
        let s = resolve(None, None, env_of(&[]), file).unwrap();
        assert_eq!(s.endpoint, "http://file:1");
        assert_eq!(s.token, "file-tok");
    }

    #[test]
    fn rejects_bad_endpoint_and_missing_token() {
        let e = resolve(Some("ftp://x".into()), Some("t".into()), env_of(&[]), FileSettings::default());
        assert!(matches!(e, Err(CliError::Usage(_))));
        let e = resolve(None, None, env_of(&[]), FileSettings::default());
        assert!(matches!(e, Err(CliError::Usage(_))));
        let s = resolve(None, Some("t".into()), env_of(&[]), FileSettings::default()).unwrap();
        assert_eq!(s.endpoint, DEFAULT_ENDPOINT);
    }

    #[test]
    fn reads_toml_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(".metapix");
        std::fs::write(&p, "endpoint = \"http://h:9\"\ntoken = \"abc\"\n").unwrap();
        assert_eq!(read_file(&p).unwrap().token.as_deref(), Some("abc"));
        assert_eq!(read_file(&dir.path().join("none")).unwrap(), FileSettings::default());
    }
}
