//! Token-file authentication.
//!
//! Each non-blank line of the tokens file reads `<token> <user_id> [roles]`
//! where roles is a comma-separated list. Lines starting with `#` are
//! ignored.

use std::collections::HashMap;
use std::path::Path;

use axum::extract::FromRequestParts;
use axum::http::request::Parts;
use metapix_core::catalog::Principal;

use crate::error::ApiError;
use crate::AppState;

pub const TOKEN_HEADER: &str = "x-api-token";

#[derive(Debug, Clone, Default)]
pub struct Tokens(HashMap<String, Principal>);

impl Tokens {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(token), Some(user)) = (parts.next(), parts.next()) else {
                return Err(format!("tokens file line {}: expected `<token> <user_id> [roles]`", n + 1));
            };
            let roles: Vec<&str> = parts
                .next()
                .map(|r| r.split(',').map(str::trim).filter(|r| !r.is_empty()).collect())
                .unwrap_or_default();
            if parts.next().is_some() {
                return Err(format!("tokens file line {}: trailing fields", n + 1));
            }
            map.insert(token.to_string(), Principal::new(user, &roles));
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn principal(&self, token: &str) -> Option<&Principal> {
        self.0.get(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The authenticated caller of a request.
#[derive(Debug, Clone)]
pub struct Caller(pub Principal);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(TOKEN_HEADER)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(|| ApiError::unauthenticated("missing X-Api-Token header"))?;
        state
            .tokens
            .principal(token)
            .cloned()
            .map(Caller)
            .ok_or_else(|| ApiError::unauthenticated("unknown token"))
    }
}
