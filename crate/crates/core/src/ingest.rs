//! Acquiring C/C++ sources: remote code search, local directory walks and an
//! offline snapshot store for replaying remote results.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

pub const TOKEN_ENV: &str = "ACCMINE_API_TOKEN";

/// Extensions picked up by default when walking a local tree.
pub const DEFAULT_EXTENSIONS: [&str; 8] = ["c", "h", "cc", "cpp", "cxx", "hh", "hpp", "hxx"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("not a directory: {0}")]
    NotADirectory(PathBuf),
    #[error("authentication failed for {context}")]
    AuthError { context: String },
    #[error("rate limited, retries exhausted for {context}")]
    RateLimited { context: String },
    #[error("network error for {context}: {message}")]
    NetworkError { context: String, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed response from {context}: {message}")]
    MalformedResponse { context: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Remote,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repository: Option<String>,
    pub text: String,
    pub origin: Origin,
    /// Number of invalid UTF-8 sequences replaced with U+FFFD.
    #[serde(default)]
    pub replacement_count: usize,
}

impl SourceFile {
    pub fn from_bytes(path: impl Into<String>, bytes: &[u8], origin: Origin) -> Self {
        let (text, replacement_count) = decode_lossy(bytes);
        SourceFile {
            path: path.into(),
            repository: None,
            text,
            origin,
            replacement_count,
        }
    }

    /// `repository/path` for remote files, the plain path otherwise.
    pub fn display_path(&self) -> String {
        match &self.repository {
            Some(repo) => format!("{repo}/{}", self.path),
            None => self.path.clone(),
        }
    }

    pub fn extension(&self) -> Option<&str> {
        Path::new(&self.path).extension().and_then(|e| e.to_str())
    }
}

/// Lossy UTF-8 decode that also reports how many invalid sequences were replaced.
pub fn decode_lossy(bytes: &[u8]) -> (String, usize) {
    let mut text = String::with_capacity(bytes.len());
    let mut replaced = 0;
    for chunk in bytes.utf8_chunks() {
        text.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            text.push(char::REPLACEMENT_CHARACTER);
            replaced += 1;
        }
    }
    (text, replaced)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "c")]
    C,
    #[serde(rename = "c++")]
    Cpp,
}

impl Language {
    /// Value used in the search provider's `language:` qualifier.
    pub fn qualifier(self) -> &'static str {
        match self {
            Language::C => "C",
            Language::Cpp => "C++",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub phrases: Vec<String>,
    pub languages: Vec<Language>,
}

/// The two seed phrases, restricted to C and C++.
pub fn default_queries() -> SearchQuery {
    SearchQuery {
        phrases: vec![
            "#pragma acc loop".to_string(),
            "#pragma acc parallel loop".to_string(),
        ],
        languages: vec![Language::C, Language::Cpp],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub auth_header: String,
    pub auth_scheme: String,
    pub page_size: usize,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub request_timeout_secs: u64,
    pub user_agent: String,
    #[serde(skip_serializing)]
    pub token: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: "https://api.github.com/search/code".to_string(),
            auth_header: "Authorization".to_string(),
            auth_scheme: "Bearer".to_string(),
            page_size: 100,
            max_retries: 5,
            initial_backoff_ms: 2000,
            request_timeout_secs: 30,
            user_agent: "accmine".to_string(),
            token: None,
        }
    }
}

impl RemoteConfig {
    /// Token from `ACCMINE_API_TOKEN`, falling back to the config value.
    pub fn resolve_token(&self) -> Option<String> {
        std::env::var(TOKEN_ENV)
            .ok()
            .filter(|t| !t.is_empty())
            .or_else(|| self.token.clone())
    }
}

#[derive(Debug, Deserialize)]
struct SearchPage {
    #[serde(default)]
    items: Vec<SearchItem>,
}

#[derive(Debug, Deserialize)]
struct SearchItem {
    path: String,
    repository: RepositoryRef,
    url: String,
}

#[derive(Debug, Deserialize)]
struct RepositoryRef {
    full_name: String,
}

#[derive(Debug, Deserialize)]
struct ContentResponse {
    content: String,
    #[serde(default)]
    encoding: String,
}

struct RemoteClient<'a> {
    agent: ureq::Agent,
    cfg: &'a RemoteConfig,
    token: &'a str,
}

impl RemoteClient<'_> {
    fn get(&self, url: &str, query: &[(&str, String)]) -> Result<String, IngestError> {
        let context = if query.is_empty() {
            url.to_string()
        } else {
            let q: Vec<String> = query.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("{url}?{}", q.join("&"))
        };
        let mut backoff = Duration::from_millis(self.cfg.initial_backoff_ms);
        let mut attempt = 0;
        loop {
            let mut req = self
                .agent
                .get(url)
                .header(
                    self.cfg.auth_header.as_str(),
                    format!("{} {}", self.cfg.auth_scheme, self.token).trim(),
                )
                .header("User-Agent", self.cfg.user_agent.as_str())
                .header("Accept", "application/vnd.github+json");
            for (k, v) in query {
                req = req.query(*k, v);
            }
            let retryable = match req.call() {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let exhausted = resp
                        .headers()
                        .get("x-ratelimit-remaining")
                        .and_then(|v| v.to_str().ok())
                        .is_some_and(|v| v.trim() == "0");
                    match status {
                        200..=299 => {
                            return resp.body_mut().read_to_string().map_err(|e| {
                                IngestError::NetworkError {
                                    context: context.clone(),
                                    message: e.to_string(),
                                }
                            });
                        }
                        401 => return Err(IngestError::AuthError { context }),
                        403 if !exhausted => return Err(IngestError::AuthError { context }),
                        403 | 429 => RetryKind::RateLimit,
                        500..=599 => RetryKind::Transport(format!("HTTP {status}")),
                        _ => {
                            return Err(IngestError::NetworkError {
                                context,
                                message: format!("HTTP {status}"),
                            });
                        }
                    }
                }
                Err(e) => RetryKind::Transport(e.to_string()),
            };
            if attempt >= self.cfg.max_retries {
                return Err(match retryable {
                    RetryKind::RateLimit => IngestError::RateLimited { context },
                    RetryKind::Transport(message) => IngestError::NetworkError { context, message },
                });
            }
            log::warn!("retrying {context} in {backoff:?}");
            thread::sleep(backoff);
            backoff *= 2;
            attempt += 1;
        }
    }
}

enum RetryKind {
    RateLimit,
    Transport(String),
}

/// Runs every phrase/language combination against the code-search endpoint,
/// fetching at most `page_limit` pages each, and downloads each distinct
/// `(repository, path)` once. Files whose text contains none of the phrases
/// are discarded.
pub fn search_remote(
    q: &SearchQuery,
    cfg: &RemoteConfig,
    token: &str,
    page_limit: usize,
) -> Result<Vec<SourceFile>, IngestError> {
    if token.trim().is_empty() {
        return Err(IngestError::AuthError {
            context: "empty token (set ACCMINE_API_TOKEN)".to_string(),
        });
    }
    if page_limit == 0 {
        return Err(IngestError::InvalidArgument("page limit must be >= 1".into()));
    }
    if q.phrases.is_empty() {
        return Err(IngestError::InvalidArgument("query has no phrases".into()));
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(cfg.request_timeout_secs)))
        .build()
        .into();
    let client = RemoteClient { agent, cfg, token };

    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut files = Vec::new();
    let languages: Vec<Option<Language>> = if q.languages.is_empty() {
        vec![None]
    } else {
        q.languages.iter().copied().map(Some).collect()
    };
    for phrase in &q.phrases {
        for lang in &languages {
            let mut query = format!("\"{phrase}\"");
            if let Some(lang) = lang {
                query.push_str(&format!(" language:{}", lang.qualifier()));
            }
            for page in 1..=page_limit {
                let body = client.get(
                    &cfg.endpoint,
                    &[
                        ("q", query.clone()),
                        ("per_page", cfg.page_size.to_string()),
                        ("page", page.to_string()),
                    ],
                )?;
                let parsed: SearchPage =
                    serde_json::from_str(&body).map_err(|e| IngestError::MalformedResponse {
                        context: cfg.endpoint.clone(),
                        message: e.to_string(),
                    })?;
                let count = parsed.items.len();
                for item in parsed.items {
                    let key = (item.repository.full_name.clone(), item.path.clone());
                    if !seen.insert(key) {
                        continue;
                    }
                    let file = fetch_content(&client, &item)?;
                    if q.phrases.iter().any(|p| file.text.contains(p.as_str())) {
                        files.push(file);
                    }
                }
                if count < cfg.page_size {
                    break;
                }
            }
        }
    }
    Ok(files)
}

fn fetch_content(client: &RemoteClient<'_>, item: &SearchItem) -> Result<SourceFile, IngestError> {
    let body = client.get(&item.url, &[])?;
    let parsed: ContentResponse =
        serde_json::from_str(&body).map_err(|e| IngestError::MalformedResponse {
            context: item.url.clone(),
            message: e.to_string(),
        })?;
    let bytes = if parsed.encoding == "base64" {
        let compact: String = parsed.content.split_whitespace().collect();
        base64::engine::general_purpose::STANDARD
            .decode(compact)
            .map_err(|e| IngestError::MalformedResponse {
                context: item.url.clone(),
                message: e.to_string(),
            })?
    } else {
        parsed.content.into_bytes()
    };
    let mut file = SourceFile::from_bytes(item.path.clone(), &bytes, Origin::Remote);
    file.repository = Some(item.repository.full_name.clone());
    Ok(file)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirectoryIngest {
    pub files: Vec<SourceFile>,
    pub skipped: usize,
}

/// Recursively collect files whose extension is in `extensions`.
///
/// Paths are relative to `root` and returned in lexicographic order. Files
/// that cannot be read are counted in `skipped`; symlink cycles are not walked.
pub fn ingest_directory(
    root: &Path,
    extensions: &BTreeSet<String>,
) -> Result<DirectoryIngest, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::NotADirectory(root.to_path_buf()));
    }
    let wanted = |p: &Path| {
        p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| extensions.contains(e))
    };
    let mut skipped = 0;
    let mut paths = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        match entry {
            Ok(e) if e.file_type().is_file() && wanted(e.path()) => paths.push(e.into_path()),
            Ok(_) => {}
            Err(e) => {
                if e.loop_ancestor().is_some() {
                    log::warn!("skipping symlink cycle at {:?}", e.path());
                } else if e.path().is_some_and(wanted) {
                    log::warn!("skipping unreadable entry: {e}");
                    skipped += 1;
                }
            }
        }
    }
    paths.sort();

    let results: Vec<Option<SourceFile>> = paths
        .par_iter()
        .map(|p| match fs::read(p) {
            Ok(bytes) => {
                let rel = p.strip_prefix(root).unwrap_or(p);
                let rel = rel.to_string_lossy().replace('\\', "/");
                Some(SourceFile::from_bytes(rel, &bytes, Origin::Local))
            }
            Err(e) => {
                log::warn!("skipping unreadable file {p:?}: {e}");
                None
            }
        })
        .collect();
    let mut files = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Some(f) => files.push(f),
            None => skipped += 1,
        }
    }
    Ok(DirectoryIngest { files, skipped })
}

pub fn extension_set<I, S>(exts: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    exts.into_iter()
        .map(|e| e.as_ref().trim_start_matches('.').to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub repository: Option<String>,
    pub path: String,
    pub retrieved_at_unix: u64,
    pub sha256: String,
    #[serde(default)]
    pub replacement_count: usize,
    #[serde(default = "remote_origin")]
    pub origin: Origin,
}

fn remote_origin() -> Origin {
    Origin::Remote
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub entries: Vec<SnapshotEntry>,
}

pub const SNAPSHOT_MANIFEST: &str = "manifest.json";

/// Content-addressed store of fetched files: `objects/<sha256>` plus `manifest.json`.
pub struct SnapshotStore {
    root: PathBuf,
}

impl SnapshotStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SnapshotStore { root: root.into() }
    }

    pub fn is_snapshot(dir: &Path) -> bool {
        dir.join(SNAPSHOT_MANIFEST).is_file() && dir.join("objects").is_dir()
    }

    pub fn save(&self, files: &[SourceFile]) -> Result<SnapshotManifest, IngestError> {
        let objects = self.root.join("objects");
        fs::create_dir_all(&objects)?;
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut manifest = SnapshotManifest::default();
        for f in files {
            let hash = hex::encode(Sha256::digest(f.text.as_bytes()));
            let obj = objects.join(&hash);
            if !obj.exists() {
                fs::write(&obj, f.text.as_bytes())?;
            }
            manifest.entries.push(SnapshotEntry {
                repository: f.repository.clone(),
                path: f.path.clone(),
                retrieved_at_unix: now,
                sha256: hash,
                replacement_count: f.replacement_count,
                origin: f.origin,
            });
        }
        let json = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.root.join(SNAPSHOT_MANIFEST), json + "\n")?;
        Ok(manifest)
    }

    pub fn load(&self) -> Result<Vec<SourceFile>, IngestError> {
        let text = fs::read_to_string(self.root.join(SNAPSHOT_MANIFEST))?;
        let manifest: SnapshotManifest = serde_json::from_str(&text)?;
        manifest
            .entries
            .into_iter()
            .map(|e| {
                let bytes = fs::read(self.root.join("objects").join(&e.sha256))?;
                let (text, _) = decode_lossy(&bytes);
                Ok(SourceFile {
                    path: e.path,
                    repository: e.repository,
                    text,
                    origin: e.origin,
                    replacement_count: e.replacement_count,
                })
            })
            .collect()
    }
}
