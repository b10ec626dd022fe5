//! `metapix`, a command-line client for the MetaPix HTTP API.
//!
//! Every command maps onto one or more `/v1` endpoints (see
//! [`COMMAND_ENDPOINTS`]). Output is a plain table by default, or the raw
//! API response with `--json`. Exit status is 0 on success, 1 for API and
//! transport errors and 2 for usage errors.

pub mod client;
pub mod render;
pub mod settings;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use client::Client;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
        details: Option<Value>,
    },
    #[error("cannot reach server: {0}")]
    Transport(String),
    #[error("{0}")]
    Io(String),
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("operation {0} failed")]
    OperationFailed(String),
}

impl CliError {
    pub fn code(&self) -> &str {
        match self {
            CliError::Usage(_) => "USAGE",
            CliError::Api { code, .. } => code,
            CliError::Transport(_) => "TRANSPORT",
            CliError::Io(_) => "IO",
            CliError::Timeout(_) => "TIMEOUT",
            CliError::OperationFailed(_) => "OPERATION_FAILED",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn to_json(&self) -> Value {
        let mut v = json!({"code": self.code(), "message": self.to_string()});
        if let CliError::Api { details: Some(d), message, .. } = self {
            v["details"] = d.clone();
            v["message"] = Value::String(message.clone());
        }
        v
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Each command and the endpoints it calls, as `(command, method, path)`.
pub const COMMAND_ENDPOINTS: &[(&str, &str, &str)] = &[
    ("datasource create", "POST", "/v1/datasources"),
    ("datasource list", "GET", "/v1/datasources"),
    ("datasource show", "GET", "/v1/datasources/{id}"),
    ("datasource crawl", "POST", "/v1/datasources/{id}/crawl"),
    ("datasource view", "GET", "/v1/datasources/{id}/view"),
    ("dataset create-from-file", "POST", "/v1/datasets"),
    ("dataset create-from-query", "POST", "/v1/datasets"),
    ("dataset create-from-search", "POST", "/v1/search"),
    ("dataset create-from-search", "POST", "/v1/datasets"),
    ("dataset list", "GET", "/v1/datasets"),
    ("dataset show", "GET", "/v1/datasets/{id}"),
    ("dataset add-version", "POST", "/v1/datasets/{id}/versions"),
    ("dataset lineage", "GET", "/v1/datasets/{id}/lineage"),
    ("annotation attach", "POST", "/v1/datasets/{id}/versions/{v}/annotations"),
    ("annotation list", "GET", "/v1/datasets/{id}/versions/{v}/annotations"),
    ("annotation export", "GET", "/v1/datasets/{id}/versions/{v}/annotations/{aid}/export"),
    ("search", "POST", "/v1/search"),
    ("op show", "GET", "/v1/operations/{id}"),
    ("op wait", "GET", "/v1/operations/{id}"),
    ("media get", "GET", "/v1/media/{hash}"),
];

#[derive(Debug, Parser)]
#[command(name = "metapix", version, about = "Manage datasources, datasets, annotations and search")]
pub struct Cli {
    /// Print raw API responses as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// API base URL, e.g. http://127.0.0.1:8080.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// API token sent as X-Api-Token.
    #[arg(long, global = true)]
    pub token: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Register, crawl and inspect datasources.
    #[command(subcommand)]
    Datasource(DatasourceCmd),
    /// Create, version and inspect datasets.
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Attach, list and export annotations of a dataset version.
    #[command(subcommand)]
    Annotation(AnnotationCmd),
    /// Semantic search over a datasource or dataset version.
    Search(SearchArgs),
    /// Inspect long-running operations.
    #[command(subcommand)]
    Op(OpCmd),
    /// Fetch stored media bytes.
    #[command(subcommand)]
    Media(MediaCmd),
}

#[derive(Debug, Args)]
pub struct PageArgs {
    #[arg(long)]
    pub offset: Option<usize>,
    #[arg(long)]
    pub limit: Option<usize>,
}

impl PageArgs {
    fn query(&self) -> Vec<(&'static str, String)> {
        let mut q = Vec::new();
        if let Some(o) = self.offset {
            q.push(("offset", o.to_string()));
        }
        if let Some(l) = self.limit {
            q.push(("limit", l.to_string()));
        }
        q
    }
}

#[derive(Debug, Subcommand)]
pub enum DatasourceCmd {
    /// Register a datasource and run its first crawl.
    Create {
        #[arg(long)]
        name: String,
        /// Storage location (directory or remote URI); repeatable.
        #[arg(long = "location", required = true)]
        locations: Vec<String>,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long)]
        data_owner: Option<String>,
        #[arg(long)]
        organization: Option<String>,
        /// UNRESTRICTED or GATED.
        #[arg(long, default_value = "UNRESTRICTED")]
        access_level: String,
        /// Role allowed to read a gated datasource; repeatable.
        #[arg(long = "role")]
        roles: Vec<String>,
        /// CLOUD or ON_PREM.
        #[arg(long, default_value = "ON_PREM")]
        storage_system: String,
        #[arg(long)]
        embeddings: bool,
        /// JSONL or CSV attributes file loaded after the first crawl.
        #[arg(long)]
        attributes: Option<PathBuf>,
        #[arg(long)]
        media_uri_field: Option<String>,
        #[arg(long = "region")]
        regions: Vec<String>,
    },
    List(PageArgs),
    Show { id: String },
    /// Start an asynchronous rescan; prints the operation id.
    Crawl {
        id: String,
        #[arg(long)]
        attributes: Option<PathBuf>,
    },
    /// Rows of the extended-attribute view, optionally filtered.
    View {
        id: String,
        #[arg(long)]
        query: Option<String>,
        #[command(flatten)]
        page: PageArgs,
    },
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value = "")]
    pub description: String,
    #[arg(long = "tag")]
    pub tags: Vec<String>,
    #[arg(long)]
    pub license: Option<String>,
    /// PUBLIC or RESTRICTED.
    #[arg(long)]
    pub visibility: Option<String>,
    #[arg(long = "role")]
    pub roles: Vec<String>,
    /// Override whether the dataset gets embeddings.
    #[arg(long)]
    pub embeddings: Option<bool>,
}

impl SpecArgs {
    fn body(&self, source: &str) -> Value {
        let mut b = json!({
            "source": source,
            "name": self.name,
            "description": self.description,
            "tags": self.tags,
            "roles": self.roles,
        });
        if let Some(l) = &self.license {
            b["license"] = json!(l);
        }
        if let Some(v) = &self.visibility {
            b["visibility"] = json!(v.to_ascii_uppercase());
        }
        if let Some(e) = self.embeddings {
            b["embeddings_enabled"] = json!(e);
        }
        b
    }
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Import a JSONL or COCO manifest.
    CreateFromFile {
        #[command(flatten)]
        spec: SpecArgs,
        /// jsonl or coco.
        #[arg(long)]
        format: String,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory relative media paths resolve against.
        #[arg(long)]
        base_dir: Option<PathBuf>,
    },
    /// Materialize the rows of a datasource view matching a query.
    CreateFromQuery {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        datasource: String,
        #[arg(long)]
        query: String,
    },
    /// Keep chosen hits of a search as a new dataset.
    CreateFromSearch {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        scope: String,
        #[arg(long)]
        query: String,
        /// Select the top N hits.
        #[arg(long, conflicts_with = "records")]
        top: Option<usize>,
        /// Select hits by record id; repeatable.
        #[arg(long = "record")]
        records: Vec<String>,
        #[arg(long, default_value = "APPROX")]
        mode: String,
    },
    List(PageArgs),
    Show { id: String },
    /// Derive the next version from the latest one.
    AddVersion {
        id: String,
        /// JSON changeset `{add, remove, provenance}`.
        #[arg(long)]
        changeset: Option<PathBuf>,
        /// Remove every reference to this content hash; repeatable.
        #[arg(long = "remove-hash")]
        remove_hashes: Vec<String>,
    },
    Lineage { id: String },
}

#[derive(Debug, Subcommand)]
pub enum AnnotationCmd {
    Attach {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "v1")]
        version: String,
        /// COCO, YOLO, JSONL or QUERY.
        #[arg(long = "type")]
        kind: String,
        #[arg(long)]
        name: String,
        /// `key=value`; values that parse as JSON objects are sent as such.
        #[arg(long = "property")]
        properties: Vec<String>,
        #[arg(long)]
        default: bool,
    },
    List {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "v1")]
        version: String,
        #[command(flatten)]
        page: PageArgs,
    },
    Export {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "v1")]
        version: String,
        /// Annotation id; the version default when omitted.
        #[arg(long, default_value = "default")]
        annotation: String,
        /// coco, yolo or jsonl.
        #[arg(long, default_value = "coco")]
        format: String,
        /// File (coco, jsonl) or directory (yolo) to write.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// `ds:<name>` or `dataset:<name>[@<version>]`.
    #[arg(long)]
    pub scope: String,
    #[arg(long)]
    pub query: String,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    /// EXACT or APPROX.
    #[arg(long, default_value = "APPROX")]
    pub mode: String,
}

#[derive(Debug, Subcommand)]
pub enum OpCmd {
    Show { id: String },
    /// Poll once a second until the operation finishes.
    Wait {
        id: String,
        /// Seconds before giving up.
        #[arg(long, default_value_t = 300)]
        timeout: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum MediaCmd {
    Get {
        hash: String,
        #[arg(long)]
        output: PathBuf,
    },
}

/// A command's raw response and its table rendering.
struct Output {
    raw: Value,
    text: String,
}

impl Output {
    fn new(raw: Value, text: String) -> Self {
        Self { raw, text }
    }
}

fn seg(s: &str) -> String {
    s.replace('%', "%25").replace('/', "%2F").replace('?', "%3F").replace('#', "%23")
}

fn absolute(p: &Path) -> String {
    std::fs::canonicalize(p)
        .unwrap_or_else(|_| p.to_path_buf())
        .to_string_lossy()
        .into_owned()
}

fn parse_property(kv: &str) -> Result<(String, Value), CliError> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("property {kv:?} is not key=value")))?;
    let value = match serde_json::from_str::<Value>(v) {
        Ok(j @ (Value::Object(_) | Value::Array(_) | Value::Null)) => j,
        _ => Value::String(v.to_string()),
    };
    Ok((k.to_string(), value))
}

fn execute(client: &Client, command: Command) -> Result<Output, CliError> {
    match command {
        Command::Datasource(cmd) => datasource(client, cmd),
        Command::Dataset(cmd) => dataset(client, cmd),
        Command::Annotation(cmd) => annotation(client, cmd),
        Command::Search(a) => {
            let body = json!({"scope": a.scope, "query": a.query, "k": a.k, "mode": a.mode.to_ascii_uppercase()});
            let r = client.post("/v1/search", Some(&body))?;
            let text = render::hits(&r);
            Ok(Output::new(r, text))
        }
        Command::Op(OpCmd::Show { id }) => {
            let op = client.get(&format!("/v1/operations/{}", seg(&id)), &[])?;
            let text = render::operation(&op);
            Ok(Output::new(op, text))
        }
        Command::Op(OpCmd::Wait { id, timeout }) => {
            let deadline = Instant::now() + Duration::from_secs(timeout);
            loop {
                let op = client.get(&format!("/v1/operations/{}", seg(&id)), &[])?;
                match op["status"].as_str() {
                    Some("SUCCEEDED") => {
                        let text = render::operation(&op);
                        return Ok(Output::new(op, text));
                    }
                    Some("FAILED") => return Err(CliError::OperationFailed(render::operation(&op).trim_end().to_string())),
                    _ if Instant::now() >= deadline => return Err(CliError::Timeout(id)),
                    _ => std::thread::sleep(Duration::from_secs(1)),
                }
            }
        }
        Command::Media(MediaCmd::Get { hash, output }) => {
            let bytes = client.get_bytes(&format!("/v1/media/{}", seg(&hash)))?;
            std::fs::write(&output, &bytes)?;
            let raw = json!({"content_hash": hash, "bytes": bytes.len(), "output": output});
            Ok(Output::new(raw, format!("wrote {} bytes to {}\n", bytes.len(), output.display())))
        }
    }
}

fn datasource(client: &Client, cmd: DatasourceCmd) -> Result<Output, CliError> {
    match cmd {
        DatasourceCmd::Create {
            name,
            locations,
            description,
            data_owner,
            organization,
            access_level,
            roles,
            storage_system,
            embeddings,
            attributes,
            media_uri_field,
            regions,
        } => {
            let locations: Vec<String> = locations
                .iter()
                .map(|l| if Path::new(l).exists() { absolute(Path::new(l)) } else { l.clone() })
                .collect();
            let mut body = json!({
                "name": name,
                "description": description,
                "storage_locations": locations,
                "access_level": access_level.to_ascii_uppercase(),
                "roles": roles,
                "storage_system": storage_system.to_ascii_uppercase(),
                "embeddings_enabled": embeddings,
                "region": regions,
            });
            if let Some(o) = data_owner {
                body["data_owner"] = json!(o);
            }
            if let Some(o) = organization {
                body["organization"] = json!(o);
            }
            if let Some(a) = attributes {
                body["attributes_file"] = json!(absolute(&a));
            }
            if let Some(f) = media_uri_field {
                body["media_uri_field"] = json!(f);
            }
            let d = client.post("/v1/datasources", Some(&body))?;
            let text = format!(
                "created datasource {} ({}): {} media, operations {}\n",
                d["name"].as_str().unwrap_or("-"),
                d["id"].as_str().unwrap_or("-"),
                d["media_count"],
                d["operation_ids"]
            );
            Ok(Output::new(d, text))
        }
        DatasourceCmd::List(page) => {
            let r = client.get("/v1/datasources", &page.query())?;
            let text = render::datasources(&r);
            Ok(Output::new(r, text))
        }
        DatasourceCmd::Show { id } => {
            let d = client.get(&format!("/v1/datasources/{}", seg(&id)), &[])?;
            let text = render::datasource(&d);
            Ok(Output::new(d, text))
        }
        DatasourceCmd::Crawl { id, attributes } => {
            let body = attributes.map(|a| json!({"attributes_file": absolute(&a)}));
            let r = client.post(&format!("/v1/datasources/{}/crawl", seg(&id)), body.as_ref())?;
            let text = format!("{}\n", r["operation_id"].as_str().unwrap_or("-"));
            Ok(Output::new(r, text))
        }
        DatasourceCmd::View { id, query, page } => {
            let mut q = page.query();
            if let Some(query) = query {
                q.push(("query", query));
            }
            let r = client.get(&format!("/v1/datasources/{}/view", seg(&id)), &q)?;
            let text = render::view(&r);
            Ok(Output::new(r, text))
        }
    }
}

fn dataset(client: &Client, cmd: DatasetCmd) -> Result<Output, CliError> {
    let created = |d: Value| {
        let text = render::dataset_created(&d);
        Output::new(d, text)
    };
    match cmd {
        DatasetCmd::CreateFromFile {
            spec,
            format,
            manifest,
            base_dir,
        } => {
            let mut body = spec.body("file");
            body["format"] = json!(format.to_ascii_uppercase());
            body["manifest_path"] = json!(absolute(&manifest));
            if let Some(b) = base_dir {
                body["base_dir"] = json!(absolute(&b));
            }
            Ok(created(client.post("/v1/datasets", Some(&body))?))
        }
        DatasetCmd::CreateFromQuery { spec, datasource, query } => {
            let mut body = spec.body("query");
            body["datasource"] = json!(datasource);
            body["query"] = json!(query);
            Ok(created(client.post("/v1/datasets", Some(&body))?))
        }
        DatasetCmd::CreateFromSearch {
            spec,
            scope,
            query,
            top,
            records,
            mode,
        } => {
            let records = match top {
                Some(n) => {
                    let body = json!({"scope": scope, "query": query, "k": n, "mode": mode.to_ascii_uppercase()});
                    let r = client.post("/v1/search", Some(&body))?;
                    r["hits"]
                        .as_array()
                        .into_iter()
                        .flatten()
                        .filter_map(|h| h["record_id"].as_str().map(str::to_string))
                        .collect()
                }
                None if records.is_empty() => {
                    return Err(CliError::Usage("pass --top N or at least one --record".into()))
                }
                None => records,
            };
            let mut body = spec.body("search");
            body["scope"] = json!(scope);
            body["query"] = json!(query);
            body["selection"] = Value::Array(records.iter().map(|r| json!({"record_id": r})).collect());
            Ok(created(client.post("/v1/datasets", Some(&body))?))
        }
        DatasetCmd::List(page) => {
            let r = client.get("/v1/datasets", &page.query())?;
            let text = render::datasets(&r);
            Ok(Output::new(r, text))
        }
        DatasetCmd::Show { id } => {
            let d = client.get(&format!("/v1/datasets/{}", seg(&id)), &[])?;
            let text = render::dataset(&d);
            Ok(Output::new(d, text))
        }
        DatasetCmd::AddVersion {
            id,
            changeset,
            remove_hashes,
        } => {
            let mut change: Value = match changeset {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)?;
                    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
                }
                None => json!({}),
            };
            if !remove_hashes.is_empty() {
                let d = client.get(&format!("/v1/datasets/{}", seg(&id)), &[])?;
                let latest = d["versions"].as_array().and_then(|v| v.last()).cloned().unwrap_or(Value::Null);
                let mut remove = change["remove"].as_array().cloned().unwrap_or_default();
                for r in latest["media_refs"].as_array().into_iter().flatten() {
                    if r["content_hash"].as_str().is_some_and(|h| remove_hashes.iter().any(|x| x == h)) {
                        remove.push(r.clone());
                    }
                }
                change["remove"] = Value::Array(remove);
            }
            let v = client.post(&format!("/v1/datasets/{}/versions", seg(&id)), Some(&change))?;
            let text = format!(
                "created {}: {} media\n",
                v["label"].as_str().unwrap_or("-"),
                v["media_refs"].as_array().map_or(0, Vec::len)
            );
            Ok(Output::new(v, text))
        }
        DatasetCmd::Lineage { id } => {
            let l = client.get(&format!("/v1/datasets/{}/lineage", seg(&id)), &[])?;
            let text = render::lineage(&l);
            Ok(Output::new(l, text))
        }
    }
}

fn annotation(client: &Client, cmd: AnnotationCmd) -> Result<Output, CliError> {
    match cmd {
        AnnotationCmd::Attach {
            dataset,
            version,
            kind,
            name,
            properties,
            default,
        } => {
            let mut props = Map::new();
            for kv in &properties {
                let (k, v) = parse_property(kv)?;
                props.insert(k, v);
            }
            let body = json!({"type": kind.to_ascii_uppercase(), "name": name, "properties": props, "default": default});
            let path = format!("/v1/datasets/{}/versions/{}/annotations", seg(&dataset), seg(&version));
            let a = client.post(&path, Some(&body))?;
            let text = format!(
                "attached {} annotation {} ({}) to {dataset}@{version}{}\n",
                a["type"].as_str().unwrap_or("-"),
                a["name"].as_str().unwrap_or("-"),
                a["id"].as_str().unwrap_or("-"),
                if a["is_default"].as_bool() == Some(true) { " as default" } else { "" }
            );
            Ok(Output::new(a, text))
        }
        AnnotationCmd::List { dataset, version, page } => {
            let path = format!("/v1/datasets/{}/versions/{}/annotations", seg(&dataset), seg(&version));
            let r = client.get(&path, &page.query())?;
            let text = render::annotations(&r);
            Ok(Output::new(r, text))
        }
        AnnotationCmd::Export {
            dataset,
            version,
            annotation,
            format,
            output,
        } => {
            let path = format!(
                "/v1/datasets/{}/versions/{}/annotations/{}/export",
                seg(&dataset),
                seg(&version),
                seg(&annotation)
            );
            let r = client.get(&path, &[("format", format.to_ascii_lowercase())])?;
            let text = write_export(&r, output.as_deref())?;
            Ok(Output::new(r, text))
        }
    }
}

/// Writes an export to `output`, or returns it as text for stdout.
fn write_export(r: &Value, output: Option<&Path>) -> Result<String, CliError> {
    let content = &r["content"];
    match (r["format"].as_str(), output) {
        (Some("yolo"), Some(dir)) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("classes.txt"), content["classes"].as_str().unwrap_or(""))?;
            let files = content["files"].as_object().cloned().unwrap_or_default();
            for (name, text) in &files {
                std::fs::write(dir.join(name), text.as_str().unwrap_or(""))?;
            }
            Ok(format!("wrote classes.txt and {} label files to {}\n", files.len(), dir.display()))
        }
        (Some("yolo"), None) => {
            let mut out = format!("== classes.txt\n{}", content["classes"].as_str().unwrap_or(""));
            for (name, text) in content["files"].as_object().into_iter().flatten() {
                out.push_str(&format!("== {name}\n{}", text.as_str().unwrap_or("")));
            }
            Ok(out)
        }
        (Some("jsonl"), out) => {
            let text = content.as_str().unwrap_or("").to_string();
            match out {
                Some(p) => {
                    std::fs::write(p, &text)?;
                    Ok(format!("wrote {}\n", p.display()))
                }
                None => Ok(text),
            }
        }
        (_, out) => {
            let text = serde_json::to_string_pretty(content).unwrap_or_default() + "\n";
            match out {
                Some(p) => {
                    std::fs::write(p, &text)?;
                    Ok(format!("wrote {}\n", p.display()))
                }
                None => Ok(text),
            }
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return 2;
            }
            let _ = write!(out, "{rendered}");
            return 0;
        }
    };
    let json_mode = cli.json;
    let result = settings::home_file()
        .map_or(Ok(settings::FileSettings::default()), |p| settings::read_file(&p))
        .and_then(|file| settings::resolve(cli.endpoint, cli.token, |k| std::env::var(k).ok(), file))
        .and_then(|s| execute(&Client::new(&s.endpoint, &s.token), cli.command));
    match result {
        Ok(o) => {
            if json_mode {
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&o.raw).unwrap_or_default());
            } else {
                let _ = write!(out, "{}", o.text);
            }
            0
        }
        Err(e) => {
            if json_mode {
                let _ = writeln!(err, "{}", e.to_json());
            } else {
                let _ = writeln!(err, "error: {}: {e}", e.code());
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_table_command_exists() {
        let root = Cli::command();
        for (cmd, _, _) in COMMAND_ENDPOINTS {
            let mut c = &root;
            for part in cmd.split(' ') {
                c = c
                    .get_subcommands()
                    .find(|s| s.get_name() == part)
                    .unwrap_or_else(|| panic!("no command {cmd}"));
            }
        }
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run(["metapix", "frobnicate"], &mut out, &mut err), 2);
        assert!(String::from_utf8_lossy(&err).contains("Usage"));
        assert_eq!(run(["metapix", "--help"], &mut out, &mut err), 0);
    }

    #[test]
    fn properties_parse_json_objects() {
        assert_eq!(parse_property("root_dir=/data").unwrap().1, json!("/data"));
        assert_eq!(parse_property("info={\"a\":1}").unwrap().1, json!({"a": 1}));
        assert!(parse_property("novalue").is_err());
    }
}
