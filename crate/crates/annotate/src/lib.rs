//! Local HTTP backend for the hidden-region annotation tool.
//!
//! | Method | Path                        | Body / response                          |
//! |--------|-----------------------------|------------------------------------------|
//! | GET    | `/api/images`               | JSON list of `{image_id, status, height, width, mask_version}` |
//! | GET    | `/api/images/{id}`          | image PNG, bytes as stored               |
//! | GET    | `/api/images/{id}/srmask`   | real (specular) mask PNG                 |
//! | GET    | `/api/images/{id}/mask`     | current hidden mask PNG (draft first)    |
//! | POST   | `/api/images/{id}/mask`     | hidden mask PNG; `?commit=false` stores a draft |
//!
//! Masks use 0 for hidden pixels and 255 for kept ones. Everything else under
//! `/` is served from the UI bundle directory, when one is configured.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use colpo_core::dataset::{validate_hidden_mask, Manifest};
use colpo_core::imaging::BinaryMask;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("unknown image `{0}`")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("{message}")]
    Rejected { message: String, offending_pixels: Option<usize> },
    #[error(transparent)]
    Core(#[from] colpo_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl IntoResponse for AnnotateError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, body) = match self {
            AnnotateError::NotFound(_) => (StatusCode::NOT_FOUND, json!({"error": "not_found", "message": message})),
            AnnotateError::BadRequest(_) => (StatusCode::BAD_REQUEST, json!({"error": "bad_request", "message": message})),
            AnnotateError::Rejected { offending_pixels, .. } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": "invalid_mask", "message": message, "offending_pixels": offending_pixels}),
            ),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal", "message": message})),
        };
        (status, Json(body)).into_response()
    }
}

type Result<T, E = AnnotateError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Unannotated,
    Draft,
    Committed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub status: Status,
    pub height: usize,
    pub width: usize,
    pub mask_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub image_id: String,
    pub status: Status,
    pub mask_version: u64,
    pub hidden_pixels: usize,
}

/// One annotation session over a corpus manifest.
#[derive(Debug)]
pub struct Session {
    pub session_id: String,
    manifest: RwLock<Manifest>,
    dims: HashMap<String, (usize, usize)>,
    drafts: Mutex<HashSet<String>>,
    image_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    ui_dir: Option<PathBuf>,
}

fn poisoned<T>(_: T) -> AnnotateError {
    AnnotateError::Internal("lock poisoned".into())
}

/// Writes through a sibling temporary file so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn hidden_rel(image_id: &str) -> String {
    format!("hidden/{image_id}.png")
}

fn draft_rel(image_id: &str) -> String {
    format!("hidden/drafts/{image_id}.png")
}

impl Session {
    /// Loads the manifest and reads every image header. A missing or
    /// unreadable manifest is an error.
    pub fn open(manifest_path: impl AsRef<Path>, ui_dir: Option<PathBuf>) -> Result<Self> {
        let manifest = Manifest::load(manifest_path)?;
        let mut dims = HashMap::new();
        for r in &manifest.records {
            let (w, h) = image::image_dimensions(manifest.resolve(&r.image_path))
                .map_err(|e| AnnotateError::Core(e.into()))?;
            dims.insert(r.image_id.clone(), (h as usize, w as usize));
        }
        let drafts = manifest
            .records
            .iter()
            .filter(|r| manifest.resolve(&draft_rel(&r.image_id)).exists())
            .map(|r| r.image_id.clone())
            .collect();
        let session = Self {
            session_id: format!("{}-{}", std::process::id(), manifest.records.len()),
            manifest: RwLock::new(manifest),
            dims,
            drafts: Mutex::new(drafts),
            image_locks: Mutex::new(HashMap::new()),
            ui_dir,
        };
        for (id, err) in session.revalidate()? {
            warn!("committed mask of {id} no longer validates: {err}");
        }
        Ok(session)
    }

    fn manifest(&self) -> Result<std::sync::RwLockReadGuard<'_, Manifest>> {
        self.manifest.read().map_err(poisoned)
    }

    fn status(&self, m: &Manifest, image_id: &str) -> Result<Status> {
        let rec = m.find(image_id).ok_or_else(|| AnnotateError::NotFound(image_id.into()))?;
        Ok(if self.drafts.lock().map_err(poisoned)?.contains(image_id) {
            Status::Draft
        } else if rec.hidden_mask_paths.is_empty() {
            Status::Unannotated
        } else {
            Status::Committed
        })
    }

    pub fn list_images(&self) -> Result<Vec<ImageEntry>> {
        let m = self.manifest()?;
        m.records
            .iter()
            .map(|r| {
                let (height, width) = self.dims[&r.image_id];
                Ok(ImageEntry {
                    image_id: r.image_id.clone(),
                    status: self.status(&m, &r.image_id)?,
                    height,
                    width,
                    mask_version: r.mask_version,
                })
            })
            .collect()
    }

    fn read_file(&self, image_id: &str, pick: impl Fn(&colpo_core::dataset::ManifestRecord) -> Option<String>) -> Result<Vec<u8>> {
        let path = {
            let m = self.manifest()?;
            let rec = m.find(image_id).ok_or_else(|| AnnotateError::NotFound(image_id.into()))?;
            let rel = pick(rec).ok_or_else(|| AnnotateError::NotFound(format!("{image_id} has no such file")))?;
            m.resolve(&rel)
        };
        Ok(fs::read(path)?)
    }

    pub fn image_png(&self, image_id: &str) -> Result<Vec<u8>> {
        self.read_file(image_id, |r| Some(r.image_path.clone()))
    }

    pub fn sr_mask_png(&self, image_id: &str) -> Result<Vec<u8>> {
        self.read_file(image_id, |r| Some(r.real_mask_path.clone()))
    }

    /// The draft mask if one exists, else the committed one.
    pub fn hidden_mask_png(&self, image_id: &str) -> Result<Vec<u8>> {
        let draft = self.drafts.lock().map_err(poisoned)?.contains(image_id);
        self.read_file(image_id, |r| {
            if draft {
                Some(draft_rel(&r.image_id))
            } else {
                r.hidden_mask_paths.first().cloned()
            }
        })
    }

    fn image_lock(&self, image_id: &str) -> Result<Arc<Mutex<()>>> {
        let mut locks = self.image_locks.lock().map_err(poisoned)?;
        Ok(locks.entry(image_id.to_string()).or_default().clone())
    }

    /// Validates a painted mask and stores it, as a draft or committed into
    /// the manifest. Writes to one image are serialized; the manifest is
    /// replaced atomically.
    pub fn submit_mask(&self, image_id: &str, png: &[u8], commit: bool) -> Result<SubmitOutcome> {
        let record = self
            .manifest()?
            .find(image_id)
            .cloned()
            .ok_or_else(|| AnnotateError::NotFound(image_id.into()))?;
        let mask = BinaryMask::decode_png(png).map_err(|e| AnnotateError::BadRequest(e.to_string()))?;

        let lock = self.image_lock(image_id)?;
        let _guard = lock.lock().map_err(poisoned)?;
        let corpus_image = self.manifest()?.load_image(&record)?;
        validate_hidden_mask(&mask, &corpus_image).map_err(|e| match e {
            colpo_core::Error::HiddenOverlapsSr { count } => AnnotateError::Rejected {
                message: e.to_string(),
                offending_pixels: Some(count),
            },
            colpo_core::Error::DimensionMismatch { .. } => AnnotateError::Rejected {
                message: e.to_string(),
                offending_pixels: None,
            },
            other => other.into(),
        })?;
        let bytes = mask.encode_png()?;
        let hidden_pixels = mask.count_zeros();

        if !commit {
            let path = self.manifest()?.resolve(&draft_rel(image_id));
            write_atomic(&path, &bytes)?;
            self.drafts.lock().map_err(poisoned)?.insert(image_id.to_string());
            return Ok(SubmitOutcome {
                image_id: image_id.into(),
                status: Status::Draft,
                mask_version: record.mask_version,
                hidden_pixels,
            });
        }

        let mut m = self.manifest.write().map_err(poisoned)?;
        write_atomic(&m.resolve(&hidden_rel(image_id)), &bytes)?;
        let idx = m
            .records
            .iter()
            .position(|r| r.image_id == image_id)
            .ok_or_else(|| AnnotateError::NotFound(image_id.into()))?;
        let previous = m.records[idx].clone();
        m.records[idx].hidden_mask_paths = vec![hidden_rel(image_id)];
        m.records[idx].mask_version += 1;
        if let Err(e) = m.save() {
            m.records[idx] = previous;
            return Err(e.into());
        }
        let version = m.records[idx].mask_version;
        drop(m);
        if self.drafts.lock().map_err(poisoned)?.remove(image_id) {
            let draft = self.manifest()?.resolve(&draft_rel(image_id));
            let _ = fs::remove_file(draft);
        }
        info!("committed hidden mask for {image_id} (version {version}, {hidden_pixels} hidden pixels)");
        Ok(SubmitOutcome {
            image_id: image_id.into(),
            status: Status::Committed,
            mask_version: version,
            hidden_pixels,
        })
    }

    /// Re-checks every committed mask against its image; returns failures.
    pub fn revalidate(&self) -> Result<Vec<(String, String)>> {
        let m = self.manifest()?;
        let mut failures = Vec::new();
        for r in &m.records {
            if r.hidden_mask_paths.is_empty() {
                continue;
            }
            let outcome = m.load_image(r).and_then(|img| {
                let mask = m.load_hidden(r)?.expect("non-empty paths");
                validate_hidden_mask(&mask, &img)
            });
            if let Err(e) = outcome {
                failures.push((r.image_id.clone(), e.to_string()));
            }
        }
        Ok(failures)
    }
}

type Shared = Arc<Session>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AnnotateError::Internal(e.to_string()))?
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn list_images(State(s): State<Shared>) -> Result<Json<Vec<ImageEntry>>> {
    Ok(Json(blocking(move || s.list_images()).await?))
}

async fn get_image(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response> {
    Ok(png(blocking(move || s.image_png(&id)).await?))
}

async fn get_sr_mask(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response> {
    Ok(png(blocking(move || s.sr_mask_png(&id)).await?))
}

async fn get_hidden_mask(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Response> {
    Ok(png(blocking(move || s.hidden_mask_png(&id)).await?))
}

#[derive(Debug, Deserialize)]
struct SubmitParams {
    commit: Option<bool>,
}

async fn post_mask(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(params): Query<SubmitParams>,
    body: Bytes,
) -> Result<Json<SubmitOutcome>> {
    let commit = params.commit.unwrap_or(true);
    Ok(Json(blocking(move || s.submit_mask(&id, &body, commit)).await?))
}

pub fn router(session: Shared) -> Router {
    let ui = session.ui_dir.clone();
    let api = Router::new()
        .route("/api/images", get(list_images))
        .route("/api/images/{id}", get(get_image))
        .route("/api/images/{id}/srmask", get(get_sr_mask))
        .route("/api/images/{id}/mask", get(get_hidden_mask).post(post_mask))
        .with_state(session);
    match ui {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves `session` on `addr` until the process is stopped.
pub async fn serve(session: Session, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!("annotation service listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(session))).await
}
