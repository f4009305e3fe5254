use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use super::prompt::{Instruction, PromptPair};
use super::EiamBackend;
use crate::container::{self, Kind};
use crate::error::{Error, Result};
use crate::snis::Inpainter;
use crate::volume::{EditMask, LatentVolume};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub const CAPTION_URL_VAR: &str = "EIAM_CAPTION_URL";
pub const REASON_URL_VAR: &str = "EIAM_REASON_URL";
pub const SEGMENT_URL_VAR: &str = "EIAM_SEGMENT_URL";
pub const INPAINT_URL_VAR: &str = "EIAM_INPAINT_URL";

/// JSON bodies shared by the client and the mock server.
pub(crate) mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Serialize, Deserialize)]
    pub struct CaptionRequest {
        pub video_ref: String,
    }

    #[derive(Debug, Serialize, Deserialize)]
    pub struct CaptionResponse {
        pub prompt: String,
    }

    #[derive(Debug, Serialize, Deserialize)]
    pub struct ReasonRequest {
        pub source_prompt: String,
        pub instruction: String,
    }

    #[derive(Debug, Serialize, Deserialize)]
    pub struct ReasonResponse {
        pub target_prompt: String,
        pub objects: Vec<String>,
    }

    #[derive(Debug, Serialize, Deserialize)]
    pub struct SegmentRequest {
        pub video_ref: String,
        pub objects: Vec<String>,
    }

    /// Base64-encoded containers.
    #[derive(Debug, Serialize, Deserialize)]
    pub struct InpaintRequest {
        pub latent: String,
        pub mask: String,
    }

    #[derive(Debug, Serialize, Deserialize)]
    pub struct ErrorBody {
        pub kind: String,
        pub message: String,
    }
}

/// Appends `path` when `url` names only a host.
fn with_default_path(url: &str, path: &str) -> String {
    let trimmed = url.trim_end_matches('/');
    let after_scheme = trimmed.split_once("://").map_or(trimmed, |(_, rest)| rest);
    if after_scheme.contains('/') {
        trimmed.to_string()
    } else {
        format!("{trimmed}{path}")
    }
}

/// Full URLs of the three analysis services.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoints {
    pub caption: String,
    pub reason: String,
    pub segment: String,
}

impl Endpoints {
    /// All three routes on one server.
    pub fn on_host(base: &str) -> Self {
        Endpoints {
            caption: with_default_path(base, "/caption"),
            reason: with_default_path(base, "/reason"),
            segment: with_default_path(base, "/segment"),
        }
    }

    /// Reads `EIAM_CAPTION_URL`, `EIAM_REASON_URL` and `EIAM_SEGMENT_URL`.
    /// A value without a path gets the default route appended.
    pub fn from_env() -> Result<Self> {
        let var = |name: &str, path: &str| {
            std::env::var(name)
                .map(|v| with_default_path(&v, path))
                .map_err(|_| Error::Config(format!("environment variable {name} is not set")))
        };
        Ok(Endpoints {
            caption: var(CAPTION_URL_VAR, "/caption")?,
            reason: var(REASON_URL_VAR, "/reason")?,
            segment: var(SEGMENT_URL_VAR, "/segment")?,
        })
    }
}

#[derive(Debug, Clone)]
struct Transport {
    client: Client,
}

impl Transport {
    fn new(timeout: Duration) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("cannot build http client: {e}")))?;
        Ok(Transport { client })
    }

    /// POSTs a JSON body, retrying once on a transport failure, and returns
    /// the body of a 2xx response.
    fn post(&self, url: &str, body: &impl Serialize) -> Result<Vec<u8>> {
        let payload = serde_json::to_vec(body).expect("request bodies serialize");
        let send = || {
            self.client
                .post(url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(payload.clone())
                .send()
        };
        let response = match send() {
            Ok(r) => r,
            Err(_) => send().map_err(|e| Error::Transport {
                endpoint: url.to_string(),
                message: e.to_string(),
            })?,
        };
        let status = response.status();
        let bytes = response
            .bytes()
            .map_err(|e| Error::Transport {
                endpoint: url.to_string(),
                message: e.to_string(),
            })?
            .to_vec();
        if status.is_success() {
            Ok(bytes)
        } else {
            Err(service_error(url, status, &bytes))
        }
    }

    fn post_json<T: DeserializeOwned>(&self, url: &str, body: &impl Serialize) -> Result<T> {
        let bytes = self.post(url, body)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Protocol(format!("{url}: malformed response: {e}")))
    }
}

fn service_error(url: &str, status: StatusCode, body: &[u8]) -> Error {
    match serde_json::from_slice::<wire::ErrorBody>(body) {
        Ok(err) => match err.kind.as_str() {
            "analysis" => Error::Analysis(err.message),
            "segmentation" => Error::Segmentation(err.message),
            _ => Error::Protocol(format!("{url}: {status}: {}", err.message)),
        },
        Err(_) => Error::Protocol(format!("{url}: unexpected status {status}")),
    }
}

/// Remote analysis services speaking the JSON protocol of [`serve_mock`](super::serve_mock).
#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoints: Endpoints,
    transport: Transport,
}

impl HttpBackend {
    pub fn new(endpoints: Endpoints) -> Result<Self> {
        Self::with_timeout(endpoints, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(endpoints: Endpoints, timeout: Duration) -> Result<Self> {
        Ok(HttpBackend {
            endpoints,
            transport: Transport::new(timeout)?,
        })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(Endpoints::from_env()?)
    }

    pub fn endpoints(&self) -> &Endpoints {
        &self.endpoints
    }
}

impl EiamBackend for HttpBackend {
    fn describe_source(&self, video_ref: &str) -> Result<String> {
        let url = &self.endpoints.caption;
        let resp: wire::CaptionResponse = self.transport.post_json(
            url,
            &wire::CaptionRequest {
                video_ref: video_ref.to_string(),
            },
        )?;
        if resp.prompt.trim().is_empty() {
            return Err(Error::Protocol(format!("{url}: empty caption")));
        }
        Ok(resp.prompt)
    }

    fn derive_target(&self, source_prompt: &str, instruction: &Instruction) -> Result<PromptPair> {
        let url = &self.endpoints.reason;
        let resp: wire::ReasonResponse = self.transport.post_json(
            url,
            &wire::ReasonRequest {
                source_prompt: source_prompt.to_string(),
                instruction: instruction.text().to_string(),
            },
        )?;
        if resp.objects.iter().all(|o| o.trim().is_empty()) {
            return Err(Error::Analysis(format!("{url}: no objects extracted")));
        }
        Ok(PromptPair {
            source: source_prompt.to_string(),
            target: resp.target_prompt,
            objects: resp.objects,
        })
    }

    fn segment_objects(&self, video_ref: &str, objects: &[String]) -> Result<EditMask> {
        let url = &self.endpoints.segment;
        let bytes = self.transport.post(
            url,
            &wire::SegmentRequest {
                video_ref: video_ref.to_string(),
                objects: objects.to_vec(),
            },
        )?;
        decode_strict_mask(&bytes).map_err(|e| Error::Protocol(format!("{url}: {e}")))
    }
}

/// A kind-1 container whose values are exactly 0 or 1.
fn decode_strict_mask(bytes: &[u8]) -> Result<EditMask> {
    let (header, values) = container::decode_raw(bytes)?;
    if header.kind != Kind::Mask || header.shape.channels != 1 {
        return Err(Error::Format(
            "segmentation response is not a single-channel mask".into(),
        ));
    }
    if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Format(format!("mask value {v} is not 0 or 1")));
    }
    EditMask::binarize(header.shape.plane_shape(), &values)
}

/// External inpainting over `POST /inpaint`.
#[derive(Debug, Clone)]
pub struct HttpInpainter {
    url: String,
    transport: Transport,
}

impl HttpInpainter {
    pub fn new(url: &str) -> Result<Self> {
        Ok(HttpInpainter {
            url: with_default_path(url, "/inpaint"),
            transport: Transport::new(DEFAULT_TIMEOUT)?,
        })
    }

    /// Uses `EIAM_INPAINT_URL`.
    pub fn from_env() -> Result<Self> {
        let url = std::env::var(INPAINT_URL_VAR)
            .map_err(|_| Error::Config(format!("environment variable {INPAINT_URL_VAR} is not set")))?;
        Self::new(&url)
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Inpainter for HttpInpainter {
    fn inpaint(&self, frames: &LatentVolume, mask: &EditMask) -> Result<LatentVolume> {
        let body = wire::InpaintRequest {
            latent: BASE64.encode(container::encode_latent(frames)?),
            mask: BASE64.encode(container::encode_mask(mask)),
        };
        let bytes = self.transport.post(&self.url, &body)?;
        match container::decode(&bytes) {
            Ok(container::Container::Latent(v)) => Ok(v),
            Ok(_) => Err(Error::Protocol(format!("{}: expected a latent container", self.url))),
            Err(e) => Err(Error::Protocol(format!("{}: {e}", self.url))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_paths() {
        assert_eq!(with_default_path("http://h:1", "/caption"), "http://h:1/caption");
        assert_eq!(with_default_path("http://h:1/", "/caption"), "http://h:1/caption");
        assert_eq!(with_default_path("http://h:1/v1/cap", "/caption"), "http://h:1/v1/cap");
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        // port 9 on loopback has no listener
        let backend =
            HttpBackend::with_timeout(Endpoints::on_host("http://127.0.0.1:9"), Duration::from_secs(2)).unwrap();
        match backend.describe_source("x") {
            Err(Error::Transport { endpoint, .. }) => assert_eq!(endpoint, "http://127.0.0.1:9/caption"),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn strict_mask_decoding() {
        let shape = crate::volume::Shape::new(1, 1, 2, 2).unwrap();
        let latent = LatentVolume::filled(shape, 0.7);
        assert!(decode_strict_mask(&container::encode_latent(&latent).unwrap()).is_err());
        let mask = EditMask::from_vec(shape.plane_shape(), vec![0, 1, 1, 0]).unwrap();
        assert_eq!(decode_strict_mask(&container::encode_mask(&mask)).unwrap(), mask);
        let plane = crate::volume::PlaneField::filled(shape.plane_shape(), 0.7);
        assert!(decode_strict_mask(&container::encode_plane(&plane).unwrap()).is_err());
    }
}
