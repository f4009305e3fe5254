use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::prompt::{template_rewrite, Instruction, PromptPair};
use super::EiamBackend;
use crate::container;
use crate::error::{Error, Result};
use crate::volume::EditMask;

const CAPTIONS_FILE: &str = "captions.json";
const MASKS_DIR: &str = "masks";

/// Fixture data for the mock backend.
///
/// On disk: `captions.json` maps video refs to captions, and
/// `masks/<video_ref>/<object>.latf` holds one mask per object.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fixtures {
    pub captions: BTreeMap<String, String>,
    pub masks: BTreeMap<(String, String), EditMask>,
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && name != "." && name != ".." && !name.contains(['/', '\\']) && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::Format(format!("fixture name `{name}` is not a plain file name")))
    }
}

impl Fixtures {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let captions_path = dir.join(CAPTIONS_FILE);
        let text = fs::read_to_string(&captions_path).map_err(|e| Error::io(&captions_path, e))?;
        let captions: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", captions_path.display())))?;

        let mut masks = BTreeMap::new();
        let masks_dir = dir.join(MASKS_DIR);
        if masks_dir.is_dir() {
            for video in read_dir_sorted(&masks_dir)? {
                if !video.is_dir() {
                    continue;
                }
                let video_ref = file_name(&video)?;
                for file in read_dir_sorted(&video)? {
                    if file.extension().and_then(|e| e.to_str()) != Some("latf") {
                        continue;
                    }
                    let object = file
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .ok_or_else(|| Error::Format(format!("bad fixture name {}", file.display())))?
                        .to_string();
                    masks.insert((video_ref.clone(), object), container::read_mask(&file)?);
                }
            }
        }
        Ok(Fixtures { captions, masks })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let captions = serde_json::to_string_pretty(&self.captions).expect("string map serializes");
        let path = dir.join(CAPTIONS_FILE);
        fs::write(&path, captions + "\n").map_err(|e| Error::io(&path, e))?;
        for ((video, object), mask) in &self.masks {
            check_name(video)?;
            check_name(object)?;
            let sub = dir.join(MASKS_DIR).join(video);
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            container::write_mask(sub.join(format!("{object}.latf")), mask)?;
        }
        Ok(())
    }
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn file_name(path: &Path) -> Result<String> {
    path.file_name()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Format(format!("bad fixture path {}", path.display())))
}

/// Deterministic backend answering from [`Fixtures`].
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    fixtures: Fixtures,
}

impl MockBackend {
    pub fn new(fixtures: Fixtures) -> Self {
        MockBackend { fixtures }
    }

    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        Fixtures::load(dir).map(Self::new)
    }

    pub fn fixtures(&self) -> &Fixtures {
        &self.fixtures
    }
}

impl EiamBackend for MockBackend {
    fn describe_source(&self, video_ref: &str) -> Result<String> {
        self.fixtures
            .captions
            .get(video_ref)
            .cloned()
            .ok_or_else(|| Error::Analysis(format!("no caption fixture for `{video_ref}`")))
    }

    fn derive_target(&self, source_prompt: &str, instruction: &Instruction) -> Result<PromptPair> {
        template_rewrite(source_prompt, instruction)
    }

    fn segment_objects(&self, video_ref: &str, objects: &[String]) -> Result<EditMask> {
        let (first, rest) = objects
            .split_first()
            .ok_or_else(|| Error::Segmentation("no objects to segment".into()))?;
        let lookup = |object: &String| {
            self.fixtures
                .masks
                .get(&(video_ref.to_string(), object.clone()))
                .ok_or_else(|| Error::Segmentation(format!("no mask for `{object}` in `{video_ref}`")))
        };
        let mut mask = lookup(first)?.clone();
        for object in rest {
            mask = mask.union(lookup(object)?)?;
        }
        Ok(mask)
    }
}
