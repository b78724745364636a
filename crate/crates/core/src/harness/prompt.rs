use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dataset::Example;
use super::task::TaskSpec;
use crate::error::{Error, Result};
use crate::patchgrid::{blank_mask, tile, MaskJson, PatchMask, PruneConfig, DEFAULT_PATCH_SIZE, DEFAULT_TAU};
use crate::render::{apply_noise, decode_png, encode_png, render_table, render_text, NoiseSpec, PixelCanvas, Provenance, RenderSpec};

/// The only text an image-mode payload carries besides the style suffix.
pub const IMAGE_INSTRUCTION: &str = "Please follow the instruction in the image";

pub const COT_SUFFIX: &str = "Let's think step by step. After your reasoning, write the final answer on its own line as \"Answer: <answer>\".";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModalityMode {
    Text,
    Peap,
    Semi,
    PeapFast,
}

impl ModalityMode {
    pub const ALL: [ModalityMode; 4] = [Self::Text, Self::Peap, Self::Semi, Self::PeapFast];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Text => "text",
            Self::Peap => "peap",
            Self::Semi => "semi",
            Self::PeapFast => "peap-fast",
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, Self::Peap | Self::PeapFast)
    }
}

impl fmt::Display for ModalityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModalityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase().replace('_', "-"))
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    Direct,
    #[serde(rename = "cot")]
    CoT,
}

impl PromptStyle {
    pub const ALL: [PromptStyle; 2] = [Self::Direct, Self::CoT];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::CoT => "cot",
        }
    }

    pub fn default_max_tokens(self) -> u32 {
        match self {
            Self::Direct => 1024,
            Self::CoT => 2048,
        }
    }

    pub fn suffix(self) -> Option<&'static str> {
        match self {
            Self::Direct => None,
            Self::CoT => Some(COT_SUFFIX),
        }
    }
}

impl fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Self::Direct),
            "cot" => Ok(Self::CoT),
            _ => Err(Error::Config(format!("unknown prompt style {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub spec: RenderSpec,
    /// Draw font size and padding per example from its seed.
    pub randomize: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    pub patch_size: u32,
    pub tau: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            spec: RenderSpec::default(),
            randomize: false,
            noise: None,
            patch_size: DEFAULT_PATCH_SIZE,
            tau: DEFAULT_TAU,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be positive".into()));
        }
        PruneConfig::new(self.tau)?;
        Ok(())
    }

    fn spec_for(&self, ex: &Example) -> RenderSpec {
        if self.randomize {
            RenderSpec {
                width_min: self.spec.width_min,
                width_max: self.spec.width_max,
                base_height: self.spec.base_height,
                foreground: self.spec.foreground,
                background: self.spec.background,
                line_spacing: self.spec.line_spacing,
                channels: self.spec.channels,
                ..RenderSpec::sampled(ex.seed)
            }
        } else {
            RenderSpec {
                seed: ex.seed,
                ..self.spec.clone()
            }
        }
    }
}

/// Modality-specific material for one example.
#[derive(Debug, Clone)]
pub struct Assets {
    pub mode: ModalityMode,
    /// Task wording before any rendering; identical across modes.
    pub wording: String,
    /// Text the payload carries in place of images (Text) or beside them (Semi).
    pub text: Option<String>,
    pub images: Vec<PixelCanvas>,
    /// One per image in PeapFast, empty otherwise.
    pub masks: Vec<PatchMask>,
    pub patch_size: u32,
    pub prep_seconds: f64,
}

impl Assets {
    pub fn provenance(&self) -> Vec<Provenance> {
        self.images.iter().map(|c| c.provenance.clone()).collect()
    }

    /// `(total, retained)` patch counts over all images.
    pub fn patch_counts(&self) -> Option<(usize, usize)> {
        if self.images.is_empty() {
            return None;
        }
        let ps = self.patch_size;
        let total: usize = self
            .images
            .iter()
            .map(|c| (c.width.div_ceil(ps) * c.height.div_ceil(ps)) as usize)
            .sum();
        let retained = if self.masks.is_empty() {
            total
        } else {
            self.masks.iter().map(PatchMask::retained).sum()
        };
        Some((total, retained))
    }
}

fn incompatible(ex: &Example, mode: ModalityMode, reason: &str) -> Error {
    Error::IncompatibleMode {
        mode: mode.to_string(),
        id: ex.id.clone(),
        reason: reason.into(),
    }
}

fn native_image(ex: &Example) -> Result<Option<PixelCanvas>> {
    let Some(path) = &ex.image_path else { return Ok(None) };
    let canvas = decode_png(&std::fs::read(path)?)?;
    Ok(Some(canvas))
}

fn textual_page(wording: &str, ex: &Example) -> String {
    let mut parts: Vec<String> = Vec::new();
    if !wording.trim().is_empty() {
        parts.push(wording.to_string());
    }
    if let Some(t) = &ex.table {
        parts.push(t.to_markdown());
    }
    if let Some(o) = &ex.ocr_text {
        parts.push(o.clone());
    }
    parts.join("\n\n")
}

/// Converts an example into the representation `mode` needs.
pub fn transfer_modality(ex: &Example, task: &TaskSpec, mode: ModalityMode, cfg: &RenderConfig) -> Result<Assets> {
    let started = Instant::now();
    let wording = task.wording(ex);
    let spec = cfg.spec_for(ex);
    let noisy = |c: PixelCanvas| match &cfg.noise {
        Some(n) => apply_noise(&c, &NoiseSpec { seed: ex.seed, ..n.clone() }),
        None => c,
    };
    let mut assets = Assets {
        mode,
        wording: wording.clone(),
        text: None,
        images: Vec::new(),
        masks: Vec::new(),
        patch_size: cfg.patch_size,
        prep_seconds: 0.0,
    };
    match mode {
        ModalityMode::Text => {
            if ex.image_path.is_some() && ex.ocr_text.is_none() {
                return Err(incompatible(ex, mode, "native image without extracted text"));
            }
            assets.text = Some(textual_page(&wording, ex));
        }
        ModalityMode::Semi => {
            let visual = match (&ex.table, native_image(ex)?) {
                (Some(t), _) => render_table(t, &spec)?,
                (None, Some(img)) => img,
                (None, None) => return Err(incompatible(ex, mode, "no table or image to show")),
            };
            assets.images.push(noisy(visual));
            assets.text = Some(wording);
        }
        ModalityMode::Peap | ModalityMode::PeapFast => {
            let mut pages = Vec::new();
            if !wording.trim().is_empty() {
                pages.push(render_text(&wording, &spec)?);
            }
            if let Some(t) = &ex.table {
                pages.push(render_table(t, &spec)?);
            }
            if let Some(img) = native_image(ex)? {
                pages.push(img);
            }
            let page = if pages.len() == 1 { pages.pop().expect("one page") } else { PixelCanvas::stack_vertical(&pages)? };
            assets.images.push(noisy(page));
            if mode == ModalityMode::PeapFast {
                let prune = PruneConfig::new(cfg.tau)?;
                for img in &assets.images {
                    assets.masks.push(blank_mask(&tile(img, cfg.patch_size)?, &prune));
                }
            }
        }
    }
    assets.prep_seconds = started.elapsed().as_secs_f64();
    Ok(assets)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image { png: Vec<u8>, width: u32, height: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadMeta {
    pub example_id: String,
    pub mode: ModalityMode,
    pub style: PromptStyle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptPayload {
    pub parts: Vec<Part>,
    pub settings: GenerationSettings,
    /// Blank-patch masks for servers that accept them.
    pub masks: Vec<MaskJson>,
    /// Patch edge the masks refer to.
    pub patch_size: u32,
    pub meta: PayloadMeta,
}

impl PromptPayload {
    pub fn text_parts(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            Part::Text(t) => Some(t.as_str()),
            Part::Image { .. } => None,
        })
    }

    pub fn image_count(&self) -> usize {
        self.parts.iter().filter(|p| matches!(p, Part::Image { .. })).count()
    }

    pub fn text_chars(&self) -> usize {
        self.text_parts().map(|t| t.chars().count()).sum()
    }
}

/// Assembles the ordered payload. Text is the dataset wording verbatim;
/// image modes lead with the fixed instruction; CoT adds its suffix as the
/// final text part.
pub fn build_prompt(ex: &Example, assets: &Assets, style: PromptStyle, max_tokens: Option<u32>) -> PromptPayload {
    let mut parts = Vec::new();
    if assets.mode.is_image() {
        parts.push(Part::Text(IMAGE_INSTRUCTION.to_string()));
    } else if let Some(t) = &assets.text {
        parts.push(Part::Text(t.clone()));
    }
    for img in &assets.images {
        parts.push(Part::Image {
            png: encode_png(img),
            width: img.width,
            height: img.height,
        });
    }
    if let Some(s) = style.suffix() {
        parts.push(Part::Text(s.to_string()));
    }
    PromptPayload {
        parts,
        settings: GenerationSettings {
            temperature: 0.0,
            max_tokens: max_tokens.unwrap_or_else(|| style.default_max_tokens()),
        },
        masks: assets.masks.iter().map(PatchMask::to_json).collect(),
        patch_size: assets.patch_size,
        meta: PayloadMeta {
            example_id: ex.id.clone(),
            mode: assets.mode,
            style,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::task::{Metric, TaskKind};
    use crate::render::TableData;

    fn example(table: bool) -> Example {
        Example {
            id: "q1".into(),
            task: "tablebench".into(),
            input: Some("Which city has the larger population? Answer with the city name.".into()),
            table: table.then(|| {
                TableData::new(
                    vec!["City".into(), "Population".into()],
                    vec![vec!["Oslo".into(), "709000".into()], vec!["Bergen".into(), "291000".into()]],
                )
            }),
            image_path: None,
            ocr_text: None,
            choices: None,
            references: vec!["Oslo".into()],
            meta: None,
            seed: 11,
        }
    }

    fn task() -> TaskSpec {
        TaskSpec::new(TaskKind::Open, Metric::ExactMatch)
    }

    #[test]
    fn text_mode_has_no_images() {
        let ex = example(true);
        let a = transfer_modality(&ex, &task(), ModalityMode::Text, &RenderConfig::default()).unwrap();
        let p = build_prompt(&ex, &a, PromptStyle::Direct, None);
        assert_eq!(p.image_count(), 0);
        assert_eq!(p.parts.len(), 1);
        let text = p.text_parts().next().unwrap();
        assert!(text.starts_with(ex.input.as_deref().unwrap()));
        assert!(text.contains("| Oslo | 709000 |"));
        assert_eq!(p.settings, GenerationSettings { temperature: 0.0, max_tokens: 1024 });
    }

    #[test]
    fn semi_mode_shows_table_keeps_question() {
        let ex = example(true);
        let a = transfer_modality(&ex, &task(), ModalityMode::Semi, &RenderConfig::default()).unwrap();
        let p = build_prompt(&ex, &a, PromptStyle::Direct, None);
        assert_eq!(p.image_count(), 1);
        assert_eq!(p.text_parts().collect::<Vec<_>>(), vec![ex.input.as_deref().unwrap()]);
        assert!(!p.text_parts().any(|t| t.contains("Oslo |")));
        let bare = example(false);
        assert!(matches!(
            transfer_modality(&bare, &task(), ModalityMode::Semi, &RenderConfig::default()),
            Err(Error::IncompatibleMode { .. })
        ));
    }

    #[test]
    fn image_modes_carry_only_the_instruction() {
        let ex = example(true);
        for mode in [ModalityMode::Peap, ModalityMode::PeapFast] {
            let a = transfer_modality(&ex, &task(), mode, &RenderConfig::default()).unwrap();
            let p = build_prompt(&ex, &a, PromptStyle::Direct, None);
            assert_eq!(p.text_parts().collect::<Vec<_>>(), vec![IMAGE_INSTRUCTION]);
            assert_eq!(p.image_count(), 1);
            assert!(matches!(p.parts[0], Part::Text(_)));
            assert_eq!(p.masks.len(), usize::from(mode == ModalityMode::PeapFast));
        }
    }

    #[test]
    fn fairness_wording_identical_across_modes() {
        let ex = example(true);
        let words: Vec<String> = ModalityMode::ALL
            .iter()
            .map(|&m| transfer_modality(&ex, &task(), m, &RenderConfig::default()).unwrap().wording)
            .collect();
        assert!(words.iter().all(|w| w == &words[0]));
    }

    #[test]
    fn direct_and_cot_differ_only_in_suffix() {
        let ex = example(true);
        for mode in ModalityMode::ALL {
            let a = transfer_modality(&ex, &task(), mode, &RenderConfig::default()).unwrap();
            let d = build_prompt(&ex, &a, PromptStyle::Direct, None);
            let c = build_prompt(&ex, &a, PromptStyle::CoT, None);
            assert_eq!(&c.parts[..d.parts.len()], &d.parts[..]);
            assert_eq!(c.parts[d.parts.len()..], [Part::Text(COT_SUFFIX.into())]);
            assert_eq!(c.settings.max_tokens, 2048);
            assert_eq!(build_prompt(&ex, &a, PromptStyle::CoT, None), c);
        }
    }

    #[test]
    fn pruned_mask_covers_blank_margins() {
        let ex = example(false);
        let cfg = RenderConfig::default();
        let a = transfer_modality(&ex, &task(), ModalityMode::PeapFast, &cfg).unwrap();
        let img = &a.images[0];
        let mask = &a.masks[0];
        let ps = cfg.patch_size;
        let (rows, cols) = (img.height.div_ceil(ps), img.width.div_ceil(ps));
        let mut uniform = 0;
        for r in 0..rows {
            for c in 0..cols {
                let flat = (0..ps).all(|dy| {
                    (0..ps).all(|dx| {
                        let (x, y) = (c * ps + dx, r * ps + dy);
                        x >= img.width || y >= img.height || img.sample(x, y, 0) == img.background
                    })
                });
                if flat {
                    uniform += 1;
                    assert!(mask.is_blank((r * cols + c) as usize));
                }
            }
        }
        assert!(uniform > 0);
        assert!(mask.len() - mask.retained() >= uniform);
    }

    #[test]
    fn mode_and_style_parse() {
        assert_eq!("peap-fast".parse::<ModalityMode>().unwrap(), ModalityMode::PeapFast);
        assert_eq!("PEAP_FAST".parse::<ModalityMode>().unwrap(), ModalityMode::PeapFast);
        assert_eq!("CoT".parse::<PromptStyle>().unwrap(), PromptStyle::CoT);
        assert!("few-shot".parse::<PromptStyle>().is_err());
        assert_eq!(serde_json::to_string(&ModalityMode::PeapFast).unwrap(), "\"peap-fast\"");
        assert_eq!(serde_json::to_string(&PromptStyle::CoT).unwrap(), "\"cot\"");
    }
}
