//! Prompt construction from template files.
//!
//! Templates live under `data/templates` and use `{{NAME}}` placeholders:
//! `IMAGE_COUNT`, `BAND_GLOSSARY`, `PRODUCT_BLOCK`, `RANGE` and
//! `CLASS_BLOCK`. Each product has a description snippet with an
//! `{{ORDINAL}}` slot, so the product block follows the attachment order.
//! The built-in set is compiled in; [`TemplateSet::from_dir`] loads an edited
//! copy at runtime.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::products::{ProductId, PseudoImage};
use crate::task::Task;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{modality} prompt for {task} expects {expected} image(s), got {actual}")]
    AttachmentCount {
        task: Task,
        modality: Modality,
        expected: String,
        actual: usize,
    },
    #[error("invalid attachments: {0}")]
    InvalidAttachments(String),
    #[error("no template for {task}/{modality}")]
    UnknownTask { task: Task, modality: Modality },
    #[error("template `{template}` has unknown placeholder `{name}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("reading templates from {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    RgbOnly,
    MultiSpectral,
}

impl Modality {
    fn file_suffix(self) -> &'static str {
        match self {
            Modality::RgbOnly => "rgb",
            Modality::MultiSpectral => "multispectral",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modality::RgbOnly => f.write_str("rgb_only"),
            Modality::MultiSpectral => f.write_str("multi_spectral"),
        }
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "rgb" | "rgbonly" => Ok(Modality::RgbOnly),
            "ms" | "multispectral" => Ok(Modality::MultiSpectral),
            _ => Err(format!("unknown modality `{s}` (expected rgb or multispectral)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Prompt {
    pub task: Task,
    pub modality: Modality,
    pub text: String,
    pub attachments: Vec<PseudoImage>,
}

const ORDINALS: [&str; 6] = ["first", "second", "third", "fourth", "fifth", "sixth"];

#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: HashMap<(Task, Modality), String>,
    products: HashMap<ProductId, String>,
    band_glossary: String,
}

macro_rules! builtin {
    ($name:literal) => {
        include_str!(concat!("../data/templates/", $name))
    };
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = [
            ((Task::BigEarthNet43, Modality::MultiSpectral), builtin!("bigearthnet43_multispectral.txt")),
            ((Task::BigEarthNet19, Modality::MultiSpectral), builtin!("bigearthnet19_multispectral.txt")),
            ((Task::EuroSat10, Modality::MultiSpectral), builtin!("eurosat10_multispectral.txt")),
            ((Task::BigEarthNet43, Modality::RgbOnly), builtin!("bigearthnet43_rgb.txt")),
            ((Task::BigEarthNet19, Modality::RgbOnly), builtin!("bigearthnet19_rgb.txt")),
            ((Task::EuroSat10, Modality::RgbOnly), builtin!("eurosat10_rgb.txt")),
        ];
        let products = [
            (ProductId::TrueColor, builtin!("products/TrueColor.txt")),
            (ProductId::FalseColor, builtin!("products/FalseColor.txt")),
            (ProductId::Ndvi, builtin!("products/NDVI.txt")),
            (ProductId::Ndwi, builtin!("products/NDWI.txt")),
            (ProductId::NdmiB11, builtin!("products/NDMI_B11.txt")),
            (ProductId::NdmiB12, builtin!("products/NDMI_B12.txt")),
        ];
        Self {
            templates: templates.into_iter().map(|(k, v)| (k, v.to_string())).collect(),
            products: products.into_iter().map(|(k, v)| (k, v.to_string())).collect(),
            band_glossary: builtin!("band_glossary.txt").to_string(),
        }
    }

    /// Loads a template directory with the same layout as the built-in one.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |rel: String| {
            let path = dir.join(&rel);
            std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let mut templates = HashMap::new();
        for task in Task::ALL {
            for modality in [Modality::RgbOnly, Modality::MultiSpectral] {
                let text = read(format!("{}_{}.txt", task.as_str(), modality.file_suffix()))?;
                templates.insert((task, modality), text);
            }
        }
        let mut products = HashMap::new();
        for p in ProductId::DEFAULT_SELECTION {
            products.insert(p, read(format!("products/{}.txt", p.as_str()))?);
        }
        Ok(Self {
            templates,
            products,
            band_glossary: read("band_glossary.txt".into())?,
        })
    }

    /// The 12 numbered band description lines, newline-separated.
    pub fn band_glossary(&self) -> &str {
        self.band_glossary.trim_end_matches('\n')
    }

    pub fn build(&self, task: Task, modality: Modality, images: Vec<PseudoImage>) -> Result<Prompt, PromptError> {
        let products: Vec<ProductId> = images.iter().map(|i| i.product_id).collect();
        check_attachments(task, modality, &products)?;
        let template = self
            .templates
            .get(&(task, modality))
            .ok_or(PromptError::UnknownTask { task, modality })?;

        let class_block: String = task
            .option_lines()
            .iter()
            .enumerate()
            .map(|(i, line)| format!("({}){}\n", i + 1, line))
            .collect();
        let mut product_block = String::new();
        for (ordinal, product) in ORDINALS.iter().zip(&products) {
            let snippet = &self.products[product];
            product_block.push_str(&fill(product.as_str(), snippet, &[("ORDINAL", ordinal)])?);
        }
        let n_images = images.len().to_string();
        let range = task.n_classes().to_string();
        let text = fill(
            &format!("{task}_{}", modality.file_suffix()),
            template,
            &[
                ("IMAGE_COUNT", &n_images),
                ("BAND_GLOSSARY", self.band_glossary()),
                ("PRODUCT_BLOCK", &product_block),
                ("RANGE", &range),
                ("CLASS_BLOCK", &class_block),
            ],
        )?;
        Ok(Prompt {
            task,
            modality,
            text,
            attachments: images,
        })
    }
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn check_attachments(task: Task, modality: Modality, products: &[ProductId]) -> Result<(), PromptError> {
    match modality {
        Modality::RgbOnly => {
            if products.len() != 1 {
                return Err(PromptError::AttachmentCount {
                    task,
                    modality,
                    expected: "1".into(),
                    actual: products.len(),
                });
            }
            if products[0] != ProductId::TrueColor {
                return Err(PromptError::InvalidAttachments(format!(
                    "rgb-only prompt needs a TrueColor image, got {}",
                    products[0]
                )));
            }
        }
        Modality::MultiSpectral => {
            if !(2..=ORDINALS.len()).contains(&products.len()) {
                return Err(PromptError::AttachmentCount {
                    task,
                    modality,
                    expected: format!("2..={} (6 for the full set)", ORDINALS.len()),
                    actual: products.len(),
                });
            }
            if !products.contains(&ProductId::TrueColor) {
                return Err(PromptError::InvalidAttachments(
                    "multi-spectral prompt must include the TrueColor image".into(),
                ));
            }
            for (i, p) in products.iter().enumerate() {
                if products[..i].contains(p) {
                    return Err(PromptError::InvalidAttachments(format!("duplicate product {p}")));
                }
            }
        }
    }
    Ok(())
}

/// Single-pass `{{NAME}}` substitution; unknown names are an error.
fn fill(template_name: &str, template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else {
            out.push_str(&rest[start..]);
            return Ok(out);
        };
        let name = &after[..end];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::UnknownPlaceholder {
                template: template_name.to_string(),
                name: name.to_string(),
            })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Builds a prompt from the built-in templates.
pub fn build_prompt(task: Task, modality: Modality, images: Vec<PseudoImage>) -> Result<Prompt, PromptError> {
    TemplateSet::builtin().build(task, modality, images)
}

pub fn band_glossary() -> String {
    TemplateSet::builtin().band_glossary().to_string()
}
