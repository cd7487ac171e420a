use serde::{Deserialize, Serialize};

use super::{AssembleError, MixtureSpec};

/// Where the trainer finds the emitted dataset files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPaths {
    pub train: String,
    pub validation: String,
}

/// QLoRA fine-tuning settings. Keys of the emitted TOML are these field
/// names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfigPreset {
    pub base_model: String,
    pub quantization: String,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_targets: Vec<String>,
    pub optimizer: String,
    pub schedule: String,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_steps: u32,
    pub gradient_accumulation: u32,
    pub micro_batch: u32,
    pub sample_packing: bool,
    pub embedding_noise: bool,
    pub embedding_noise_alpha: f64,
    pub epochs: u32,
    pub checkpoint_selection: String,
    pub validation_size: usize,
    pub train_path: String,
    pub validation_path: String,
}

impl TrainingConfigPreset {
    pub fn for_mixture(spec: &MixtureSpec, paths: &TrainingPaths, validation_size: usize) -> Self {
        Self {
            base_model: "mistralai/Mistral-7B-v0.1".into(),
            quantization: "4bit".into(),
            lora_rank: 128,
            lora_alpha: 256,
            lora_targets: ["q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"]
                .map(String::from)
                .to_vec(),
            optimizer: "paged_adamw_32bit".into(),
            schedule: "cosine".into(),
            learning_rate: 2e-5,
            weight_decay: 0.01,
            warmup_steps: 100,
            gradient_accumulation: 3,
            micro_batch: 2,
            sample_packing: true,
            embedding_noise: true,
            embedding_noise_alpha: 5.0,
            epochs: spec.epochs,
            checkpoint_selection: "min_validation_loss".into(),
            validation_size,
            train_path: paths.train.clone(),
            validation_path: paths.validation.clone(),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

/// Renders the training config for a named preset (`200K`, `400K`, `700K`).
pub fn emit_training_config(
    preset: &str,
    paths: &TrainingPaths,
    validation_size: usize,
) -> Result<String, AssembleError> {
    let spec = MixtureSpec::preset(preset, 0)?;
    Ok(TrainingConfigPreset::for_mixture(&spec, paths, validation_size).to_toml_string())
}
