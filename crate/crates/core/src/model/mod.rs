//! Embedding network, classifier head and phoneme-to-embedding model.

mod embedding;
mod p2e;
mod phonemes;
mod resnet;
#[cfg(test)]
mod tests;

use std::path::{Path, PathBuf};

pub use embedding::Embedding;
pub use p2e::{P2EModel, P2ESpec, FORGET_BIAS};
pub use phonemes::{Lexicon, PhonemeInventory};
pub use resnet::{ClassifierHead, EmbeddingModel, EmbeddingModelSpec, StageShape, STAGES};

use crate::autodiff::Archive;
use crate::error::Result;

/// Path of the plain-text model card stored next to a checkpoint.
pub fn card_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".card.txt");
    PathBuf::from(s)
}

/// Writes the backbone (and optional head) plus its model card.
pub fn save_embedding_model(path: &Path, model: &EmbeddingModel, head: Option<&ClassifierHead>) -> Result<()> {
    let mut archive = Archive::new();
    model.write_archive(&mut archive)?;
    let mut card = model.model_card();
    if let Some(h) = head {
        h.write_archive(&mut archive)?;
        card.push_str(&format!("head_classes={}\n", h.n_classes()));
    }
    archive.save(path)?;
    crate::io::write_atomic(&card_path(path), card.as_bytes())
}

pub fn load_embedding_model(path: &Path) -> Result<(EmbeddingModel, Option<ClassifierHead>)> {
    let archive = Archive::load(path)?;
    Ok((EmbeddingModel::from_archive(&archive)?, ClassifierHead::from_archive(&archive)?))
}

pub fn save_p2e_model(path: &Path, model: &P2EModel) -> Result<()> {
    let mut archive = Archive::new();
    model.write_archive(&mut archive)?;
    archive.save(path)?;
    let s = model.spec();
    let card = format!(
        "architecture=p2e-lstm\nphoneme_vocab_size={}\nphoneme_embed_dim={}\nlstm_hidden={}\nlstm_layers={}\noutput_dim={}\nforget_bias={}\n",
        s.phoneme_vocab_size, s.phoneme_embed_dim, s.lstm_hidden, s.lstm_layers, s.output_dim, FORGET_BIAS
    );
    crate::io::write_atomic(&card_path(path), card.as_bytes())
}

pub fn load_p2e_model(path: &Path) -> Result<P2EModel> {
    P2EModel::from_archive(&Archive::load(path)?)
}
