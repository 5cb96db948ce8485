//! SIREN implicit neural representations: evaluation with exact weight
//! gradients, fitting, rendering, synthetic datasets, and weight-space editing.

mod editor;
mod gen;
mod image;
mod net;

pub use editor::{edit_apply, Editor, EditorConfig};
pub use gen::{gen_dataset, item_seed, EditTransform, GenConfig, GenKind};
pub use image::{
    class_image, contrast, coordinate_grid, dilate, feature_to_image, glyph, image_to_feature,
    psnr, stripes, write_pgm, Image, CLASS_AMPLITUDES,
};
pub use net::{
    fit_siren, render, siren_eval, siren_eval_backward, FitResult, SirenSpec, PSNR_EVERY,
};
