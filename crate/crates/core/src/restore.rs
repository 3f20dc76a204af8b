//! Applying a trained model to hidden regions (known ground truth) and to
//! specular regions (the clinical use).
//!
//! Both paths run the same eval-mode forward pass and differ only in the
//! image and mask pair fed to it.

use crate::dataset::{CorpusImage, Sample};
use crate::error::Result;
use crate::imaging::{apply_mask, check_same_dims, to_unit, BinaryMask, ImageF};
use crate::net::{assemble_input, tensor_to_images, Mode, Model, Tensor};

fn run(model: &Model, inputs: &[Tensor]) -> Result<Vec<ImageF>> {
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let y = model.forward(&Tensor::stack(&refs)?, Mode::Eval)?;
    tensor_to_images(&y)
}

/// Input of the hidden-region task: `I''` with masks `(M_r, M_h)`.
pub fn hidden_input(sample: &Sample) -> Result<Tensor> {
    assemble_input(&sample.input_image, &sample.retain_mask, &sample.restore_mask)
}

/// Input of the specular task: `I'` with masks `(ones, M_r)`.
pub fn sr_input(img: &CorpusImage) -> Result<Tensor> {
    let masked = apply_mask(&to_unit(&img.image), &img.real_mask)?;
    let (h, w) = img.dims();
    assemble_input(&masked, &BinaryMask::ones(h, w)?, &img.real_mask)
}

/// Raw network output for a hidden-region sample.
pub fn restore_hidden(model: &Model, sample: &Sample) -> Result<ImageF> {
    Ok(run(model, &[hidden_input(sample)?])?.remove(0))
}

/// Raw network output with the specular pixels as the region to restore.
pub fn restore_sr(model: &Model, img: &CorpusImage) -> Result<ImageF> {
    Ok(run(model, &[sr_input(img)?])?.remove(0))
}

/// [`restore_hidden`] over many samples, `batch_size` per forward pass.
pub fn restore_hidden_batch(model: &Model, samples: &[Sample], batch_size: usize) -> Result<Vec<ImageF>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let inputs = chunk.iter().map(hidden_input).collect::<Result<Vec<_>>>()?;
        out.extend(run(model, &inputs)?);
    }
    Ok(out)
}

/// [`restore_sr`] over many images, `batch_size` per forward pass.
pub fn restore_sr_batch(model: &Model, images: &[CorpusImage], batch_size: usize) -> Result<Vec<ImageF>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch_size.max(1)) {
        let inputs = chunk.iter().map(sr_input).collect::<Result<Vec<_>>>()?;
        out.extend(run(model, &inputs)?);
    }
    Ok(out)
}

/// Takes `input_img` where `keep_mask` is 1 and `raw_output` where it is 0.
pub fn composite(raw_output: &ImageF, input_img: &ImageF, keep_mask: &BinaryMask) -> Result<ImageF> {
    check_same_dims(input_img.dims(), raw_output.dims())?;
    check_same_dims(input_img.dims(), keep_mask.dims())?;
    let data = input_img
        .data()
        .chunks_exact(3)
        .zip(raw_output.data().chunks_exact(3))
        .zip(keep_mask.data())
        .flat_map(|((a, b), &m)| if m == 1 { a } else { b }.iter().copied())
        .collect();
    ImageF::new(input_img.height(), input_img.width(), data)
}
