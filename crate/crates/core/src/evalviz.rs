//! File-emitting diagnostics: latent traversal grids, direction-similarity
//! matrices, per-dimension variation-response profiles, and 3D latent
//! scatter exports. Everything here is a pure function of (parameters,
//! seed), so every emitted file is reproducible byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use rand_chacha::ChaCha12Rng;

use crate::contrastor::{self, EncoderParams};
use crate::error::{DiscoError, Result};
use crate::gen_backend::{GeneratorHandle, Image, LatentCode};
use crate::metrics::mi_matrix;
use crate::navigator::NavigatorParams;
use crate::sampler::draw_eps;

/// Gutter width between grid cells, in pixels.
const GUTTER: usize = 2;
/// Minimum sample count behind each per-direction mean variation vector.
pub const MIN_SIMILARITY_SAMPLES: usize = 16;
/// Side length of one heatmap cell in pixels.
const HEATMAP_CELL: usize = 16;

// ---------------------------------------------------------------------------
// PNG plumbing
// ---------------------------------------------------------------------------

/// Write an `[0,1]`-valued image (1 or 3 channels) as an 8-bit RGB PNG.
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let (h, w, c) = img.dim();
    if c != 1 && c != 3 {
        return Err(DiscoError::Input(format!("PNG writer takes 1 or 3 channels, got {c}")));
    }
    let mut raw = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                let v = img[(y, x, if c == 1 { 0 } else { ch })];
                raw.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    let buf: image::RgbImage = image::ImageBuffer::from_raw(w as u32, h as u32, raw)
        .ok_or_else(|| DiscoError::Input("image buffer size mismatch".into()))?;
    buf.save(path).map_err(|e| DiscoError::Format(format!("PNG write failed: {e}")))?;
    Ok(())
}

/// Read a PNG into an `[0,1]`-valued image with the requested channel count
/// (3 keeps RGB; 1 averages the channels).
pub fn read_png(path: &Path, channels: usize) -> Result<Image> {
    if channels != 1 && channels != 3 {
        return Err(DiscoError::Input(format!("PNG reader takes 1 or 3 channels, got {channels}")));
    }
    let img = image::open(path)
        .map_err(|e| DiscoError::Format(format!("cannot read {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Array3::zeros((h, w, channels));
    for y in 0..h {
        for x in 0..w {
            let p = img.get_pixel(x as u32, y as u32);
            if channels == 3 {
                for ch in 0..3 {
                    out[(y, x, ch)] = p.0[ch] as f64 / 255.0;
                }
            } else {
                out[(y, x, 0)] = (p.0[0] as f64 + p.0[1] as f64 + p.0[2] as f64) / (3.0 * 255.0);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Traversal grids
// ---------------------------------------------------------------------------

/// Compose the traversal grid image: one row per base latent, one column
/// per shift scalar, cell `(r, c)` showing `G(z_r + A(eps_c * e_d))`.
/// Layout is row-major with 2-pixel white gutters.
pub fn traversal_grid(
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    z_rows: &[LatentCode],
    d: usize,
    eps_steps: &[f64],
) -> Result<Image> {
    if z_rows.is_empty() || eps_steps.is_empty() {
        return Err(DiscoError::Input("traversal grid needs >= 1 row and >= 1 step".into()));
    }
    let (h, w, c) = gen.image_shape();
    let rows = z_rows.len();
    let cols = eps_steps.len();
    let grid_h = rows * h + (rows - 1) * GUTTER;
    let grid_w = cols * w + (cols - 1) * GUTTER;
    let mut canvas = Array3::from_elem((grid_h, grid_w, c), 1.0);
    for (r, z) in z_rows.iter().enumerate() {
        for (col, &eps) in eps_steps.iter().enumerate() {
            let shift = nav.shift(d, eps)?;
            let z_cell = LatentCode { values: &z.values + &shift, space_tag: z.space_tag };
            let cell = gen.generate_one(&z_cell)?;
            let (y0, x0) = (r * (h + GUTTER), col * (w + GUTTER));
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        canvas[(y0 + y, x0 + x, ch)] = cell[(y, x, ch)];
                    }
                }
            }
        }
    }
    Ok(canvas)
}

/// Render and write a traversal grid in one call.
pub fn save_traversal_grid(
    path: &Path,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    z_rows: &[LatentCode],
    d: usize,
    eps_steps: &[f64],
) -> Result<()> {
    write_png(path, &traversal_grid(gen, nav, z_rows, d, eps_steps)?)
}

// ---------------------------------------------------------------------------
// Direction similarity
// ---------------------------------------------------------------------------

/// Mean variation vector per direction, from `samples` random `(z, eps)`
/// draws each. Degenerate draws are skipped; a direction whose samples all
/// degenerate (or whose mean collapses) yields `None`.
pub fn direction_mean_variations(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    samples: usize,
    eps_max: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Option<Array1<f64>>>> {
    if samples < MIN_SIMILARITY_SAMPLES {
        return Err(DiscoError::Config(format!(
            "mean variation vectors need >= {MIN_SIMILARITY_SAMPLES} samples, got {samples}"
        )));
    }
    if !(eps_max > 0.0) {
        return Err(DiscoError::Config(format!("eps_max must be > 0, got {eps_max}")));
    }
    let mut out = Vec::with_capacity(nav.directions());
    for d in 0..nav.directions() {
        let mut sum: Array1<f64> = Array1::zeros(enc.out_dim());
        let mut used = 0usize;
        for _ in 0..samples {
            let z = gen.sample_latent(1, rng)?.remove(0);
            let eps = draw_eps(rng, eps_max);
            match contrastor::variation(enc, gen, nav, &z, d, eps) {
                Ok(v) => {
                    sum += v.values();
                    used += 1;
                }
                Err(DiscoError::DegenerateVariation(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if used == 0 {
            out.push(None);
            continue;
        }
        let mean = sum / used as f64;
        if mean.dot(&mean).sqrt() < 1e-12 {
            out.push(None);
        } else {
            out.push(Some(mean));
        }
    }
    Ok(out)
}

/// Pairwise cosine similarity of the mean variation vectors. Entries
/// touching a missing (degenerate) direction are NaN; the matrix is exactly
/// symmetric and has a unit diagonal on present directions.
pub fn direction_similarity_matrix(means: &[Option<Array1<f64>>]) -> Result<Array2<f64>> {
    if means.len() < 2 {
        return Err(DiscoError::Config(format!(
            "similarity matrix needs >= 2 directions, got {}",
            means.len()
        )));
    }
    let d = means.len();
    let norms: Vec<Option<f64>> =
        means.iter().map(|m| m.as_ref().map(|v| v.dot(v).sqrt())).collect();
    let mut out = Array2::from_elem((d, d), f64::NAN);
    for a in 0..d {
        for b in a..d {
            if let (Some(va), Some(vb), Some(na), Some(nb)) =
                (&means[a], &means[b], norms[a], norms[b])
            {
                let cos = va.dot(vb) / (na * nb);
                out[(a, b)] = cos;
                out[(b, a)] = cos;
            }
        }
    }
    Ok(out)
}

/// Write the matrix as CSV; missing entries become empty cells.
pub fn save_similarity_csv(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let d = matrix.nrows();
    let mut text = String::from("direction");
    for b in 0..d {
        write!(text, ",dir_{b}").unwrap();
    }
    text.push('\n');
    for a in 0..d {
        write!(text, "dir_{a}").unwrap();
        for b in 0..d {
            let v = matrix[(a, b)];
            if v.is_nan() {
                text.push(',');
            } else {
                write!(text, ",{v}").unwrap();
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Grayscale heatmap of the similarity matrix: cosine -1 maps to black,
/// +1 to white; missing entries render mid-gray.
pub fn similarity_heatmap(matrix: &Array2<f64>) -> Image {
    let d = matrix.nrows();
    let side = d * HEATMAP_CELL;
    let mut img = Array3::zeros((side, side, 1));
    for a in 0..d {
        for b in 0..d {
            let v = matrix[(a, b)];
            let shade = if v.is_nan() { 0.5 } else { (v + 1.0) / 2.0 };
            for y in 0..HEATMAP_CELL {
                for x in 0..HEATMAP_CELL {
                    img[(a * HEATMAP_CELL + y, b * HEATMAP_CELL + x, 0)] = shade;
                }
            }
        }
    }
    img
}

// ---------------------------------------------------------------------------
// Variation response profiles
// ---------------------------------------------------------------------------

/// Sweep one ground-truth factor (others pinned at 0.5) and record
/// `|E(G(z(f))) - E(G(z(f_0)))|` per code dimension. Returns the CSV text;
/// the first sweep point is the reference.
pub fn variation_response_profile(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    factor: usize,
    sweep: &[f64],
) -> Result<String> {
    let k = gen.factor_count()?;
    if factor >= k {
        return Err(DiscoError::Input(format!("factor {factor} out of range for {k} factors")));
    }
    if sweep.len() < 2 {
        return Err(DiscoError::Input("factor sweep needs >= 2 points".into()));
    }
    let encode_at = |value: f64| -> Result<Array1<f64>> {
        let mut f = Array1::from_elem(k, 0.5);
        f[factor] = value;
        let z = gen.latent_for_factors(&f)?;
        enc.encode(&gen.generate_one(&z)?)
    };
    let reference = encode_at(sweep[0])?;
    let n = enc.out_dim();
    let mut text = String::from("factor_value");
    for j in 0..n {
        write!(text, ",dim_{j}").unwrap();
    }
    text.push('\n');
    for &value in sweep {
        let e = encode_at(value)?;
        write!(text, "{value}").unwrap();
        for j in 0..n {
            write!(text, ",{}", (e[j] - reference[j]).abs()).unwrap();
        }
        text.push('\n');
    }
    Ok(text)
}

pub fn save_variation_response_profile(
    path: &Path,
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    factor: usize,
    sweep: &[f64],
) -> Result<()> {
    std::fs::write(path, variation_response_profile(enc, gen, factor, sweep)?)?;
    Ok(())
}

/// Evenly spaced sweep over the closed factor range `[0, 1]`.
pub fn factor_sweep(steps: usize) -> Vec<f64> {
    if steps < 2 {
        return vec![0.0];
    }
    (0..steps).map(|i| i as f64 / (steps - 1) as f64).collect()
}

// ---------------------------------------------------------------------------
// 3D latent scatter export
// ---------------------------------------------------------------------------

/// For three chosen factors, sweep a `steps^3` factor grid (others pinned
/// at 0.5) and emit the matched code dimensions plus factor labels. The
/// code dimension for each factor is its argmax-MI column, estimated from
/// `mi_samples` random oracle draws.
pub fn latent_scatter_export(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    factor_triple: (usize, usize, usize),
    steps: usize,
    bins: usize,
    mi_samples: usize,
    rng: &mut ChaCha12Rng,
) -> Result<String> {
    let k = gen.factor_count().map_err(|_| {
        DiscoError::Config("latent scatter export requires an oracle generator".into())
    })?;
    if k < 3 {
        return Err(DiscoError::Config(format!(
            "latent scatter export needs >= 3 factors, got {k}"
        )));
    }
    let (fa, fb, fc) = factor_triple;
    for f in [fa, fb, fc] {
        if f >= k {
            return Err(DiscoError::Config(format!("factor {f} out of range for {k} factors")));
        }
    }
    if fa == fb || fb == fc || fa == fc {
        return Err(DiscoError::Config("factor triple must be three distinct factors".into()));
    }
    if steps < 2 {
        return Err(DiscoError::Config("scatter grid needs >= 2 steps per factor".into()));
    }
    // Match each factor to its most informative code dimension.
    let (codes, factors) = encode_dataset(enc, gen, mi_samples, rng)?;
    let mi = mi_matrix(&codes, &factors, bins)?;
    let dim_for = |f: usize| -> usize {
        let col = mi.column(f);
        let mut best = 0usize;
        for j in 1..col.len() {
            if col[j] > col[best] {
                best = j;
            }
        }
        best
    };
    let (da, db, dc) = (dim_for(fa), dim_for(fb), dim_for(fc));

    let sweep = factor_sweep(steps);
    let mut text = format!("code_x,code_y,code_z,factor_{fa},factor_{fb},factor_{fc}\n");
    for &va in &sweep {
        for &vb in &sweep {
            for &vc in &sweep {
                let mut f = Array1::from_elem(k, 0.5);
                f[fa] = va;
                f[fb] = vb;
                f[fc] = vc;
                let z = gen.latent_for_factors(&f)?;
                let e = enc.encode(&gen.generate_one(&z)?)?;
                writeln!(text, "{},{},{},{va},{vb},{vc}", e[da], e[db], e[dc]).unwrap();
            }
        }
    }
    Ok(text)
}

// ---------------------------------------------------------------------------
// Dataset encoding (shared by metrics evaluation and the scatter export)
// ---------------------------------------------------------------------------

/// Sample `samples` latents, encode their generations, and return codes
/// (samples x n) alongside ground-truth factors (samples x K). Oracle
/// backends only.
pub fn encode_dataset(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    samples: usize,
    rng: &mut ChaCha12Rng,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if samples < 2 {
        return Err(DiscoError::Input("dataset encoding needs >= 2 samples".into()));
    }
    let k = gen.factor_count()?;
    let n = enc.out_dim();
    let zs = gen.sample_latent(samples, rng)?;
    let mut codes = Array2::zeros((samples, n));
    let mut factors = Array2::zeros((samples, k));
    for (i, z) in zs.iter().enumerate() {
        let e = enc.encode(&gen.generate_one(z)?)?;
        codes.row_mut(i).assign(&e);
        factors.row_mut(i).assign(&gen.oracle_true_factors(z)?.values);
    }
    Ok((codes, factors))
}
