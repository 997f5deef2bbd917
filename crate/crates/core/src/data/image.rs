//! 8-bit image files: binary PPM (P6) and PNG, as `[3, H, W]` tensors in `[0, 1]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_interleaved(image: &Tensor) -> Result<(Vec<u8>, usize, usize)> {
    let (h, w) = match *image.shape() {
        [3, h, w] => (h, w),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "save_image",
                expected: vec![3, 0, 0],
                got: image.shape().to_vec(),
            })
        }
    };
    let n = h * w;
    let d = image.data();
    let mut out = Vec::with_capacity(3 * n);
    for k in 0..n {
        out.extend([quantize(d[k]), quantize(d[n + k]), quantize(d[2 * n + k])]);
    }
    Ok((out, h, w))
}

fn from_interleaved(rgb: &[u8], h: usize, w: usize) -> Tensor {
    let n = h * w;
    let mut data = vec![0.0; 3 * n];
    for k in 0..n {
        for c in 0..3 {
            data[c * n + k] = rgb[3 * k + c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("extents match the pixel buffer")
}

/// Encodes a `[3, H, W]` image as binary PPM.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let (rgb, h, w) = to_interleaved(image)?;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&rgb);
    Ok(out)
}

/// Reads the next header token, skipping whitespace and `#` comments.
fn ppm_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            None => return Err(Error::format("ppm", "truncated header")),
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    if *pos >= bytes.len() {
        return Err(Error::format("ppm", "truncated header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Parses a P6 header; returns `(width, height, payload offset)`.
fn ppm_header(bytes: &[u8]) -> Result<(usize, usize, usize)> {
    let mut pos = 0;
    if ppm_token(bytes, &mut pos)? != "P6" {
        return Err(Error::format("ppm", "not a binary P6 file"));
    }
    let mut num = |what: &str| -> Result<usize> {
        let t = ppm_token(bytes, &mut pos)?;
        t.parse()
            .map_err(|_| Error::format("ppm", format!("bad {what} `{t}`")))
    };
    let w = num("width")?;
    let h = num("height")?;
    let max = num("maxval")?;
    if w == 0 || h == 0 {
        return Err(Error::format("ppm", format!("non-positive extent {w}x{h}")));
    }
    if max != 255 {
        return Err(Error::format("ppm", format!("only 8-bit files are supported, maxval {max}")));
    }
    Ok((w, h, pos + 1))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let (w, h, off) = ppm_header(bytes)?;
    let need = 3 * w * h;
    let payload = bytes.get(off..).unwrap_or(&[]);
    if payload.len() < need {
        return Err(Error::format("ppm", format!("payload has {} bytes, need {need}", payload.len())));
    }
    Ok(from_interleaved(&payload[..need], h, w))
}

fn png_error(e: png::DecodingError) -> Error {
    Error::format("png", e.to_string())
}

fn decode_png(reader: impl std::io::BufRead + Seek) -> Result<Tensor> {
    let mut dec = png::Decoder::new(reader);
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut r = dec.read_info().map_err(png_error)?;
    let size = r
        .output_buffer_size()
        .ok_or_else(|| Error::format("png", "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = r.next_frame(&mut buf).map_err(png_error)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let step = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::format("png", "unexpanded palette")),
    };
    let rgb: Vec<u8> = buf[..info.buffer_size()]
        .chunks_exact(step)
        .flat_map(|p| if step < 3 { [p[0]; 3] } else { [p[0], p[1], p[2]] })
        .collect();
    Ok(from_interleaved(&rgb, h, w))
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Loads a PPM or PNG file (detected from its leading bytes).
pub fn load_image(path: &Path) -> Result<Tensor> {
    let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut head = [0u8; 8];
    let n = f.read(&mut head).map_err(|e| Error::io(path, e))?;
    f.seek(SeekFrom::Start(0)).map_err(|e| Error::io(path, e))?;
    if n == 8 && head == PNG_SIGNATURE {
        decode_png(f)
    } else if n >= 2 && &head[..2] == b"P6" {
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        decode_ppm(&bytes)
    } else {
        Err(Error::format("image", format!("{}: unsupported format", path.display())))
    }
}

/// Extent `(height, width)` of an image file, read from its header only.
pub fn image_extent(path: &Path) -> Result<(usize, usize)> {
    let mut f = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut head = vec![0u8; 512];
    let n = f.read(&mut head).map_err(|e| Error::io(path, e))?;
    head.truncate(n);
    if n >= 24 && head[..8] == PNG_SIGNATURE {
        let w = u32::from_be_bytes(head[16..20].try_into().expect("4 bytes"));
        let h = u32::from_be_bytes(head[20..24].try_into().expect("4 bytes"));
        return Ok((h as usize, w as usize));
    }
    if n >= 2 && &head[..2] == b"P6" {
        let (w, h, _) = ppm_header(&head)?;
        return Ok((h, w));
    }
    Err(Error::format("image", format!("{}: unsupported format", path.display())))
}

/// Writes PNG when the extension is `.png`, binary PPM otherwise.
pub fn save_image(image: &Tensor, path: &Path) -> Result<()> {
    if is_png(path) {
        let (rgb, h, w) = to_interleaved(image)?;
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(f), w as u32, h as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let enc_err = |e: png::EncodingError| Error::format("png", e.to_string());
        let mut wr = enc.write_header().map_err(enc_err)?;
        wr.write_image_data(&rgb).map_err(enc_err)?;
        wr.finish().map_err(enc_err)
    } else {
        std::fs::write(path, encode_ppm(image)?).map_err(|e| Error::io(path, e))
    }
}

/// Concatenates equally tall `[3, H, W]` images left to right.
pub fn side_by_side(images: &[&Tensor]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("no images to join".into()))?;
    let h = first.shape().get(1).copied().unwrap_or(0);
    let mut widths = Vec::new();
    for im in images {
        match *im.shape() {
            [3, hh, w] if hh == h => widths.push(w),
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "side_by_side",
                    expected: vec![3, h, 0],
                    got: im.shape().to_vec(),
                })
            }
        }
    }
    let total: usize = widths.iter().sum();
    let mut out = vec![0.0; 3 * h * total];
    let mut x0 = 0;
    for (im, &w) in images.iter().zip(&widths) {
        for c in 0..3 {
            for i in 0..h {
                let src = &im.data()[c * h * w + i * w..c * h * w + (i + 1) * w];
                out[c * h * total + i * total + x0..][..w].copy_from_slice(src);
            }
        }
        x0 += w;
    }
    Tensor::from_vec(&[3, h, total], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_fixture() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend([255, 0, 0, 0, 0, 255]);
        let t = decode_ppm(&bytes).unwrap();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(encode_ppm(&t).unwrap(), bytes);
    }

    #[test]
    fn ppm_comments_and_errors() {
        let mut bytes = b"P6 # comment\n1 1 255\n".to_vec();
        bytes.extend([1, 2, 3]);
        assert!(decode_ppm(&bytes).is_ok());
        assert!(decode_ppm(b"P6\n2").is_err());
        assert!(decode_ppm(b"P6\n2 1\n255\n\x01\x02").is_err());
        assert!(decode_ppm(b"P3\n1 1\n255\n1 2 3").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn file_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::from_vec(&[3, 5, 7], (0..105).map(|k| ((k as f64) * 0.618).fract()).collect()).unwrap();
        for name in ["a.ppm", "a.png"] {
            let p = dir.path().join(name);
            save_image(&img, &p).unwrap();
            let back = load_image(&p).unwrap();
            assert!(img.max_abs_diff(&back).unwrap() <= 1.0 / 510.0 + 1e-12);
            assert_eq!(image_extent(&p).unwrap(), (5, 7));
        }
        let junk = dir.path().join("junk.ppm");
        std::fs::write(&junk, b"hello").unwrap();
        assert!(load_image(&junk).is_err());
    }

    #[test]
    fn panel_layout() {
        let a = Tensor::full(&[3, 2, 1], 0.0).unwrap();
        let b = Tensor::full(&[3, 2, 2], 1.0).unwrap();
        let p = side_by_side(&[&a, &b]).unwrap();
        assert_eq!(p.shape(), &[3, 2, 3]);
        assert_eq!(&p.data()[..3], &[0.0, 1.0, 1.0]);
        assert!(side_by_side(&[&a, &Tensor::zeros(&[3, 3, 1]).unwrap()]).is_err());
    }
}
