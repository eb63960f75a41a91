use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Image, ImageError};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImageError + '_ {
    move |source| ImageError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads an 8-bit PNG (gray or RGB) or a binary PGM/PPM file.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    decode(&bytes)
}

/// Decodes image bytes, sniffing the format from the magic number.
pub fn decode(bytes: &[u8]) -> Result<Image, ImageError> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(ImageError::UnsupportedFormat(
            "expected PNG or binary PGM/PPM".into(),
        ))
    }
}

/// Writes `img` as PNG, PGM or PPM depending on the file extension.
/// Float images are quantized first.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "png" => encode_png(img)?,
        "pgm" | "ppm" | "pnm" => {
            let want = if ext == "pgm" { 1 } else { 3 };
            if ext != "pnm" && img.channels() != want {
                return Err(ImageError::UnsupportedFormat(format!(
                    ".{ext} cannot hold {} channels",
                    img.channels()
                )));
            }
            encode_pnm(img)
        }
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "unknown extension '{other}'"
            )))
        }
    };
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(io_err(path))
}

fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(png_err)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedBitDepth(format!(
            "{:?}-bit PNG",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(ImageError::UnsupportedFormat(format!(
                "PNG color type {other:?}"
            )))
        }
    };
    buf.truncate(info.buffer_size());
    Image::from_u8(info.width as usize, info.height as usize, channels, buf)
}

fn png_err(e: png::DecodingError) -> ImageError {
    match e {
        png::DecodingError::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            ImageError::Truncated(io.to_string())
        }
        png::DecodingError::IoError(io) => ImageError::Truncated(io.to_string()),
        other => ImageError::Malformed(other.to_string()),
    }
}

fn encode_png(img: &Image) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        });
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| ImageError::Malformed(e.to_string()))?;
        w.write_image_data(&img.to_u8_vec())
            .map_err(|e| ImageError::Malformed(e.to_string()))?;
    }
    Ok(out)
}

fn encode_pnm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8_vec());
    out
}

/// Header tokens are whitespace separated; `#` starts a comment running to end of line.
fn pnm_token(bytes: &[u8], pos: &mut usize) -> Result<usize, ImageError> {
    loop {
        match bytes.get(*pos) {
            None => return Err(ImageError::Truncated("PNM header".into())),
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
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::Malformed("non-numeric PNM header field".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::Malformed("PNM header field overflow".into()))
}

fn decode_pnm(bytes: &[u8]) -> Result<Image, ImageError> {
    let channels = if &bytes[..2] == b"P5" { 1 } else { 3 };
    let mut pos = 2;
    let width = pnm_token(bytes, &mut pos)?;
    let height = pnm_token(bytes, &mut pos)?;
    let maxval = pnm_token(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(ImageError::UnsupportedBitDepth(format!("PNM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImageError::Truncated("PNM header".into()));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| ImageError::Malformed("PNM dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(ImageError::Truncated(format!(
            "PNM raster has {} of {n} bytes",
            raster.len()
        )));
    }
    Image::from_u8(width, height, channels, raster[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_decode_identity() {
        let mut bytes = b"P5\n# a comment\n2 2\n255\n".to_vec();
        bytes.extend([0u8, 64, 128, 255]);
        let img = decode(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 1));
        assert_eq!(img.as_u8().unwrap(), &[0, 64, 128, 255]);
    }

    #[test]
    fn ppm_channel_order() {
        let img = Image::from_u8(3, 1, 3, vec![255, 0, 0, 0, 255, 0, 0, 0, 255]).unwrap();
        let bytes = encode_pnm(&img);
        assert!(bytes.starts_with(b"P6\n3 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 9..], &[255, 0, 0, 0, 255, 0, 0, 0, 255]);
    }

    #[test]
    fn truncated_pnm() {
        let mut bytes = b"P5 4 4 255\n".to_vec();
        bytes.extend([0u8; 10]);
        assert!(matches!(decode(&bytes), Err(ImageError::Truncated(_))));
        assert!(matches!(decode(b"P5 4"), Err(ImageError::Truncated(_))));
    }

    #[test]
    fn sixteen_bit_pnm_rejected() {
        let mut bytes = b"P5 1 1 65535\n".to_vec();
        bytes.extend([0u8, 0]);
        assert!(matches!(decode(&bytes), Err(ImageError::UnsupportedBitDepth(_))));
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, 1, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[1, 2]).unwrap();
        }
        assert!(matches!(decode(&out), Err(ImageError::UnsupportedBitDepth(_))));
    }

    #[test]
    fn truncated_png() {
        let img = Image::gray_from_fn(16, 16, |x, y| (x * y) as u8);
        let bytes = encode_png(&img).unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(decode(cut).is_err());
    }

    #[test]
    fn unknown_format() {
        assert!(matches!(decode(b"GIF89a"), Err(ImageError::UnsupportedFormat(_))));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_image("/nonexistent/definitely/missing.png"),
            Err(ImageError::Io { .. })
        ));
    }
}
