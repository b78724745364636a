use std::fs;
use std::path::{Path, PathBuf};

use super::canvas::{PixelCanvas, Provenance};
use crate::error::{Error, Result};

/// Lossless PNG with fixed encoder settings, so equal canvases give equal bytes.
pub fn encode_png(canvas: &PixelCanvas) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, canvas.width, canvas.height);
        enc.set_color(if canvas.channels == 3 {
            png::ColorType::Rgb
        } else {
            png::ColorType::Grayscale
        });
        enc.set_depth(png::BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        enc.set_filter(png::Filter::Adaptive);
        let mut writer = enc.write_header().expect("in-memory png header");
        writer
            .write_image_data(&canvas.pixels)
            .expect("in-memory png data");
    }
    out
}

/// Decodes 8-bit gray, gray+alpha, RGB or RGBA PNGs. Alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<PixelCanvas> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Png("image too large".into()))?];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let (channels, pixels) = match info.color_type {
        png::ColorType::Grayscale => (1, buf),
        png::ColorType::GrayscaleAlpha => (1, buf.chunks_exact(2).map(|p| p[0]).collect()),
        png::ColorType::Rgb => (3, buf),
        png::ColorType::Rgba => (
            3,
            buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        ),
        other => return Err(Error::Png(format!("unsupported color type {other:?}"))),
    };
    let canvas = PixelCanvas::new(info.width, info.height, channels, pixels)?;
    let provenance = Provenance {
        input_sha256: super::sha256_hex(bytes),
        ..Provenance::default()
    };
    Ok(canvas.with_provenance(provenance))
}

/// Directory of rendered canvases keyed by provenance hash: `<key>.png`
/// next to a `<key>.json` provenance sidecar.
#[derive(Debug, Clone)]
pub struct CanvasCache {
    dir: PathBuf,
}

impl CanvasCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn png_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.png"))
    }

    pub fn get(&self, provenance: &Provenance) -> Result<Option<PixelCanvas>> {
        let key = provenance.key();
        let path = self.png_path(&key);
        if !path.exists() {
            return Ok(None);
        }
        let canvas = decode_png(&fs::read(path)?)?;
        Ok(Some(canvas.with_provenance(provenance.clone())))
    }

    /// Writes the PNG and sidecar; returns the cache key.
    pub fn put(&self, canvas: &PixelCanvas) -> Result<String> {
        let key = canvas.provenance.key();
        fs::write(self.png_path(&key), encode_png(canvas))?;
        fs::write(
            self.dir.join(format!("{key}.json")),
            serde_json::to_vec_pretty(&canvas.provenance)?,
        )?;
        Ok(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{render_text, RenderSpec};

    #[test]
    fn uniform_canvas_round_trips() {
        let c = PixelCanvas::uniform(512, 256, 1, 200).unwrap();
        let bytes = encode_png(&c);
        let d = decode_png(&bytes).unwrap();
        assert_eq!((d.width, d.height, d.channels), (512, 256, 1));
        assert!(d.pixels.iter().all(|&v| v == 200));
        assert_eq!(encode_png(&d), bytes);
    }

    #[test]
    fn encoding_is_reproducible() {
        let c = render_text("stable bytes", &RenderSpec::sampled(3)).unwrap();
        assert_eq!(encode_png(&c), encode_png(&c.clone()));
        let rgb = c.to_rgb();
        assert_eq!(decode_png(&encode_png(&rgb)).unwrap().pixels, rgb.pixels);
    }

    #[test]
    fn garbage_is_an_error() {
        assert!(matches!(decode_png(b"not a png"), Err(Error::Png(_))));
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CanvasCache::new(dir.path()).unwrap();
        let c = render_text("cached", &RenderSpec::default()).unwrap();
        assert!(cache.get(&c.provenance).unwrap().is_none());
        let key = cache.put(&c).unwrap();
        assert_eq!(key, c.provenance.key());
        let back = cache.get(&c.provenance).unwrap().unwrap();
        assert_eq!(back.pixels, c.pixels);
        let side: Provenance =
            serde_json::from_slice(&fs::read(dir.path().join(format!("{key}.json"))).unwrap()).unwrap();
        assert_eq!(side, c.provenance);
    }
}
