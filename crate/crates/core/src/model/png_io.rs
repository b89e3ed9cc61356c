use png::{BitDepth, ColorType, Compression, Decoder, Encoder, FilterType, Transformations};

use super::raster::{Channels, RasterImage};
use crate::error::{Error, Result};

/// Decodes an 8-bit PNG. Palette and sub-byte depths are expanded; gray with
/// alpha becomes RGBA. 16-bit images are rejected.
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage> {
    let mut decoder = Decoder::new(bytes);
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::MalformedImage(e.to_string()))?;
    let (color, depth) = reader.output_color_type();
    if depth != BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!("{depth:?}-bit samples")));
    }
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::MalformedImage(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    let (w, h) = (frame.width, frame.height);
    let stride = frame.line_size;
    let row_bytes = |n: usize| w as usize * n;

    let (channels, data) = match color {
        ColorType::Grayscale => (Channels::Gray8, compact(&buf, stride, row_bytes(1), h)),
        ColorType::Rgb => (Channels::Rgb8, compact(&buf, stride, row_bytes(3), h)),
        ColorType::Rgba => (Channels::Rgba8, compact(&buf, stride, row_bytes(4), h)),
        ColorType::GrayscaleAlpha => {
            let ga = compact(&buf, stride, row_bytes(2), h);
            let mut rgba = Vec::with_capacity(ga.len() * 2);
            for px in ga.chunks_exact(2) {
                rgba.extend_from_slice(&[px[0], px[0], px[0], px[1]]);
            }
            (Channels::Rgba8, rgba)
        }
        ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("unexpanded palette".into()));
        }
    };
    RasterImage::new(w, h, channels, data)
}

fn compact(buf: &[u8], stride: usize, row: usize, h: u32) -> Vec<u8> {
    if stride == row {
        return buf[..row * h as usize].to_vec();
    }
    let mut out = Vec::with_capacity(row * h as usize);
    for y in 0..h as usize {
        out.extend_from_slice(&buf[y * stride..y * stride + row]);
    }
    out
}

/// Encodes with fixed compression and filter settings so identical images
/// always produce identical bytes.
pub fn encode_image(img: &RasterImage) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, img.width(), img.height());
        enc.set_color(match img.channels() {
            Channels::Gray8 => ColorType::Grayscale,
            Channels::Rgb8 => ColorType::Rgb,
            Channels::Rgba8 => ColorType::Rgba,
        });
        enc.set_depth(BitDepth::Eight);
        enc.set_compression(Compression::Default);
        enc.set_filter(FilterType::Sub);
        let mut writer = enc.write_header().expect("in-memory PNG header");
        writer
            .write_image_data(img.data())
            .expect("in-memory PNG data");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::content_hash;
    use proptest::prelude::*;

    #[test]
    fn opaque_red_square() {
        let png = encode_image(&RasterImage::filled(2, 2, &[255, 0, 0]));
        let img = decode_image(&png).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert_eq!(img.channels(), Channels::Rgb8);
        assert_eq!(img.data(), [255, 0, 0].repeat(4).as_slice());
    }

    #[test]
    fn transparent_black_keeps_zero_alpha() {
        let img = RasterImage::filled(1, 1, &[0, 0, 0, 0]);
        let back = decode_image(&encode_image(&img)).unwrap();
        assert_eq!(back.channels(), Channels::Rgba8);
        assert_eq!(back.data(), &[0, 0, 0, 0]);
    }

    #[test]
    fn zero_alpha_pixels_keep_their_color_bytes() {
        let img = RasterImage::from_fn_rgba(4, 4, |x, y| [x as u8 * 60, y as u8 * 60, 9, if (x + y) % 2 == 0 { 0 } else { 255 }]);
        let back = decode_image(&encode_image(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn encoding_is_deterministic() {
        let img = RasterImage::from_fn_rgb(17, 9, |x, y| [x as u8, y as u8, 3]);
        let a = encode_image(&img);
        let b = encode_image(&img);
        assert_eq!(a, b);
        assert_eq!(content_hash(&a), content_hash(&b));
    }

    #[test]
    fn truncated_png_is_malformed() {
        let png = encode_image(&RasterImage::filled(8, 8, &[1, 2, 3]));
        let err = decode_image(&png[..png.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::MalformedImage(_)), "{err:?}");
        assert!(matches!(decode_image(b"not a png"), Err(Error::MalformedImage(_))));
    }

    #[test]
    fn sixteen_bit_is_unsupported() {
        let mut out = Vec::new();
        {
            let mut enc = Encoder::new(&mut out, 1, 1);
            enc.set_color(ColorType::Grayscale);
            enc.set_depth(BitDepth::Sixteen);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0x12, 0x34]).unwrap();
        }
        assert!(matches!(decode_image(&out), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn gray_alpha_expands_to_rgba() {
        let mut out = Vec::new();
        {
            let mut enc = Encoder::new(&mut out, 1, 1);
            enc.set_color(ColorType::GrayscaleAlpha);
            enc.set_depth(BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[40, 128]).unwrap();
        }
        assert_eq!(decode_image(&out).unwrap().data(), &[40, 40, 40, 128]);
    }

    fn arb_image() -> impl Strategy<Value = RasterImage> {
        (1u32..12, 1u32..12, 0usize..3).prop_flat_map(|(w, h, c)| {
            let channels = [Channels::Gray8, Channels::Rgb8, Channels::Rgba8][c];
            proptest::collection::vec(any::<u8>(), (w * h) as usize * channels.count())
                .prop_map(move |data| RasterImage::new(w, h, channels, data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(img in arb_image()) {
            let once = decode_image(&encode_image(&img)).unwrap();
            prop_assert_eq!(&once, &img);
            let twice = decode_image(&encode_image(&once)).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
