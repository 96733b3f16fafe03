use super::Image;

pub fn flip_horizontal(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            out.set_pixel(w - 1 - x, y, img.pixel(x, y));
        }
    }
    out
}

pub fn flip_vertical(img: &Image) -> Image {
    let row = img.width() as usize * 3;
    let mut pixels = Vec::with_capacity(img.pixels().len());
    for chunk in img.pixels().chunks_exact(row).rev() {
        pixels.extend_from_slice(chunk);
    }
    Image::new(img.width(), img.height(), pixels).expect("same dimensions")
}

/// Horizontal and vertical flip combined (a 180 degree rotation), so the
/// dimensions of non-square images are preserved.
pub fn flip_diagonal(img: &Image) -> Image {
    let mut pixels: Vec<[u8; 3]> = img
        .pixels()
        .chunks_exact(3)
        .map(|p| [p[0], p[1], p[2]])
        .collect();
    pixels.reverse();
    Image::new(img.width(), img.height(), pixels.concat()).expect("same dimensions")
}

/// `[original, horizontal, vertical, diagonal]`.
pub fn augment_flips(img: &Image) -> [Image; 4] {
    [
        img.clone(),
        flip_horizontal(img),
        flip_vertical(img),
        flip_diagonal(img),
    ]
}
