//! Static SVG charts and the descriptor colour image.

use std::fmt::Write as _;

use vessel_core::harmonics::{canonicalize_open_curve, descriptors, CanonicalFrame, HarmonicsError};
use vessel_core::raster::ColorImage;
use vessel_core::vesselgraph::{ExtendedVessel, VesselProfile};
use vessel_core::Complex64;

pub const SUMMARY_FILE: &str = "tortuosity_histogram.svg";

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 40.0;
const HIST_BINS: usize = 20;

/// Series drawn in a vessel chart.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselPanels {
    pub original: Vec<(f64, f64)>,
    /// Signed curvature against sample index.
    pub curvature: Vec<(f64, f64)>,
    /// Reconstructed offset from the chord against sample index.
    pub offset: Vec<(f64, f64)>,
    /// Its derivative with respect to the sample index.
    pub slope: Vec<(f64, f64)>,
}

impl VesselPanels {
    pub fn of(p: &VesselProfile) -> Self {
        let idx = |i: usize, v: f64| (i as f64, v);
        let frame = CanonicalFrame::of(&p.original).ok();
        let (offset, slope) = match frame {
            Some(f) => (
                p.reconstruction.iter().enumerate().map(|(i, &q)| idx(i, f.apply(q).im)).collect(),
                p.derivative
                    .iter()
                    .enumerate()
                    .map(|(i, &(dx, dy))| idx(i, (Complex64::new(dx, dy) * f.rotation).im))
                    .collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        Self {
            original: p.original.clone(),
            curvature: p.curvature.iter().enumerate().map(|(i, &k)| idx(i, k)).collect(),
            offset,
            slope,
        }
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    // flat series are drawn on the centre line
    let span = hi - lo;
    if span < 1e-9 * lo.abs().max(1.0) {
        let mid = if lo.abs() < 1e-9 { 0.0 } else { lo };
        return (mid - 1.0, mid + 1.0);
    }
    (lo - 0.05 * span, hi + 0.05 * span)
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Frame {
    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let fx = (x - self.xr.0) / (self.xr.1 - self.xr.0);
        let fy = (y - self.yr.0) / (self.yr.1 - self.yr.0);
        (self.x0 + fx * self.w, self.y0 + (1.0 - fy) * self.h)
    }

    fn polyline(&self, svg: &mut String, pts: &[(f64, f64)], color: &str, class: &str) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = self.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{class}" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            coords.join(" ")
        );
    }

    fn axes(&self, svg: &mut String, title: &str) {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            self.x0,
            self.y0 - 6.0,
            escape(title)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{:.3e}</text>"#,
            self.x0 - 4.0,
            self.y0 + 10.0,
            self.yr.1
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{:.3e}</text>"#,
            self.x0 - 4.0,
            self.y0 + self.h,
            self.yr.0
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn panel(row: usize, xr: (f64, f64), yr: (f64, f64)) -> Frame {
    Frame {
        x0: MARGIN * 2.0,
        y0: MARGIN + row as f64 * (PANEL_H + MARGIN),
        w: WIDTH - MARGIN * 3.0,
        h: PANEL_H,
        xr,
        yr,
    }
}

/// Three stacked panels: original points, curvature profile, and the
/// reconstructed offset from the chord with its derivative.
pub fn vessel_svg(title: &str, profile: &VesselProfile, tortuosity: f64) -> String {
    let p = VesselPanels::of(profile);
    let height = MARGIN + 3.0 * (PANEL_H + MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(svg, r#"<title>{}</title>"#, escape(title));

    // image y grows downwards, so flip it for display
    let flipped: Vec<(f64, f64)> = p.original.iter().map(|&(x, y)| (x, -y)).collect();
    let top = panel(0, bounds(flipped.iter().map(|q| q.0)), bounds(flipped.iter().map(|q| q.1)));
    top.axes(&mut svg, &format!("{title}: original points, tortuosity {tortuosity:.4}"));
    top.polyline(&mut svg, &flipped, "#333", "original");

    let n = p.curvature.len().max(2) as f64;
    let mid = panel(1, (0.0, n - 1.0), bounds(p.curvature.iter().map(|q| q.1)));
    mid.axes(&mut svg, "curvature");
    mid.polyline(&mut svg, &p.curvature, "#c33", "curvature");

    let bottom = panel(2, (0.0, n - 1.0), bounds(p.offset.iter().map(|q| q.1)));
    bottom.axes(&mut svg, "reconstruction (blue) and derivative (green)");
    bottom.polyline(&mut svg, &p.offset, "#36c", "reconstruction");
    let deriv = panel(2, (0.0, n - 1.0), bounds(p.slope.iter().map(|q| q.1)));
    deriv.polyline(&mut svg, &p.slope, "#393", "derivative");
    svg.push_str("</svg>\n");
    svg
}

/// Bin counts of `values` over `[0, max]` in `HIST_BINS` equal bins.
pub fn histogram(values: &[f64]) -> (f64, Vec<usize>) {
    let max = values.iter().copied().fold(0.0, f64::max);
    let top = if max > 0.0 { max } else { 1.0 };
    let mut counts = vec![0; HIST_BINS];
    for &v in values {
        let b = ((v / top) * HIST_BINS as f64) as usize;
        counts[b.min(HIST_BINS - 1)] += 1;
    }
    (top, counts)
}

pub fn tortuosity_histogram_svg(values: &[f64]) -> String {
    let (top, counts) = histogram(values);
    let peak = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let height = PANEL_H + 2.0 * MARGIN;
    let frame = panel(0, (0.0, top), (0.0, peak));
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    frame.axes(&mut svg, &format!("tortuosity of {} vessels", values.len()));
    let bw = frame.w / HIST_BINS as f64;
    for (i, &c) in counts.iter().enumerate() {
        let h = frame.h * c as f64 / peak;
        let _ = writeln!(
            svg,
            r##"<rect class="bin" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#69c" data-count="{c}"/>"##,
            frame.x0 + i as f64 * bw,
            frame.y0 + frame.h - h,
            bw,
            h
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{top:.4}</text>"#,
        frame.x0 + frame.w,
        frame.y0 + frame.h + 14.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// Magnitudes of harmonics 0, 2 and 1 of the retraced canonical curve; for
/// `k > 0` the positive and negative frequencies are combined.
pub fn harmonic_magnitudes(points: &[(f64, f64)]) -> Result<[f64; 3], HarmonicsError> {
    let d = descriptors(&canonicalize_open_curve(points)?)?;
    let c = d.coefficients();
    let n = c.len();
    let mag = |k: usize| {
        if k == 0 || k >= n {
            c.get(k).map_or(0.0, |z| z.norm())
        } else {
            (c[k].norm_sqr() + c[n - k].norm_sqr()).sqrt()
        }
    };
    Ok([mag(0), mag(2), mag(1)])
}

/// Vessel pixels coloured by [`harmonic_magnitudes`], each channel divided
/// by its maximum over the image.
pub fn descriptor_image(width: usize, height: usize, vessels: &[ExtendedVessel]) -> Result<ColorImage, HarmonicsError> {
    let mags: Vec<[f64; 3]> = vessels.iter().map(|v| harmonic_magnitudes(&v.points)).collect::<Result<_, _>>()?;
    let mut max = [0.0f64; 3];
    for m in &mags {
        for c in 0..3 {
            max[c] = max[c].max(m[c]);
        }
    }
    let mut data = vec![0u8; width * height * 3];
    for (v, m) in vessels.iter().zip(&mags) {
        let rgb: Vec<u8> =
            (0..3).map(|c| if max[c] > 0.0 { (255.0 * m[c] / max[c]).round() as u8 } else { 0 }).collect();
        for &(x, y) in &v.points {
            let (px, py) = (x.round() as usize, y.round() as usize);
            if px < width && py < height {
                let at = 3 * (py * width + px);
                data[at..at + 3].copy_from_slice(&rgb);
            }
        }
    }
    Ok(ColorImage::new(width, height, data).expect("sizes match"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vessel_core::vesselgraph::vessel_profile;

    fn polylines(svg: &str, class: &str) -> Vec<Vec<(f64, f64)>> {
        let tag = format!(r#"class="{class}""#);
        svg.lines()
            .filter(|l| l.contains(&tag))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
                pts.split(' ')
                    .map(|p| {
                        let (x, y) = p.split_once(',').unwrap();
                        (x.parse().unwrap(), y.parse().unwrap())
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn straight_vessel_has_flat_zero_curvature() {
        let v =
            ExtendedVessel::from_points((0..60).map(|i| (5.0 + i as f64, 10.0 + 0.5 * i as f64)).collect()).unwrap();
        let svg = vessel_svg("line", &vessel_profile(&v, Some(24)).unwrap(), 0.0);
        let curves = polylines(&svg, "curvature");
        assert_eq!(curves.len(), 1);
        let y0 = curves[0][0].1;
        assert!(curves[0].iter().all(|p| p.1 == y0));
        // flat series sit on the panel's centre line, where zero is
        let f = panel(1, (0.0, 1.0), (-1.0, 1.0));
        assert!((y0 - f.map((0.0, 0.0)).1).abs() < 0.01);
    }

    #[test]
    fn chart_has_three_panels() {
        let v =
            ExtendedVessel::from_points((0..50).map(|i| (i as f64, (i as f64 * 0.2).sin() * 4.0)).collect()).unwrap();
        let svg = vessel_svg("s", &vessel_profile(&v, Some(8)).unwrap(), 1.0);
        for class in ["original", "curvature", "reconstruction", "derivative"] {
            assert_eq!(polylines(&svg, class).len(), 1, "{class}");
        }
        assert_eq!(svg.matches("<rect").count(), 3);
    }

    #[test]
    fn histogram_counts_every_value() {
        let (top, counts) = histogram(&[0.0, 0.5, 1.0, 1.0, 2.0]);
        assert_eq!(top, 2.0);
        assert_eq!(counts.iter().sum::<usize>(), 5);
        assert_eq!(counts[0], 1);
        assert_eq!(counts[HIST_BINS - 1], 1);
        let svg = tortuosity_histogram_svg(&[]);
        assert_eq!(svg.matches(r#"class="bin""#).count(), HIST_BINS);
    }

    #[test]
    fn descriptor_channels_are_normalized() {
        let line = ExtendedVessel::from_points((0..40).map(|i| (i as f64, 5.0)).collect()).unwrap();
        let bent = ExtendedVessel::from_points(
            (0..40).map(|i| (i as f64, 20.0 + 6.0 * (i as f64 / 39.0 * std::f64::consts::PI).sin())).collect(),
        )
        .unwrap();
        let img = descriptor_image(50, 30, &[line, bent]).unwrap();
        let rgb = img.pixel(10, 5);
        let other = img.pixel(10, 24);
        for c in 0..3 {
            assert_eq!(rgb[c].max(other[c]), 255);
        }
        assert_eq!(img.pixel(0, 0), [0, 0, 0]);
    }
}
