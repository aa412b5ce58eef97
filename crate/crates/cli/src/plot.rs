use std::fmt::Write as _;

use clustercrop::io::{read_detections_json, read_regions_json, write_atomic};

use crate::args::PlotArgs;
use crate::CliError;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22",
];

pub fn plot(a: &PlotArgs) -> Result<(), CliError> {
    let regions = match &a.regions {
        Some(p) => read_regions_json(p)?,
        None => Vec::new(),
    };
    let mut dets = match &a.dets {
        Some(p) => read_detections_json(p)?,
        None => Vec::new(),
    };
    if let Some(id) = a.image_id {
        dets.retain(|d| d.image_id == id);
    }
    // Low scores first so confident boxes are drawn on top.
    dets.sort_by(|x, y| x.score.total_cmp(&y.score));

    let (w, h) = (a.image_size.w, a.image_size.h);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff" stroke="#000000"/>"##
    );
    for (i, r) in regions.iter().enumerate() {
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#ff7f0e" fill-opacity="0.08" stroke="#ff7f0e" stroke-width="2" stroke-dasharray="8 4"><title>region {i} density {}</title></rect>"##,
            r.left, r.top, r.width, r.height, r.density
        );
    }
    for d in &dets {
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="{}" stroke-opacity="{:.3}" stroke-width="1"/>"#,
            d.cx - d.w / 2.0,
            d.cy - d.h / 2.0,
            d.w,
            d.h,
            PALETTE[d.category % PALETTE.len()],
            d.score.clamp(0.15, 1.0)
        );
    }
    svg.push_str("</svg>\n");
    write_atomic(&a.out, svg.as_bytes())?;
    Ok(())
}
