//! Per-frame SVG drawings of tracked boxes for visual inspection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use depthtrack::io::{self, SequenceData};
use depthtrack::sode::order_detections;
use depthtrack::{Detection, TrackRecord, TrackerConfig};

use crate::{create_dir, CliResult};

/// Stable, well spread hue for a track id.
fn hue(id: u32) -> u32 {
    (id.wrapping_mul(137)) % 360
}

pub(crate) fn write_overlays(
    dir: &Path,
    data: &SequenceData,
    records: &[TrackRecord],
    config: &TrackerConfig,
) -> CliResult<()> {
    create_dir(dir)?;
    let mut by_frame: BTreeMap<u32, Vec<&TrackRecord>> = BTreeMap::new();
    for r in records {
        by_frame.entry(r.frame).or_default().push(r);
    }
    for frame in 1..=data.info.n_frames {
        let recs = by_frame.remove(&frame).unwrap_or_default();
        io::write_text(
            &dir.join(format!("{frame:06}.svg")),
            &render(frame, data, &recs, config),
        )?;
    }
    Ok(())
}

fn render(
    frame: u32,
    data: &SequenceData,
    recs: &[&TrackRecord],
    config: &TrackerConfig,
) -> String {
    let (w, h) = (data.info.img_w, data.info.img_h);
    let mut dets: Vec<Detection> = recs
        .iter()
        .map(|r| Detection::new(frame, r.bbox, r.confidence))
        .collect();
    let order = order_detections(&mut dets, &data.camera, config.depth_mode, config.lambda_q);
    let mut rank = vec![0; recs.len()];
    for (k, &i) in order.iter().enumerate() {
        rank[i] = k + 1;
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r##"<rect width="{w}" height="{h}" fill="#202020"/>"##);
    let _ = writeln!(
        svg,
        r##"<text x="10" y="30" font-size="24" fill="#ffffff">frame {frame}</text>"##
    );
    for (i, r) in recs.iter().enumerate() {
        let b = r.bbox;
        let colour = format!("hsl({},75%,55%)", hue(r.id));
        let _ = writeln!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="{colour}" stroke-width="3"/>"#,
            b.x, b.y, b.w, b.h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="18" fill="{colour}">id {} | order {} (z {})</text>"#,
            b.x,
            b.y - 6.0,
            r.id,
            rank[i],
            dets[i].depth_order.unwrap_or_default()
        );
    }
    svg.push_str("</svg>\n");
    svg
}
