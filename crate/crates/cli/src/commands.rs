use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use clustercrop::evaluation::{evaluate, EvalParams, ImageRecords};
use clustercrop::fusion::{clamp_to_image, fuse};
use clustercrop::heatmap::{decode, encode};
use clustercrop::io::{
    format_detections_json, format_regions_json, json_string, read_annotations,
    read_detections_json, read_heatmap, read_regions_json, write_annotations, write_atomic,
    write_heatmap, write_json, AnnotationRecord, DetectionRecord,
};
use clustercrop::lsm::{crop_and_rescale, lsm_pipeline};
use clustercrop::synthetic::{generate_scene, run_suite, PipelineMode};
use clustercrop::{CropTransform, Detection, PseudoDetectorConfig};
use log::{debug, info};

use crate::args::{
    BenchArgs, Command, DecodeArgs, EncodeArgs, EvalArgs, FuseArgs, LsmArgs, Mode, SynthArgs,
};
use crate::plot::plot;
use crate::CliError;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Encode(a) => cmd_encode(&a),
        Command::Decode(a) => cmd_decode(&a),
        Command::Lsm(a) => cmd_lsm(&a),
        Command::Fuse(a) => cmd_fuse(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Plot(a) => plot(&a),
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Writes `text` atomically to `out`, or to stdout when no path is given.
fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            info!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_encode(a: &EncodeArgs) -> Result<(), CliError> {
    let records = read_annotations(&a.annotations)?;
    let objects: Vec<_> = records
        .iter()
        .filter(|r| !a.ignore_categories.contains(&r.category))
        .map(|r| (r.to_box(), r.category as usize))
        .collect();
    let channels = a
        .channels
        .unwrap_or_else(|| objects.iter().map(|(_, c)| c + 1).max().unwrap_or(1));
    let hm = encode(&objects, channels, a.size.h, a.size.w).map_err(usage)?;
    debug!("encoded {} objects into {channels} channels", objects.len());
    write_heatmap(&hm, &a.out)?;
    Ok(())
}

fn cmd_decode(a: &DecodeArgs) -> Result<(), CliError> {
    if !(a.smooth_sigma.is_finite() && a.smooth_sigma >= 0.0) {
        return Err(usage(format!(
            "--smooth-sigma must be finite and >= 0, got {}",
            a.smooth_sigma
        )));
    }
    let hm = read_heatmap(&a.heatmap)?;
    let peaks = decode(&hm, a.top_n, a.smooth_sigma).map_err(usage)?;
    emit(&json_string(&peaks), a.out.as_deref())
}

fn cmd_lsm(a: &LsmArgs) -> Result<(), CliError> {
    let cfg = a.config();
    cfg.validate().map_err(usage)?;
    let hm = read_heatmap(&a.heatmap)?;
    let regions = lsm_pipeline(&hm, &cfg).map_err(usage)?;
    info!("selected {} regions", regions.len());
    emit(&format_regions_json(&regions), a.out.as_deref())
}

fn group_by_image(records: &[DetectionRecord]) -> BTreeMap<u64, Vec<Detection>> {
    let mut map: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for r in records {
        map.entry(r.image_id).or_default().push(r.detection());
    }
    map
}

fn cmd_fuse(a: &FuseArgs) -> Result<(), CliError> {
    let global = group_by_image(&read_detections_json(&a.global)?);
    let regions = read_regions_json(&a.regions)?;
    if regions.len() != a.crop_dets.len() {
        return Err(usage(format!(
            "{} regions but {} --crop-dets files",
            regions.len(),
            a.crop_dets.len()
        )));
    }
    let target = (a.target.w as f64, a.target.h as f64);
    let mut crops: Vec<(CropTransform, BTreeMap<u64, Vec<Detection>>)> = Vec::new();
    for (region, path) in regions.iter().zip(&a.crop_dets) {
        let t = crop_and_rescale(region, target)
            .map_err(|e| CliError::Format(format!("{}: {e}", a.regions.display())))?;
        crops.push((t, group_by_image(&read_detections_json(path)?)));
    }

    let images: BTreeSet<u64> = global
        .keys()
        .chain(crops.iter().flat_map(|(_, m)| m.keys()))
        .copied()
        .collect();
    let mut out = Vec::new();
    for id in images {
        let per_crop: Vec<(CropTransform, Vec<Detection>)> = crops
            .iter()
            .map(|(t, m)| (*t, m.get(&id).cloned().unwrap_or_default()))
            .collect();
        let mut fused = fuse(global.get(&id).map_or(&[][..], |v| v.as_slice()), &per_crop);
        if let Some(size) = a.image_size {
            clamp_to_image(&mut fused, size.w as f64, size.h as f64);
        }
        out.extend(fused.iter().map(|d| DetectionRecord::new(id, d)));
    }
    emit(&format_detections_json(&out), a.out.as_deref())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let mut images: Vec<ImageRecords> = Vec::with_capacity(a.gt.len());
    for path in &a.gt {
        let gts = read_annotations(path)?
            .iter()
            .map(|r| r.to_ground_truth(&a.ignore_categories))
            .collect();
        images.push(ImageRecords {
            gts,
            dets: Vec::new(),
        });
    }
    for r in read_detections_json(&a.dets)? {
        let slot = usize::try_from(r.image_id)
            .ok()
            .and_then(|i| images.get_mut(i))
            .ok_or_else(|| {
                CliError::Format(format!(
                    "{}: image_id {} has no ground-truth file ({} given)",
                    a.dets.display(),
                    r.image_id,
                    a.gt.len()
                ))
            })?;
        slot.dets.push(r.detection());
    }
    let params = EvalParams {
        max_dets: a.max_dets,
        ..EvalParams::default()
    };
    let report = evaluate(&images, &params);
    print!("{}", report.to_table());
    if let Some(path) = &a.out {
        write_json(&report, path)?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    a.scene.config(a.seed).validate().map_err(usage)?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| CliError::Format(format!("{}: {e}", a.out_dir.display())))?;
    for i in 0..a.scenes {
        let scene = generate_scene(&a.scene.config(a.seed.wrapping_add(i as u64)));
        // Annotation files reserve category 0 for ignored regions.
        let records: Vec<AnnotationRecord> = scene
            .objects
            .iter()
            .map(|g| AnnotationRecord {
                category: g.category as u32 + 1,
                ..AnnotationRecord::from_ground_truth(g)
            })
            .collect();
        let path = a.out_dir.join(format!("scene_{i:04}.txt"));
        write_annotations(&records, &path)?;
        info!("wrote {} objects to {}", records.len(), path.display());
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let scene_cfg = a.scene.config(a.seed);
    scene_cfg.validate().map_err(usage)?;
    let det = PseudoDetectorConfig {
        size_floor: a.size_floor,
        noise_coeff: a.noise_coeff,
        score_jitter: a.score_jitter,
        seed: a.seed,
    };
    det.validate().map_err(usage)?;
    let lsm = clustercrop::LsmConfig {
        grid_cols: a.grid.w,
        grid_rows: a.grid.h,
        top_k: a.top_k,
        max_crops: a.k,
        enlarge: a.enlarge,
        threshold: a.threshold,
    };
    let (mode, name, settings) = match a.mode {
        Mode::Global => (PipelineMode::GlobalOnly, "global", serde_json::Value::Null),
        Mode::Uniform => (
            PipelineMode::Uniform { crops: a.crops },
            "uniform",
            serde_json::json!({ "crops": a.crops }),
        ),
        Mode::Lsm => {
            lsm.validate().map_err(usage)?;
            (
                PipelineMode::Lsm(lsm),
                "lsm",
                serde_json::to_value(lsm).expect("plain data serializes"),
            )
        }
    };
    let scenes: Vec<_> = (0..a.scenes)
        .map(|i| a.scene.config(a.seed.wrapping_add(i as u64)))
        .collect();

    let start = Instant::now();
    let report = run_suite(&scenes, &mode, &det);
    let elapsed = start.elapsed();
    eprintln!(
        "bench: mode {name}, {} scenes in {:.3} s ({:.2} ms/scene)",
        a.scenes,
        elapsed.as_secs_f64(),
        1e3 * elapsed.as_secs_f64() / a.scenes.max(1) as f64
    );

    let doc = serde_json::json!({
        "mode": name,
        "settings": settings,
        "seed": a.seed,
        "scene": scene_cfg,
        "detector": det,
        "report": report,
    });
    emit(&json_string(&doc), a.report.as_deref())
}
