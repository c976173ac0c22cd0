//! JSON and CSV reports. Every number is rounded to six significant digits
//! so reruns and platforms produce identical bytes.

use serde_json::{json, Map, Value};

use crate::binarize::SweepPoint;
use crate::pipeline::{Analysis, Threshold};
use crate::stereology::{mean_sd, ContiguityReport};
use crate::Result;

/// `x` rounded to six significant digits.
pub fn round6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Six-significant-digit text; empty for non-finite values.
pub fn fmt6(x: f64) -> String {
    if x.is_finite() {
        let r = round6(x);
        // normalize negative zero
        if r == 0.0 {
            "0".into()
        } else {
            r.to_string()
        }
    } else {
        String::new()
    }
}

/// Rounds every float inside `v`.
pub fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            serde_json::Number::from_f64(round6(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_value).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, |v| json!(v))
}

fn contiguity_json(r: Option<&ContiguityReport>) -> Value {
    let Some(r) = r else { return Value::Null };
    let dir = |c: &crate::stereology::InterfaceCounts| {
        json!({
            "lines": c.lines,
            "n_ww_per_line": c.n_ww_per_line,
            "n_wb_per_line": c.n_wb_per_line,
            "n_ww_per_um": c.n_ww_per_um,
            "n_wb_per_um": c.n_wb_per_um,
            "clamped_lines": c.clamped_lines,
        })
    };
    json!({
        "mesh_spacing_um": r.mesh_spacing,
        "combined": r.combined,
        "c_horizontal": opt(r.c_horizontal),
        "c_vertical": opt(r.c_vertical),
        "n_ww_per_line": r.n_ww_per_line(),
        "n_wb_per_line": r.n_wb_per_line(),
        "n_ww_per_um": r.n_ww_per_um(),
        "n_wb_per_um": r.n_wb_per_um(),
        "horizontal": dir(&r.horizontal),
        "vertical": dir(&r.vertical),
    })
}

/// Full per-image report.
pub fn analysis_json(name: &str, a: &Analysis) -> Result<Value> {
    let s = &a.summary;
    let seg = &a.segmentation;
    let unfilled = s.unfilled.as_ref();
    let necks: Vec<Value> = seg
        .pairs
        .iter()
        .map(|p| {
            json!({
                "a": [p.a.position.x, p.a.position.y],
                "b": [p.b.position.x, p.b.position.y],
                "length_um": p.neck_length,
                "score": p.score,
            })
        })
        .collect();
    let sweep: Vec<Value> = a
        .mesh_sweep
        .iter()
        .map(|r| {
            json!({
                "variant": r.variant,
                "mesh_spacing_um": r.mesh_spacing,
                "combined": r.combined,
                "n_ww_per_line": r.n_ww_per_line(),
                "n_wb_per_line": r.n_wb_per_line(),
            })
        })
        .collect();
    let mode = match a.config.threshold {
        Threshold::Auto => "auto",
        Threshold::Fixed(_) => "fixed",
    };
    let v = json!({
        "image": name,
        "width": a.cleaned.width(),
        "height": a.cleaned.height(),
        "scale_um_per_px": a.cleaned.scale(),
        "config": serde_json::to_value(&a.config)?,
        "threshold": {"mode": mode, "value": a.threshold, "fallback": a.threshold_fallback},
        "particle_count": s.particle_count,
        "binder_pct": s.binder_pct,
        "particle_diameter_um": {
            "mean": s.particle_diameter.mean,
            "sd": s.particle_diameter.sd,
            "count": s.particle_diameter.count,
            "excluded_border": s.particle_diameter.excluded_border,
        },
        "internal_binder": {
            "count": s.internal_binder.count,
            "mean_um": s.internal_binder.mean_um,
            "pct_of_binder": s.internal_binder.pct_of_binder,
            "pct_of_area": s.internal_binder.pct_of_area,
        },
        "n_ww_per_line": opt(unfilled.map(|r| r.n_ww_per_line())),
        "n_wb_per_line": opt(unfilled.map(|r| r.n_wb_per_line())),
        "n_ww_per_um": opt(unfilled.map(|r| r.n_ww_per_um())),
        "n_wb_per_um": opt(unfilled.map(|r| r.n_wb_per_um())),
        "contiguity": {
            "unfilled": contiguity_json(unfilled),
            "filled": contiguity_json(s.filled.as_ref()),
        },
        "necks": necks,
        "mesh_sweep": sweep,
        "segmentation": {
            "input_pieces": seg.input_pieces,
            "binding_points": seg.binding_points.len(),
            "pairs": seg.pairs.len(),
            "unmatched": seg.unmatched.len(),
            "max_neck_um": if seg.max_neck_um.is_finite() { json!(seg.max_neck_um) } else { Value::Null },
            "drawn_pixels": seg.drawn_pixels,
        },
        "diagnostics": a.diagnostics,
    });
    Ok(round_value(v))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub const PARTICLE_CSV_HEADER: &str = "label,area_um2,diameter_um,perimeter_um,circularity,edge_um,touches_border";

pub fn particles_csv(a: &Analysis) -> String {
    let mut out = String::from(PARTICLE_CSV_HEADER);
    out.push('\n');
    for s in &a.segmentation.per_particle {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.label,
            fmt6(s.area),
            fmt6(s.equivalent_diameter),
            fmt6(s.perimeter),
            fmt6(s.circularity),
            fmt6(s.edge),
            s.touches_border
        ));
    }
    out
}

pub fn threshold_curve_csv(curve: &[SweepPoint]) -> String {
    let mut out = String::from("t,small_particle_count,component_count\n");
    for p in curve {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt6(p.t),
            p.small_particle_count,
            p.component_count
        ));
    }
    out
}

pub fn mesh_sweep_csv(reports: &[ContiguityReport]) -> String {
    let mut out =
        String::from("variant,mesh_spacing_um,combined,c_horizontal,c_vertical,n_ww_per_line,n_wb_per_line\n");
    for r in reports {
        let variant = serde_json::to_value(r.variant)
            .ok()
            .and_then(|v| v.as_str().map(String::from));
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            variant.unwrap_or_default(),
            fmt6(r.mesh_spacing),
            fmt6(r.combined),
            r.c_horizontal.map(fmt6).unwrap_or_default(),
            r.c_vertical.map(fmt6).unwrap_or_default(),
            fmt6(r.n_ww_per_line()),
            fmt6(r.n_wb_per_line())
        ));
    }
    out
}

/// Rows of the batch table: label and JSON pointer into a per-image report.
pub const BATCH_ROWS: [(&str, &str); 10] = [
    ("particle_count", "/particle_count"),
    ("particle_diameter_um", "/particle_diameter_um/mean"),
    ("binder_pct", "/binder_pct"),
    ("n_ww_per_line", "/n_ww_per_line"),
    ("n_wb_per_line", "/n_wb_per_line"),
    ("contiguity", "/contiguity/unfilled/combined"),
    ("n_ww_per_line_filled", "/contiguity/filled/n_ww_per_line"),
    ("n_wb_per_line_filled", "/contiguity/filled/n_wb_per_line"),
    ("contiguity_filled", "/contiguity/filled/combined"),
    ("internal_binder_pct_of_binder", "/internal_binder/pct_of_binder"),
];

/// Cross-image table: one row per parameter, one column per image, then
/// mean and sample sd. Also returns the same data as JSON.
pub fn batch_summary(reports: &[(String, Value)]) -> (String, Value) {
    let mut csv = String::from("parameter");
    for (name, _) in reports {
        csv.push(',');
        csv.push_str(&csv_field(name));
    }
    csv.push_str(",mean,sd\n");
    let mut stats = Map::new();
    for (label, ptr) in BATCH_ROWS {
        let vals: Vec<Option<f64>> = reports
            .iter()
            .map(|(_, r)| r.pointer(ptr).and_then(Value::as_f64))
            .collect();
        let present: Vec<f64> = vals.iter().flatten().copied().collect();
        let (mean, sd) = mean_sd(&present);
        csv.push_str(label);
        for v in &vals {
            csv.push(',');
            csv.push_str(&v.map(fmt6).unwrap_or_default());
        }
        csv.push_str(&format!(",{},{}\n", fmt6(mean), fmt6(sd)));
        stats.insert(
            label.to_string(),
            json!({
                "mean": if mean.is_finite() { json!(mean) } else { Value::Null },
                "sd": if sd.is_finite() { json!(sd) } else { Value::Null },
                "n": present.len(),
            }),
        );
    }
    let images: Vec<Value> = reports
        .iter()
        .map(|(name, r)| {
            let mut row = Map::new();
            row.insert("image".into(), json!(name));
            for (label, ptr) in BATCH_ROWS {
                row.insert(label.into(), r.pointer(ptr).cloned().unwrap_or(Value::Null));
            }
            Value::Object(row)
        })
        .collect();
    (csv, round_value(json!({"images": images, "statistics": stats})))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(round6(0.218_345_67), 0.218346);
        assert_eq!(round6(123_456_789.0), 123_457_000.0);
        assert_eq!(round6(0.0), 0.0);
        assert_eq!(fmt6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt6(f64::NAN), "");
        assert_eq!(fmt6(-0.0), "0");
    }

    #[test]
    fn nested_rounding() {
        let v = round_value(json!({"a": [1.0 / 3.0, 2], "b": {"c": 2.0 / 3.0}}));
        assert_eq!(v, json!({"a": [0.333333, 2], "b": {"c": 0.666667}}));
    }

    #[test]
    fn batch_table_layout() {
        let r = |c: f64| json!({"particle_count": 3, "contiguity": {"unfilled": {"combined": c}}});
        let (csv, js) = batch_summary(&[("a".into(), r(0.2)), ("b".into(), r(0.3))]);
        let line = csv.lines().find(|l| l.starts_with("contiguity,")).unwrap();
        assert_eq!(line, "contiguity,0.2,0.3,0.25,0.0707107");
        assert_eq!(js["statistics"]["contiguity"]["n"], 2);
        assert!(csv.starts_with("parameter,a,b,mean,sd\n"));
    }
}
