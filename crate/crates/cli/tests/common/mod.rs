#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpi_stereo::io::{write_depth, write_image, BitDepth};
use mpi_stereo_core::{DepthMap, ImageBuffer};
use serde_json::Value;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpi-stereo"))
}

pub fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Runs the binary and returns stdout parsed as JSON, failing loudly on a
/// non-zero exit.
pub fn run_ok(args: &[&str]) -> Value {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Runs the binary expecting failure; returns the parsed stderr error line.
pub fn run_err(args: &[&str]) -> (Output, Value) {
    let out = bin().args(args).output().unwrap();
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or("").to_string();
    let v = serde_json::from_str(&line).unwrap_or_else(|e| panic!("stderr {line:?}: {e}"));
    (out, v)
}

fn type_matches(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        _ => false,
    }
}

/// Checks the keyword subset the shipped schemas use: `type`, `const`,
/// `enum`, `properties`, `required`, `additionalProperties: false`, `items`,
/// `minItems`, `minimum`, `exclusiveMinimum`, `minLength`, `maxLength`.
pub fn validate(v: &Value, s: &Value) -> Result<(), String> {
    validate_at(v, s, "$")
}

fn validate_at(v: &Value, s: &Value, at: &str) -> Result<(), String> {
    let fail = |m: String| Err(format!("{at}: {m}"));
    if let Some(t) = s.get("type") {
        let ok = match t {
            Value::String(t) => type_matches(v, t),
            Value::Array(ts) => ts
                .iter()
                .filter_map(Value::as_str)
                .any(|t| type_matches(v, t)),
            _ => false,
        };
        if !ok {
            return fail(format!("{v} is not of type {t}"));
        }
    }
    if let Some(c) = s.get("const") {
        if v != c {
            return fail(format!("{v} != {c}"));
        }
    }
    if let Some(Value::Array(options)) = s.get("enum") {
        if !options.contains(v) {
            return fail(format!("{v} not in {options:?}"));
        }
    }
    if let Some(x) = v.as_f64() {
        if let Some(m) = s.get("minimum").and_then(Value::as_f64) {
            if x < m {
                return fail(format!("{x} < {m}"));
            }
        }
        if let Some(m) = s.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= m {
                return fail(format!("{x} <= {m}"));
            }
        }
    }
    if let Some(text) = v.as_str() {
        let n = text.chars().count() as u64;
        if s.get("minLength")
            .and_then(Value::as_u64)
            .is_some_and(|m| n < m)
            || s.get("maxLength")
                .and_then(Value::as_u64)
                .is_some_and(|m| n > m)
        {
            return fail(format!("length {n} of {text:?}"));
        }
    }
    if let Some(obj) = v.as_object() {
        let props = s.get("properties").and_then(Value::as_object);
        if let Some(Value::Array(req)) = s.get("required") {
            for k in req.iter().filter_map(Value::as_str) {
                if !obj.contains_key(k) {
                    return fail(format!("missing {k}"));
                }
            }
        }
        for (k, child) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(ps) => validate_at(child, ps, &format!("{at}.{k}"))?,
                None if s.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return fail(format!("unexpected key {k}"))
                }
                None => {}
            }
        }
    }
    if let Some(items) = v.as_array() {
        if let Some(m) = s.get("minItems").and_then(Value::as_u64) {
            if (items.len() as u64) < m {
                return fail(format!("{} items < {m}", items.len()));
            }
        }
        if let Some(is) = s.get("items") {
            for (i, child) in items.iter().enumerate() {
                validate_at(child, is, &format!("{at}[{i}]"))?;
            }
        }
    }
    Ok(())
}

pub fn assert_schema(v: &Value, name: &str) {
    if let Err(e) = validate(v, &schema(name)) {
        panic!("{name} schema: {e}\n{v:#}");
    }
}

/// Smooth deterministic test photo.
pub fn test_image(h: usize, w: usize, seed: usize) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, 3, |y, x, c| {
        let t = (x * (3 + c) + y * (5 + seed) + 7 * c + seed) % 97;
        0.1 + 0.8 * t as f32 / 96.0
    })
    .unwrap()
}

/// Left-to-right disparity ramp with a near square in the middle.
pub fn test_depth(h: usize, w: usize) -> DepthMap {
    let data = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            let near = (h / 4..3 * h / 4).contains(&y) && (w / 4..3 * w / 4).contains(&x);
            if near {
                0.9
            } else {
                0.1 + 0.3 * x as f32 / w as f32
            }
        })
        .collect();
    DepthMap::new(h, w, data).unwrap()
}

pub fn write_png(path: &Path, img: &ImageBuffer, bits: BitDepth) -> PathBuf {
    write_image(path, img, bits).unwrap();
    path.to_path_buf()
}

pub fn write_depth_png(path: &Path, depth: &DepthMap) -> PathBuf {
    write_depth(path, depth).unwrap();
    path.to_path_buf()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
